import math

import pytest

from lshnet.autotune import AutotuneConfig, autotune, plan_cost_ratio
from lshnet.errors import InfeasibleSparsity


def brute_force_plan(d, s, cfg=AutotuneConfig()):
    """Independent oracle: maximize L over K in [1, 32] under all three
    constraints; ties broken toward larger K (larger K never hurts once L ties)."""
    best = None
    for k in range(1, 33):
        l = max(1, math.floor(cfg.c1 * s * 2**k + 0.5))
        if l > cfg.l_max:
            continue
        if k * l + s * d > cfg.c2 * d:
            continue
        if best is None or l >= best[1]:
            best = (k, l)
    return best


def test_amazon_scale_example():
    plan = autotune(670091, 128, 0.05)
    assert (plan.k_bits, plan.num_tables, plan.bucket_cap) == (12, 205, 328)


def test_second_example():
    plan = autotune(100000, 128, 0.01)
    assert (plan.k_bits, plan.num_tables, plan.bucket_cap) == (14, 164, 13)


def test_infeasible_when_budget_zero():
    with pytest.raises(InfeasibleSparsity):
        autotune(10000, 128, 0.1)


def test_infeasible_message_is_actionable():
    with pytest.raises(InfeasibleSparsity, match="sparsity|c2"):
        autotune(100, 16, 0.099)


@pytest.mark.parametrize("d", [10**3, 10**4, 10**5, 10**6])
@pytest.mark.parametrize("s", [0.005, 0.01, 0.02, 0.05])
def test_matches_brute_force_oracle(d, s):
    expected = brute_force_plan(d, s)
    if expected is None:
        with pytest.raises(InfeasibleSparsity):
            autotune(d, 128, s)
        return
    plan = autotune(d, 128, s)
    assert (plan.k_bits, plan.num_tables) == expected


@pytest.mark.parametrize("d,s", [(670091, 0.05), (100000, 0.01), (12345, 0.02)])
def test_feasibility_exact(d, s):
    plan = autotune(d, 128, s)
    cfg = plan.config
    l_check = max(1, math.floor(cfg.c1 * s * 2**plan.k_bits + 0.5))
    assert plan.num_tables == l_check
    assert plan.k_bits * plan.num_tables + s * d <= cfg.c2 * d
    assert plan.num_tables <= cfg.l_max
    assert plan.bucket_cap == math.ceil(2 * d / 2**plan.k_bits)


def test_monotone_in_c2():
    prev_l = 0
    for c2 in [0.06, 0.08, 0.1, 0.2, 0.4]:
        plan = autotune(10**5, 128, 0.05, AutotuneConfig(c2=c2))
        assert plan.num_tables >= prev_l
        prev_l = plan.num_tables


def test_cost_ratio_examples():
    plan = autotune(670091, 128, 0.05)
    assert plan_cost_ratio(plan) == pytest.approx((12 * 205 + 0.05 * 670091) / 670091)
    assert plan_cost_ratio(plan) == pytest.approx(0.05367, abs=1e-4)
    plan2 = autotune(100000, 128, 0.01)
    assert plan_cost_ratio(plan2) == pytest.approx(0.03296, abs=1e-5)


def test_cost_ratio_within_budget():
    for d in (10**3, 10**4, 10**5):
        for s in (0.005, 0.02, 0.05):
            try:
                plan = autotune(d, 128, s)
            except InfeasibleSparsity:
                continue
            assert plan_cost_ratio(plan) <= 0.1


def test_config_validation():
    with pytest.raises(ValueError):
        AutotuneConfig(c1=0)
    with pytest.raises(ValueError):
        AutotuneConfig(c2=1.0)
    with pytest.raises(ValueError):
        autotune(1, 4, 0.05)
    with pytest.raises(ValueError):
        autotune(100, 4, 1.5)
