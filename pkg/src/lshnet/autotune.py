"""Automatic selection of the sparsity hyperparameters (K, L, R).

Given a layer of width d, input width d_prev and target sparsity s, pick the
number of hash bits K, table count L and bucket cap R so that the expected
number of sampled neurons covers s*d while the hashing overhead stays inside
a configurable fraction of the dense cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfeasibleSparsity

K_SCAN_MAX = 32  # 2^32 buckets exceeds any realistic layer width


@dataclass(frozen=True)
class AutotuneConfig:
    c1: float = 1.0     # safety factor on expected sampled-neuron count
    c2: float = 0.1     # sparse/dense cost budget, in (0, 1)
    l_max: int = 256    # hard cap on table count

    def __post_init__(self):
        if self.c1 <= 0:
            raise ValueError("c1 must be > 0")
        if not 0 < self.c2 < 1:
            raise ValueError("c2 must be in (0, 1)")
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")


@dataclass(frozen=True)
class AutotunePlan:
    k_bits: int
    num_tables: int
    bucket_cap: int
    config: AutotuneConfig
    layer_dim: int
    prev_dim: int
    sparsity: float


def _tables_for(k: int, s: float, c1: float) -> int:
    # round-half-up, minimum one table
    return max(1, math.floor(c1 * s * 2**k + 0.5))


def _feasible(k: int, l: int, d: int, s: float, cfg: AutotuneConfig) -> bool:
    return k * l + s * d <= cfg.c2 * d and l <= cfg.l_max


def _bucket_cap(d: int, k: int) -> int:
    # twice the expected occupancy d / 2^K, rounded up
    return math.ceil(2 * d / 2**k)


def autotune(d: int, d_prev: int, s: float, cfg: AutotuneConfig | None = None) -> AutotunePlan:
    """Maximize the table count by scanning K upward until infeasible.

    Raises InfeasibleSparsity when even K=1 blows the cost budget, which in
    particular happens whenever s >= c2.
    """
    if cfg is None:
        cfg = AutotuneConfig()
    if d < 2:
        raise ValueError(f"layer dim must be >= 2, got {d}")
    if d_prev < 1:
        raise ValueError(f"prev dim must be >= 1, got {d_prev}")
    if not 0 < s < 1:
        raise ValueError(f"sparsity must be in (0, 1), got {s}")

    best = None
    for k in range(1, K_SCAN_MAX + 1):
        l = _tables_for(k, s, cfg.c1)
        if not _feasible(k, l, d, s, cfg):
            break
        best = (k, l)
    if best is None:
        raise InfeasibleSparsity(
            f"no feasible (K, L) for d={d}, s={s}, c2={cfg.c2}: "
            f"lower the sparsity or raise the cost budget c2"
        )
    k, l = best
    return AutotunePlan(
        k_bits=k,
        num_tables=l,
        bucket_cap=_bucket_cap(d, k),
        config=cfg,
        layer_dim=d,
        prev_dim=d_prev,
        sparsity=s,
    )


def plan_cost_ratio(plan: AutotunePlan) -> float:
    """Predicted sparse/dense cost ratio (K*L + s*d) / d; <= c2 for any returned plan."""
    return (plan.k_bits * plan.num_tables + plan.sparsity * plan.layer_dim) / plan.layer_dim
