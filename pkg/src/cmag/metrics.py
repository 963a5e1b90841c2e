"""Ethical metrics, inequality, subgroup gaps and Pareto dominance."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import MetricsCoefficients

log = logging.getLogger(__name__)

# per-step fields summarized over the steady-state window
METRIC_FIELDS = (
    "cooperation",
    "autonomy",
    "integrity",
    "fairness",
    "ecs",
    "avg_exposure",
    "max_exposure",
    "exposure_gini",
    "gap_exposure",
    "gap_cooperation",
)


@dataclass(frozen=True)
class MetricRecord:
    t: int
    cooperation: float
    autonomy: float
    integrity: float
    fairness: float
    ecs: float
    avg_exposure: float
    max_exposure: float
    exposure_gini: float
    gap_exposure: float
    gap_cooperation: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SteadySummary:
    window: int
    mean: dict[str, float]
    std: dict[str, float]
    peak_cooperation: float
    min_autonomy: float

    def to_dict(self) -> dict:
        return asdict(self)


def _clip01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


def cooperation_rate(state) -> float:
    coop = np.asarray(state.cooperated, dtype=bool)
    if coop.size == 0:
        raise ValueError("empty population")
    return float(coop.mean())


def mean_pressure(state) -> float:
    return float(np.mean(np.asarray(state.exposure) * np.asarray(state.susceptibility)))


def autonomy_from_pressure(q_bar: float, coeffs: MetricsCoefficients) -> float:
    return _clip01(1.0 - coeffs.autonomy_coeff * q_bar)


def autonomy(state, coeffs: MetricsCoefficients) -> float:
    """Autonomy retention: 1 - 0.18 * mean(exposure * susceptibility), clipped to [0, 1]."""
    return autonomy_from_pressure(mean_pressure(state), coeffs)


def integrity_from_exposure(avg_exposure: float, coeffs: MetricsCoefficients) -> float:
    return _clip01(1.0 - coeffs.integrity_coeff * avg_exposure)


def integrity(state, coeffs: MetricsCoefficients) -> float:
    return integrity_from_exposure(float(np.mean(state.exposure)), coeffs)


def fairness_from_gap(gap: float, coeffs: MetricsCoefficients) -> float:
    return _clip01(1.0 - coeffs.fairness_coeff * abs(gap))


def fairness(state, coeffs: MetricsCoefficients) -> float:
    if not _partition_ok(state.partition):
        log.warning("degenerate hub/periphery partition; fairness set to 1")
        return 1.0
    gap, _ = subgroup_gaps(state)
    return fairness_from_gap(gap, coeffs)


def ecs(c: float, a: float, i: float, f: float) -> float:
    return c * a * i * f


def gini(values: Sequence[float]) -> float:
    """Mean absolute difference over twice the mean; 0 for an all-zero vector."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("gini of an empty vector")
    if np.any(x < 0):
        raise ValueError("gini requires non-negative values")
    mu = x.mean()
    if mu == 0:
        return 0.0
    # sorted-rank form of sum_ij |xi - xj| / (2 n^2 mu)
    xs = np.sort(x)
    n = xs.size
    ranks = np.arange(1, n + 1)
    return float(np.sum((2 * ranks - n - 1) * xs) / (n * n * mu))


def _partition_ok(partition) -> bool:
    return bool(partition.hubs) and bool(partition.periphery)


def subgroup_gaps(state) -> tuple[float, float]:
    """(hub minus periphery) mean exposure and mean cooperation."""
    part = state.partition
    if not _partition_ok(part):
        return 0.0, 0.0
    hubs = np.fromiter(sorted(part.hubs), dtype=int)
    per = np.fromiter(sorted(part.periphery), dtype=int)
    e = np.asarray(state.exposure, dtype=float)
    a = np.asarray(state.cooperated, dtype=float)
    return float(e[hubs].mean() - e[per].mean()), float(a[hubs].mean() - a[per].mean())


def record_metrics(state, coeffs: MetricsCoefficients, t: int) -> MetricRecord:
    e = np.asarray(state.exposure, dtype=float)
    c = cooperation_rate(state)
    a = autonomy(state, coeffs)
    i = integrity(state, coeffs)
    f = fairness(state, coeffs)
    gap_e, gap_c = subgroup_gaps(state)
    return MetricRecord(
        t=t,
        cooperation=c,
        autonomy=a,
        integrity=i,
        fairness=f,
        ecs=ecs(c, a, i, f),
        avg_exposure=float(e.mean()),
        max_exposure=float(e.max()),
        exposure_gini=gini(e),
        gap_exposure=gap_e,
        gap_cooperation=gap_c,
    )


def pareto_dominated_count(points_b, points_a) -> int:
    """Count points of ``points_b`` dominated by some point of ``points_a``.

    A point (C, A) is dominated when another has C' >= C and A' > A.
    """
    a = np.asarray(points_a, dtype=float).reshape(-1, 2)
    b = np.asarray(points_b, dtype=float).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        return 0
    # for each b: best autonomy among a-points with cooperation >= b's cooperation
    order = np.argsort(-a[:, 0], kind="stable")
    c_sorted = a[order, 0]
    best_a = np.maximum.accumulate(a[order, 1])
    count = 0
    for c, aut in b:
        # number of a points with C >= c (c_sorted is descending)
        k = int(np.searchsorted(-c_sorted, -c, side="right"))
        if k and best_a[k - 1] > aut:
            count += 1
    return count


def steady_summary(ts: Sequence[MetricRecord], window: int) -> SteadySummary:
    if not 1 <= window <= len(ts):
        raise ValueError(f"window {window} does not fit a series of length {len(ts)}")
    tail = ts[-window:]
    mean = {}
    std = {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(r, name) for r in tail], dtype=float)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std())
    return SteadySummary(
        window=window,
        mean=mean,
        std=std,
        peak_cooperation=float(max(r.cooperation for r in ts)),
        min_autonomy=float(min(r.autonomy for r in ts)),
    )
