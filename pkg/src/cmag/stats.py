"""Statistical validation: bootstrap CIs, Mann–Whitney U, Bonferroni, Cohen's d, OAT sensitivity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ConfigError, GovernanceMode, SimConfig, ThreatMode, default_config

# parameter ranges of the default one-at-a-time sweep
DEFAULT_SWEEP_RANGES = {
    "base_decay": (0.02, 0.15),
    "diffusion_rate": (0.04, 0.25),
    "prosocial_mean": (0.20, 0.70),
    "susceptibility_mean": (0.25, 0.85),
}

EXACT_MWU_MAX_N = 12


@dataclass(frozen=True)
class SweepSpec:
    parameter_name: str
    baseline: float
    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        lv = self.levels
        if len(lv) != 5:
            raise ValueError(f"{self.parameter_name}: exactly 5 levels required, got {len(lv)}")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError(f"{self.parameter_name}: levels must be strictly increasing")
        if not lv[0] <= self.baseline <= lv[-1]:
            raise ValueError(f"{self.parameter_name}: baseline {self.baseline} outside the level range")

    @classmethod
    def evenly_spaced(cls, name: str, lo: float, hi: float, baseline: float) -> "SweepSpec":
        return cls(name, baseline, tuple(float(x) for x in np.linspace(lo, hi, 5)))


def default_sweeps(cfg: SimConfig | None = None) -> list[SweepSpec]:
    cfg = cfg or default_config()
    return [
        SweepSpec.evenly_spaced(name, lo, hi, float(cfg.get_param(name)))
        for name, (lo, hi) in DEFAULT_SWEEP_RANGES.items()
    ]


def bootstrap_ci(
    samples: Sequence[float],
    n_resamples: int = 5000,
    level: float = 0.95,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("bootstrap of an empty sample")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = rng.integers(0, x.size, size=(n_resamples, x.size))
    means = x[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _u_null_counts(n_a: int, n_b: int) -> np.ndarray:
    """counts[u] = number of rank labelings giving U = u (no ties)."""
    # f[i][j] holds the count polynomial for i a-items and j b-items
    f = [[None] * (n_b + 1) for _ in range(n_a + 1)]
    for i in range(n_a + 1):
        for j in range(n_b + 1):
            if i == 0 or j == 0:
                poly = np.zeros(i * j + 1, dtype=object)
                poly[0] = 1
            else:
                poly = np.zeros(i * j + 1, dtype=object)
                # largest observation is an a-item (beats all j b-items) or a b-item
                a_top = f[i - 1][j]
                poly[j : j + len(a_top)] += a_top
                b_top = f[i][j - 1]
                poly[: len(b_top)] += b_top
            f[i][j] = poly
    return f[n_a][n_b]


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """U statistic of sample ``a`` and a two-sided p-value.

    Exact when the pooled size is at most 12 and there are no ties, otherwise
    a normal approximation with tie and continuity corrections.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    n_a, n_b = x.size, y.size
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    u = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2)
    n = n_a + n_b
    has_ties = np.unique(pooled).size < n

    if n <= EXACT_MWU_MAX_N and not has_ties:
        counts = _u_null_counts(n_a, n_b)
        total = math.comb(n, n_a)
        k = int(round(u))
        lower = sum(counts[: k + 1]) / total
        upper = sum(counts[k:]) / total
        return u, float(min(1.0, 2 * min(lower, upper)))

    mu = n_a * n_b / 2
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
    var = n_a * n_b / 12 * ((n + 1) - tie_term)
    if var <= 0:
        return u, 1.0
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    return u, float(min(1.0, math.erfc(z / math.sqrt(2))))


def bonferroni(p: float, n_comparisons: int) -> float:
    if not 0 <= p <= 1 or n_comparisons < 1:
        raise ValueError("need p in [0, 1] and at least one comparison")
    return min(1.0, p * n_comparisons)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size < 2 or y.size < 2:
        raise ValueError("cohens_d needs at least two observations per group")
    diff = x.mean() - y.mean()
    pooled = math.sqrt(((x.size - 1) * x.var(ddof=1) + (y.size - 1) * y.var(ddof=1)) / (x.size + y.size - 2))
    if pooled == 0:
        if diff == 0:
            return 0.0
        raise ZeroDivisionError("effect size undefined: zero pooled spread with unequal means")
    return float(diff / pooled)


def sensitivity_index(evaluate: Callable[[float], float], theta0: float, h: float) -> float:
    """Normalised elasticity of ``evaluate`` at ``theta0`` by central differences."""
    if h <= 0:
        raise ValueError("h must be positive")
    if theta0 == 0:
        raise ZeroDivisionError("sensitivity index undefined at theta0 = 0")
    f0 = evaluate(theta0)
    if f0 == 0:
        raise ZeroDivisionError("sensitivity index undefined where the response is 0")
    slope = (evaluate(theta0 + h) - evaluate(theta0 - h)) / (2 * h)
    return slope * theta0 / f0


def elasticity_from_points(lo: float, f_lo: float, hi: float, f_hi: float, theta0: float, f0: float) -> float:
    if f0 == 0 or theta0 == 0:
        raise ZeroDivisionError("sensitivity index undefined")
    return (f_hi - f_lo) / (hi - lo) * theta0 / f0


@dataclass
class SweepResult:
    parameter_name: str
    mode: GovernanceMode
    baseline: float
    levels: tuple[float, ...]
    ecs_mean: list[float]
    ecs_std: list[float]
    baseline_ecs: float
    si: float
    stencil: tuple[float, float] = field(default=(0.0, 0.0))


def steady_ecs(cfg: SimConfig, mode, threat, seed: int) -> tuple[float, float]:
    # imported lazily: dynamics pulls in every other module
    from .dynamics import run_simulation

    s = run_simulation(cfg, mode, threat, seed=seed).summary()
    return s.mean["ecs"], s.std["ecs"]


def _stencil(spec: SweepSpec) -> tuple[float, float]:
    lv = spec.levels
    b = spec.baseline
    if b in lv:
        h = min(y - x for x, y in zip(lv, lv[1:]))
        return b - h, b + h
    lower = max(x for x in lv if x < b)
    upper = min(x for x in lv if x > b)
    return lower, upper


def oat_sweep(
    cfg: SimConfig,
    spec: SweepSpec,
    mode: GovernanceMode | str = GovernanceMode.GOVERNED,
    threat: ThreatMode | str = ThreatMode.ADVERSARIAL,
    seed: int = 0,
) -> SweepResult:
    """Steady-state ECS at every sweep level plus the sensitivity index at the baseline."""
    cfg.get_param(spec.parameter_name)  # raises ConfigError for unknown keys
    cache: dict[float, tuple[float, float]] = {}

    def at(value: float) -> tuple[float, float]:
        if value not in cache:
            cache[value] = steady_ecs(cfg.with_param(spec.parameter_name, value), mode, threat, seed)
        return cache[value]

    means, stds = zip(*(at(v) for v in spec.levels))
    lo, hi = _stencil(spec)
    base_ecs = at(spec.baseline)[0]
    try:
        si = elasticity_from_points(lo, at(lo)[0], hi, at(hi)[0], spec.baseline, base_ecs)
    except ZeroDivisionError:
        si = float("nan")
    return SweepResult(
        spec.parameter_name,
        GovernanceMode(mode),
        spec.baseline,
        spec.levels,
        list(means),
        list(stds),
        base_ecs,
        float(si),
        (lo, hi),
    )


__all__ = [
    "ConfigError",
    "SweepSpec",
    "SweepResult",
    "default_sweeps",
    "bootstrap_ci",
    "mann_whitney_u",
    "bonferroni",
    "cohens_d",
    "sensitivity_index",
    "oat_sweep",
]
