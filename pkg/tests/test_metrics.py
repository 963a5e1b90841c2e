
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmag.core import default_config
from cmag.dynamics import run_simulation
from cmag.metrics import (
    MetricRecord,
    MetricsCoefficients,
    autonomy,
    autonomy_from_pressure,
    cooperation_rate,
    ecs,
    fairness,
    fairness_from_gap,
    gini,
    integrity_from_exposure,
    pareto_dominated_count,
    steady_summary,
    subgroup_gaps,
)
from cmag.netgen import SubgroupPartition

K = MetricsCoefficients()


class _State:
    def __init__(self, exposure, cooperated=None, susceptibility=None, hubs=(0,)):
        n = len(exposure)
        self.exposure = np.asarray(exposure, dtype=float)
        self.cooperated = np.zeros(n, bool) if cooperated is None else np.asarray(cooperated, bool)
        self.susceptibility = np.ones(n) if susceptibility is None else np.asarray(susceptibility, float)
        self.partition = SubgroupPartition(frozenset(hubs), frozenset(range(n)) - frozenset(hubs))


def test_cooperation_rate():
    assert cooperation_rate(_State([0] * 80, [True] * 80)) == 1.0
    assert cooperation_rate(_State([0] * 80, [False] * 80)) == 0.0
    assert cooperation_rate(_State([0] * 80, [True] * 40 + [False] * 40)) == 0.5


def test_autonomy_values():
    assert autonomy(_State([0, 0]), K) == 1.0
    assert autonomy_from_pressure(0.0833, K) == pytest.approx(0.985, abs=1e-3)
    assert autonomy(_State([6, 6]), K) == 0.0


def test_integrity_values():
    assert integrity_from_exposure(0.135, K) == pytest.approx(0.9955, abs=1e-4)
    assert integrity_from_exposure(1.235, K) == pytest.approx(0.9592, abs=1e-4)
    assert integrity_from_exposure(0.370, K) == pytest.approx(0.988, abs=1e-3)
    assert integrity_from_exposure(0.0, K) == 1.0


def test_fairness_values():
    assert fairness_from_gap(0.082, K) == pytest.approx(0.982, abs=1e-3)
    assert fairness_from_gap(0.493, K) == pytest.approx(0.892, abs=1e-3)
    assert fairness_from_gap(0.0, K) == 1.0
    assert fairness_from_gap(-0.2, K) == fairness_from_gap(0.2, K)


def test_fairness_degenerate_partition(caplog):
    st0 = _State([1.0, 0.0], hubs=(0, 1))
    assert fairness(st0, K) == 1.0
    assert "degenerate" in caplog.text


def test_ecs_values():
    assert ecs(0.770, 0.985, 0.995, 0.982) == pytest.approx(0.741, abs=1e-3)
    assert ecs(0.873, 0.867, 0.959, 0.888) == pytest.approx(0.645, abs=1e-3)
    assert ecs(0.9, 0.0, 1.0, 1.0) == 0


unit = st.floats(0, 1)


@given(unit, unit, unit, unit)
def test_ecs_product_bound(c, a, i, f):
    assert ecs(c, a, i, f) <= min(c, a, i, f) + 1e-15


@given(st.floats(0, 50), st.floats(0, 50))
def test_integrity_and_fairness_non_increasing(x, y):
    lo, hi = sorted((x, y))
    assert integrity_from_exposure(lo, K) >= integrity_from_exposure(hi, K)
    assert fairness_from_gap(lo, K) >= fairness_from_gap(hi, K)


def test_gini_examples():
    assert gini([1, 1, 1]) == 0
    assert gini([0, 1]) == 0.5
    assert gini([0, 0, 0]) == 0
    with pytest.raises(ValueError):
        gini([-1, 2])


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=40))
def test_gini_matches_pairwise_definition(xs):
    x = np.array(xs)
    if x.mean() == 0:
        assert gini(x) == 0
        return
    pairwise = np.abs(x[:, None] - x[None, :]).sum() / (2 * x.size**2 * x.mean())
    assert gini(x) == pytest.approx(pairwise, abs=1e-9)


@given(st.lists(st.floats(0.001, 1e3), min_size=1, max_size=40), st.floats(0.01, 100))
def test_gini_scale_invariant(xs, k):
    assert gini(np.array(xs) * k) == pytest.approx(gini(xs), abs=1e-12)


def test_subgroup_gaps():
    assert subgroup_gaps(_State([0.3, 0.3, 0.3])) == (0.0, 0.0)
    gap_e, gap_c = subgroup_gaps(_State([1, 1, 0, 0], [True, True, False, False], hubs=(0, 1)))
    assert gap_e == 1 and gap_c == 1


def test_governed_exposure_gap_profile():
    out_of_range = []
    for seed in range(5):
        gap = run_simulation(default_config(), "governed", seed=seed).column("gap_exposure")
        if not (0.03 <= gap.mean() <= 0.15 and gap.max() <= 0.30):
            out_of_range.append((seed, round(float(gap.mean()), 4), round(float(gap.max()), 4)))
    assert out_of_range == [], "(seed, mean gap, peak gap) outside [0.03, 0.15] / <= 0.30"


def _brute(b, a):
    return sum(any(ca >= cb and aa > ab for ca, aa in a) for cb, ab in b)


def test_pareto_examples():
    assert pareto_dominated_count([(0.6, 0.90)], [(0.7, 0.99)]) == 1
    assert pareto_dominated_count([(0.6, 0.90)], [(0.6, 0.90)]) == 0
    assert pareto_dominated_count([], [(0.5, 0.5)]) == 0


@settings(max_examples=50)
@given(
    st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30),
    st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30),
)
def test_pareto_matches_brute_force(b, a):
    assert pareto_dominated_count(b, a) == _brute(b, a)


@given(
    st.lists(st.tuples(unit, unit), min_size=1, max_size=20),
    st.lists(st.tuples(unit, unit), min_size=1, max_size=20),
    st.integers(0, 19),
    st.floats(0, 1),
)
def test_pareto_anti_monotone_in_b_autonomy(b, a, idx, bump):
    idx %= len(b)
    raised = list(b)
    raised[idx] = (b[idx][0], b[idx][1] + bump)
    assert pareto_dominated_count(raised, a) <= pareto_dominated_count(b, a)


def _series(values):
    return [MetricRecord(t, v, v, v, v, v, v, v, 0.0, 0.0, 0.0) for t, v in enumerate(values)]


def test_steady_summary():
    s = steady_summary(_series([0.4] * 20), 15)
    assert s.mean["ecs"] == pytest.approx(0.4) and s.std["ecs"] == pytest.approx(0.0, abs=1e-15)
    s = steady_summary(_series([0.0, 1.0]), 2)
    assert s.mean["cooperation"] == 0.5 and s.std["cooperation"] == 0.5
    s = steady_summary(_series([0.95] + [0.5] * 20), 15)
    assert s.peak_cooperation == 0.95 and s.min_autonomy == 0.5
    with pytest.raises(ValueError):
        steady_summary(_series([0.1]), 2)
