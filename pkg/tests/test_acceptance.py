"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Simulation-level criteria use the mock compiler, the default configuration,
the adversarial threat and seeds 0-4 unless stated otherwise.
"""

from __future__ import annotations

import filecmp
import time
from functools import lru_cache

import numpy as np

from cmag import cli
from cmag.core import GovernanceMode, ThreatMode, default_config
from cmag.dynamics import cooperation_probability, run_simulation
from cmag.metrics import MetricsCoefficients, autonomy_from_pressure, ecs, gini, pareto_dominated_count
from cmag.stats import bonferroni, default_sweeps, mann_whitney_u, oat_sweep, sensitivity_index

SEEDS = (0, 1, 2, 3, 4)
GOV, NAIVE, UNC = GovernanceMode.GOVERNED, GovernanceMode.NAIVE, GovernanceMode.UNCONSTRAINED
MODES = (GOV, NAIVE, UNC)


def report(number: int, ok: bool, detail: str) -> None:
    print(f"\nCRITERION {number:2d}: {'PASS' if ok else 'FAIL'} | {detail}")


@lru_cache(maxsize=None)
def run(mode: GovernanceMode, seed: int, threat: ThreatMode = ThreatMode.ADVERSARIAL):
    return run_simulation(default_config(), mode, threat, seed=seed)


def steady(mode, seed, name, threat=ThreatMode.ADVERSARIAL):
    return run(mode, seed, threat).summary().mean[name]


# -- exact criteria --------------------------------------------------------


def test_c01_ecs_arithmetic():
    gov = ecs(0.770, 0.985, 0.995, 0.982)
    unc = ecs(0.873, 0.867, 0.959, 0.888)
    ok = abs(gov - 0.741) <= 0.001 and abs(unc - 0.645) <= 0.001
    report(1, ok, f"governed row {gov:.4f}, unconstrained row {unc:.4f}")
    assert ok


def test_c02_cooperation_and_autonomy_formulas():
    p = float(cooperation_probability(0.42, 0.0, 0.55))
    a = autonomy_from_pressure(0.0833, MetricsCoefficients())
    ok = abs(p - 0.653) <= 0.001 and abs(a - 0.985) <= 0.001
    report(2, ok, f"P(coop | 0.42, 0, 0.55) = {p:.4f}, autonomy(0.0833) = {a:.4f}")
    assert ok


def test_c03_mann_whitney_and_bonferroni():
    u, p = mann_whitney_u([6, 7, 8, 9, 10], [1, 2, 3, 4, 5])
    adj = bonferroni(0.0079, 15)
    ok = u == 25 and abs(p - 0.0079) <= 0.0001 and abs(adj - 0.119) <= 0.001 and adj > 0.05
    report(3, ok, f"U = {u:g}, p = {p:.5f}, Bonferroni = {adj:.4f}")
    assert ok


def test_c04_sensitivity_primitives():
    const = sensitivity_index(lambda x: 7.0, 2.0, 0.1)
    ident = sensitivity_index(lambda x: x, 2.0, 0.1)
    square = sensitivity_index(lambda x: x * x, 3.0, 1e-4)
    ok = const == 0 and abs(ident - 1) <= 1e-12 and abs(square - 2) <= 1e-6
    report(4, ok, f"constant {const}, identity {ident:.12f}, square {square:.9f}")
    assert ok


def _brute_pareto(b, a):
    return sum(any(ca >= cb and aa > ab for ca, aa in a) for cb, ab in b)


def test_c05_pareto_matches_brute_force():
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(100):
        nb, na = rng.integers(1, 60, size=2)
        # coarse grid so ties in cooperation and autonomy actually occur
        b = np.round(rng.random((nb, 2)), 1)
        a = np.round(rng.random((na, 2)), 1)
        mismatches += pareto_dominated_count(b, a) != _brute_pareto(b, a)
    report(5, mismatches == 0, f"{100 - mismatches}/100 instances match the O(n^2) oracle")
    assert mismatches == 0


def test_c06_gini():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        x = rng.exponential(size=rng.integers(2, 50))
        k = rng.uniform(0.01, 100)
        worst = max(worst, abs(gini(k * x) - gini(x)))
    g = gini([0, 1])
    ok = g == 0.5 and worst <= 1e-12
    report(6, ok, f"gini([0,1]) = {g}, max scale drift {worst:.2e}")
    assert ok


# -- ordinal / tolerance criteria ------------------------------------------


def test_c07_ecs_reversal():
    start = time.perf_counter()
    for m in MODES:
        for s in SEEDS:
            run(m, s)
    elapsed = time.perf_counter() - start
    failures = []
    for s in SEEDS:
        c = {m: steady(m, s, "cooperation") for m in MODES}
        e = {m: steady(m, s, "ecs") for m in MODES}
        if not c[UNC] > c[NAIVE] > c[GOV]:
            failures.append(f"seed {s} cooperation {c[UNC]:.3f}/{c[NAIVE]:.3f}/{c[GOV]:.3f}")
        if not e[GOV] > e[NAIVE] > e[UNC]:
            failures.append(f"seed {s} ECS gov {e[GOV]:.4f} naive {e[NAIVE]:.4f} unc {e[UNC]:.4f}")
    ok = not failures and elapsed < 60
    report(7, ok, f"15-run grid {elapsed:.1f}s; " + ("; ".join(failures) or "ordering holds on every seed"))
    assert ok, failures


def test_c08_ethical_components():
    failures = []
    for s in SEEDS:
        for name in ("autonomy", "integrity", "fairness"):
            v = {m: steady(m, s, name) for m in MODES}
            if not v[GOV] > v[NAIVE] > v[UNC]:
                failures.append(f"seed {s} {name} {v[GOV]:.4f}/{v[NAIVE]:.4f}/{v[UNC]:.4f}")
        a, i = steady(GOV, s, "autonomy"), steady(GOV, s, "integrity")
        if a < 0.97 or i < 0.99:
            failures.append(f"seed {s} governed autonomy {a:.4f} integrity {i:.4f}")
    min_a = min(steady(GOV, s, "autonomy") for s in SEEDS)
    min_i = min(steady(GOV, s, "integrity") for s in SEEDS)
    report(8, not failures, f"governed min A {min_a:.4f}, min I {min_i:.4f}; " + ("; ".join(failures) or "ordering holds"))
    assert not failures, failures


def test_c09_exposure_separation():
    ratios = []
    for s in SEEDS:
        g = steady(GOV, s, "avg_exposure")
        ratios.append((steady(UNC, s, "avg_exposure") / g, steady(NAIVE, s, "avg_exposure") / g))
    ok = all(u >= 3 and n >= 1.5 for u, n in ratios)
    worst_u = min(u for u, _ in ratios)
    worst_n = min(n for _, n in ratios)
    report(9, ok, f"min unc/gov {worst_u:.2f}x (need 3), min naive/gov {worst_n:.2f}x (need 1.5)")
    assert ok


def _is_forbidden(policy: dict) -> bool:
    return policy["theme"] == "fear" or policy["claim_type"] in ("exaggerated", "misleading")


def test_c10_audit_fidelity():
    problems = []
    intens = {GOV: [], NAIVE: []}
    for s in SEEDS:
        for e in run(UNC, s).audit:
            has_fear = any(c["policy"]["theme"] == "fear" for c in e["pool"])
            if has_fear and e["selected"]["theme"] != "fear":
                problems.append(f"unconstrained seed {s} deployment {e['deployment_index']} skipped fear")
        for m in (GOV, NAIVE):
            for e in run(m, s).audit:
                if e["selected"] is not None:
                    intens[m].append(e["selected"]["intensity"])
                    if _is_forbidden(e["selected"]):
                        problems.append(f"{m.value} seed {s} selected a forbidden policy")
    adv = [len(e["rejections"]) for s in SEEDS for e in run(GOV, s).audit]
    ben = [len(e["rejections"]) for s in SEEDS for e in run(GOV, s, ThreatMode.BENIGN).audit]
    gi, ni = np.mean(intens[GOV]), np.mean(intens[NAIVE])
    if not gi < ni:
        problems.append(f"governed intensity {gi:.3f} not below naive {ni:.3f}")
    if not 1.5 <= np.mean(adv) <= 3.0:
        problems.append(f"adversarial rejections {np.mean(adv):.2f}")
    if not 0.2 <= np.mean(ben) <= 1.0:
        problems.append(f"benign rejections {np.mean(ben):.2f}")
    detail = (
        f"intensity gov {gi:.3f} < naive {ni:.3f}; rejections/deployment adversarial {np.mean(adv):.2f}, "
        f"benign {np.mean(ben):.2f}"
    )
    report(10, not problems, detail + ("; " + "; ".join(problems) if problems else ""))
    assert not problems, problems


def test_c11_threat_robustness():
    diffs = []
    for s in SEEDS:
        de = abs(steady(GOV, s, "ecs") - steady(GOV, s, "ecs", ThreatMode.BENIGN))
        dc = abs(steady(GOV, s, "cooperation") - steady(GOV, s, "cooperation", ThreatMode.BENIGN))
        diffs.append((de, dc))
    ok = all(de <= 0.02 and dc <= 0.03 for de, dc in diffs)
    report(11, ok, f"max |dECS| {max(d[0] for d in diffs):.4f} (<= 0.02), max |dC| {max(d[1] for d in diffs):.4f} (<= 0.03)")
    assert ok


def test_c12_pareto_dominance():
    counts = []
    for s in SEEDS:
        pts = {m: np.column_stack([run(m, s).column("cooperation"), run(m, s).column("autonomy")]) for m in (GOV, UNC)}
        counts.append(pareto_dominated_count(pts[UNC], pts[GOV]))
    ok = all(c >= 40 for c in counts)
    report(12, ok, f"dominated unconstrained points per seed {counts} (need >= 40)")
    assert ok


def test_c13_fairness_gap_reduction():
    ratios = []
    for s in SEEDS:
        g = run(GOV, s).column("gap_exposure").mean()
        u = run(UNC, s).column("gap_exposure").mean()
        ratios.append(float(abs(g) / abs(u)))
    ok = all(r <= 0.4 for r in ratios)
    report(13, ok, f"|gov gap| / |unc gap| per seed {[round(r, 3) for r in ratios]} (need <= 0.4)")
    assert ok


def test_c14_sensitivity_sweep():
    cfg = default_config()
    problems = []
    sis = {}
    for spec in default_sweeps(cfg):
        by_mode = {m: oat_sweep(cfg, spec, m, ThreatMode.ADVERSARIAL, 0) for m in MODES}
        res = by_mode[GOV]
        sis[spec.parameter_name] = res.si
        if not abs(res.si) <= 0.15:
            problems.append(f"|SI({spec.parameter_name})| = {abs(res.si):.3f}")
        if spec.parameter_name == "prosocial_mean" and any(b < a for a, b in zip(res.ecs_mean, res.ecs_mean[1:])):
            problems.append("ECS not monotone in prosocial_mean")
        for i, level in enumerate(spec.levels):
            g, n, u = (by_mode[m].ecs_mean[i] for m in MODES)
            if not g > n > u:
                problems.append(f"mode order broken at {spec.parameter_name}={level:.3f}")
    detail = "SI " + ", ".join(f"{k} {v:+.3f}" for k, v in sis.items())
    report(14, not problems, detail + ("; " + "; ".join(problems) if problems else ""))
    assert not problems, problems


def _tree_identical(a, b) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_tree_identical(a / d, b / d) for d in cmp.common_dirs)


def test_c15_determinism(tmp_path):
    commands = {
        "run": ["run", "--mode", "governed", "--seed", "3"],
        "compare": ["compare", "--seed", "1"],
        "multiseed": ["multiseed", "--seeds", "0-2"],
        "sensitivity": ["sensitivity", "--param", "diffusion_rate"],
    }
    differing = []
    for name, argv in commands.items():
        outs = [tmp_path / f"{name}_{k}" for k in (1, 2)]
        for out in outs:
            assert cli.main(argv + ["--out-dir", str(out)]) == 0
        if not _tree_identical(outs[0], outs[1]):
            differing.append(name)
    audits = sorted((tmp_path / "compare_1").glob("*_audit.jsonl"))
    reps = [tmp_path / f"report_{k}" for k in (1, 2)]
    for out in reps:
        assert cli.main(["audit-report", *map(str, audits), "--out-dir", str(out)]) == 0
    if not _tree_identical(*reps):
        differing.append("audit-report")
    report(15, not differing, f"byte-identical reruns for {len(commands) + 1} commands" + (f"; differing: {differing}" if differing else ""))
    assert not differing
