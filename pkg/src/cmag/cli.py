"""Command line entry point: single runs, mode comparisons, multi-seed statistics,
sensitivity sweeps and audit reports.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 the external
compiler never produced a usable policy (outputs are still written, built from
the mock fallback).
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .compiler import CompilerConfig, ExternalCompiler, MockCompiler
from .core import (
    ConfigError,
    GovernanceMode,
    SimConfig,
    ThreatMode,
    config_to_dict,
    default_config,
    load_config,
    stream,
    validate_config,
)
from .dynamics import RunResult, run_simulation
from .governance import AuditError, AuditTrail
from .metrics import METRIC_FIELDS
from .stats import (
    bonferroni,
    bootstrap_ci,
    cohens_d,
    default_sweeps,
    mann_whitney_u,
    oat_sweep,
)

log = logging.getLogger("cmag")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_EXTERNAL = 0, 1, 2, 3

ALL_MODES = (GovernanceMode.GOVERNED, GovernanceMode.NAIVE, GovernanceMode.UNCONSTRAINED)
TABLE_METRICS = ("cooperation", "ecs", "autonomy", "integrity", "fairness")
PAIRINGS = (
    (GovernanceMode.GOVERNED, GovernanceMode.NAIVE),
    (GovernanceMode.GOVERNED, GovernanceMode.UNCONSTRAINED),
    (GovernanceMode.NAIVE, GovernanceMode.UNCONSTRAINED),
)
BOOTSTRAP_RESAMPLES = 5000


class ExternalCompilerFailure(RuntimeError):
    pass


@dataclass
class ExperimentPlan:
    scenario: str
    modes: list[GovernanceMode] = field(default_factory=lambda: list(ALL_MODES))
    threat: ThreatMode = ThreatMode.ADVERSARIAL
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: Path = Path("out")
    compiler_kind: str = "mock"
    config: SimConfig = field(default_factory=default_config)
    compiler_config: CompilerConfig = field(default_factory=CompilerConfig)
    audit_files: list[Path] = field(default_factory=list)
    sweep_params: list[str] | None = None

    def problems(self) -> list[str]:
        bad = []
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            bad.append("seeds must be non-empty and distinct")
        if not self.modes:
            bad.append("at least one mode is required")
        bad += [f"config.{p}" for p in validate_config(self.config)]
        bad += [f"compiler.{p}" for p in self.compiler_config.problems()]
        return bad


# -- file helpers ----------------------------------------------------------


def _dump_json(obj: Any, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _r(x: float) -> float:
    return round(float(x), 10)


def run_stem(mode: GovernanceMode, threat: ThreatMode, seed: int) -> str:
    return f"{mode.value}_{threat.value}_s{seed}"


def summary_document(result: RunResult) -> dict[str, Any]:
    s = result.summary()
    return {
        "mode": result.mode.value,
        "threat": result.threat.value,
        "seed": result.seed,
        "window": s.window,
        "mean": {k: _r(v) for k, v in s.mean.items()},
        "std": {k: _r(v) for k, v in s.std.items()},
        "peak_cooperation": _r(s.peak_cooperation),
        "min_autonomy": _r(s.min_autonomy),
        "config": config_to_dict(result.config_echo),
    }


def _make_compiler(plan: ExperimentPlan):
    if plan.compiler_kind == "external":
        return ExternalCompiler(plan.compiler_config)
    return MockCompiler()


def execute_run(plan: ExperimentPlan, mode: GovernanceMode, seed: int, out_dir: Path) -> tuple[RunResult, list[Path]]:
    compiler = _make_compiler(plan)
    result = run_simulation(plan.config, mode, plan.threat, compiler=compiler, seed=seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = run_stem(mode, plan.threat, seed)
    paths = [out_dir / f"{stem}_timeseries.csv", out_dir / f"{stem}_summary.json", out_dir / f"{stem}_audit.jsonl"]
    result.write_csv(paths[0])
    _dump_json(summary_document(result), paths[1])
    result.audit.write(paths[2])
    if plan.compiler_kind == "external":
        entries = result.audit.entries
        if entries and all(e.get("compiler_fallback") for e in entries):
            raise ExternalCompilerFailure(
                f"external compiler failed on every deployment of {stem}: {entries[-1]['compiler_fallback']}"
            )
    return result, paths


# -- scenarios -------------------------------------------------------------


def cmd_run(plan: ExperimentPlan) -> list[Path]:
    paths: list[Path] = []
    for seed in plan.seeds:
        for mode in plan.modes:
            paths += execute_run(plan, mode, seed, plan.out_dir)[1]
    return paths


def comparison_table(results: dict[GovernanceMode, RunResult]) -> dict[str, Any]:
    rows = {}
    for name in TABLE_METRICS + ("avg_exposure", "exposure_gini"):
        rows[name] = {
            m.value: {"mean": _r(r.summary().mean[name]), "std": _r(r.summary().std[name])}
            for m, r in results.items()
        }
    rows["peak_cooperation"] = {m.value: _r(r.summary().peak_cooperation) for m, r in results.items()}
    rows["min_autonomy"] = {m.value: _r(r.summary().min_autonomy) for m, r in results.items()}
    return rows


def merged_long_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mode", "threat", "seed", "metric", "value"])
    for r in results:
        for rec in r.timeseries:
            for name in METRIC_FIELDS:
                w.writerow([rec.t, r.mode.value, r.threat.value, r.seed, name, f"{getattr(rec, name):.6f}"])
    return buf.getvalue()


def cmd_compare(plan: ExperimentPlan) -> list[Path]:
    if set(plan.modes) != set(ALL_MODES):
        raise ConfigError("compare needs all three governance modes")
    paths: list[Path] = []
    for seed in plan.seeds:
        out = plan.out_dir if len(plan.seeds) == 1 else plan.out_dir / f"seed{seed}"
        results: dict[GovernanceMode, RunResult] = {}
        for mode in ALL_MODES:
            results[mode], run_paths = execute_run(plan, mode, seed, out)
            paths += run_paths
        merged = out / f"compare_{plan.threat.value}_s{seed}_long.csv"
        merged.write_text(merged_long_csv(list(results.values())))
        doc = {
            "threat": plan.threat.value,
            "seed": seed,
            "window": plan.config.steady_window,
            "table": comparison_table(results),
        }
        paths += [merged, _dump_json(doc, out / f"comparison_{plan.threat.value}_s{seed}.json")]
    return paths


def multiseed_statistics(results: dict[tuple[GovernanceMode, int], RunResult], seeds: Sequence[int]) -> dict[str, Any]:
    per_mode = {
        m: {name: [results[(m, s)].summary().mean[name] for s in seeds] for name in TABLE_METRICS}
        for m in ALL_MODES
    }
    cis: dict[str, Any] = {}
    for name in TABLE_METRICS:
        cis[name] = {}
        for m in ALL_MODES:
            vals = per_mode[m][name]
            lo, hi = bootstrap_ci(vals, BOOTSTRAP_RESAMPLES, 0.95, stream(0, f"bootstrap/{name}/{m.value}"))
            cis[name][m.value] = {"mean": _r(np.mean(vals)), "ci95": [_r(lo), _r(hi)], "per_seed": [_r(v) for v in vals]}

    comparisons = []
    n_comp = len(TABLE_METRICS) * len(PAIRINGS)
    for name, (a, b) in itertools.product(TABLE_METRICS, PAIRINGS):
        xa, xb = per_mode[a][name], per_mode[b][name]
        u, p = mann_whitney_u(xa, xb)
        try:
            d: float | None = _r(cohens_d(xa, xb))
        except ZeroDivisionError:
            d = None
        comparisons.append(
            {
                "metric": name,
                "a": a.value,
                "b": b.value,
                "U": u,
                "p_raw": _r(p),
                "p_bonferroni": _r(bonferroni(p, n_comp)),
                "cohens_d": d,
            }
        )
    return {
        "seeds": list(seeds),
        "runs": [{"mode": m.value, "seed": s} for m in ALL_MODES for s in seeds],
        "bootstrap_resamples": BOOTSTRAP_RESAMPLES,
        "confidence_intervals": cis,
        "n_comparisons": n_comp,
        "comparisons": comparisons,
    }


def cmd_multiseed(plan: ExperimentPlan) -> list[Path]:
    if len(plan.seeds) < 2:
        raise ConfigError("multiseed needs at least two seeds")
    paths: list[Path] = []
    results: dict[tuple[GovernanceMode, int], RunResult] = {}
    for seed in plan.seeds:
        for mode in ALL_MODES:
            results[(mode, seed)], run_paths = execute_run(plan, mode, seed, plan.out_dir / "runs")
            paths += run_paths
    stats = multiseed_statistics(results, plan.seeds)
    stats["threat"] = plan.threat.value
    paths.append(_dump_json(stats, plan.out_dir / "statistics.json"))
    return paths


def cmd_sensitivity(plan: ExperimentPlan) -> list[Path]:
    sweeps = default_sweeps(plan.config)
    if plan.sweep_params is not None:
        known = {s.parameter_name for s in sweeps}
        unknown = [p for p in plan.sweep_params if p not in known]
        if unknown:
            raise ConfigError(f"invalid sweep parameter(s): {', '.join(unknown)}; choose from {sorted(known)}")
        sweeps = [s for s in sweeps if s.parameter_name in plan.sweep_params]
    seed = plan.seeds[0]
    primary = GovernanceMode.GOVERNED
    plan.out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "level", "ecs_mean", "ecs_std"])
    doc: dict[str, Any] = {"seed": seed, "threat": plan.threat.value, "mode": primary.value, "parameters": {}}
    for spec in sweeps:
        by_mode = {m: oat_sweep(plan.config, spec, m, plan.threat, seed) for m in ALL_MODES}
        res = by_mode[primary]
        for level, mean, std in zip(res.levels, res.ecs_mean, res.ecs_std):
            w.writerow([spec.parameter_name, f"{level:.6f}", f"{mean:.6f}", f"{std:.6f}"])
        ordered = [
            by_mode[GovernanceMode.GOVERNED].ecs_mean[i]
            > by_mode[GovernanceMode.NAIVE].ecs_mean[i]
            > by_mode[GovernanceMode.UNCONSTRAINED].ecs_mean[i]
            for i in range(len(spec.levels))
        ]
        doc["parameters"][spec.parameter_name] = {
            "baseline": spec.baseline,
            "levels": list(spec.levels),
            "stencil": list(res.stencil),
            "baseline_ecs": _r(res.baseline_ecs),
            "si": _r(res.si),
            "ecs_min": _r(min(res.ecs_mean)),
            "ecs_max": _r(max(res.ecs_mean)),
            "ecs_by_mode": {m.value: [_r(v) for v in r.ecs_mean] for m, r in by_mode.items()},
            "mode_order_preserved": ordered,
        }
    csv_path = plan.out_dir / "sensitivity.csv"
    csv_path.write_text(buf.getvalue())
    return [csv_path, _dump_json(doc, plan.out_dir / "sensitivity.json")]


# -- audit report ----------------------------------------------------------


def audit_report(trails: dict[str, AuditTrail]) -> dict[str, Any]:
    """Tabulate audit trails; every number is derived from the audit lines only."""
    by_mode: dict[str, list[dict]] = {}
    for trail in trails.values():
        for e in trail:
            by_mode.setdefault(e["mode"], []).append(e)
    report: dict[str, Any] = {"sources": sorted(trails), "modes": {}}
    for mode, entries in sorted(by_mode.items()):
        reasons: Counter[str] = Counter()
        themes: Counter[str] = Counter()
        claims: Counter[str] = Counter()
        intensities = []
        for e in entries:
            for rej in e["rejections"]:
                reasons.update(rej["reasons"])
            if e["selected"] is not None:
                themes[e["selected"]["theme"]] += 1
                claims[e["selected"]["claim_type"]] += 1
                intensities.append(e["selected"]["intensity"])
        rejections = [len(e["rejections"]) for e in entries]
        report["modes"][mode] = {
            "deployments": len(entries),
            "skipped": sum(bool(e["skipped"]) for e in entries),
            "rejections_per_deployment": rejections,
            "total_rejections": sum(rejections),
            "candidates_evaluated": sum(len(e["pool"]) for e in entries),
            "mean_rejections": _r(np.mean(rejections)) if rejections else 0.0,
            "reason_counts": dict(sorted(reasons.items())),
            "selected_themes": dict(sorted(themes.items())),
            "selected_claims": dict(sorted(claims.items())),
            "mean_selected_intensity": _r(np.mean(intensities)) if intensities else None,
            "deployments_with_fear_candidate": sum(
                any(c["policy"]["theme"] == "fear" for c in e["pool"]) for e in entries
            ),
        }
    return report


def cmd_audit_report(plan: ExperimentPlan) -> list[Path]:
    if not plan.audit_files:
        raise ConfigError("audit-report needs at least one audit JSONL file")
    trails = {}
    for path in plan.audit_files:
        if not Path(path).exists():
            raise ConfigError(f"audit file not found: {path}")
        trails[Path(path).name] = AuditTrail.read(path)
    report = audit_report(trails)
    plan.out_dir.mkdir(parents=True, exist_ok=True)
    return [_dump_json(report, plan.out_dir / "audit_report.json")]


SCENARIOS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "multiseed": cmd_multiseed,
    "sensitivity": cmd_sensitivity,
    "audit-report": cmd_audit_report,
}


# -- argument parsing ------------------------------------------------------


def _seed_list(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            seeds.append(int(part))
    return seeds


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threat", choices=[t.value for t in ThreatMode], default="adversarial")
    common.add_argument("--seed", type=int, default=None, help="single seed")
    common.add_argument("--seeds", type=_seed_list, default=None, help="seed list, e.g. 0-4 or 0,3,7")
    common.add_argument("--config", type=Path, default=None, help="JSON config file")
    common.add_argument("--out-dir", type=Path, default=Path("out"))
    common.add_argument("--compiler", choices=["mock", "external"], default="mock")
    common.add_argument("--endpoint", default="", help="chat-completions URL for --compiler external")
    common.add_argument("--api-key-env", default="CMAG_API_KEY", help="environment variable holding the API key")
    common.add_argument("--dose-scale", type=float, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cmag", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="scenario", required=True)
    run = sub.add_parser("run", parents=[common], help="one run per (mode, seed)")
    run.add_argument("--mode", choices=[m.value for m in GovernanceMode], default="governed")
    sub.add_parser("compare", parents=[common], help="all three modes on the same seed")
    sub.add_parser("multiseed", parents=[common], help="seed grid with bootstrap CIs and rank tests")
    sens = sub.add_parser("sensitivity", parents=[common], help="one-at-a-time parameter sweeps")
    sens.add_argument("--param", action="append", default=None, help="restrict to these sweep parameters")
    rep = sub.add_parser("audit-report", parents=[common], help="tabulate audit JSONL files")
    rep.add_argument("audit_files", nargs="+", type=Path)
    return parser


def plan_from_args(args: argparse.Namespace) -> ExperimentPlan:
    cfg = load_config(args.config) if args.config else default_config()
    if args.dose_scale is not None:
        cfg = cfg.with_param("dose_scale", args.dose_scale)
    if args.seeds is not None:
        seeds = args.seeds
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [0, 1, 2, 3, 4] if args.scenario == "multiseed" else [0]
    modes = [GovernanceMode(args.mode)] if args.scenario == "run" else list(ALL_MODES)
    plan = ExperimentPlan(
        scenario=args.scenario,
        modes=modes,
        threat=ThreatMode(args.threat),
        seeds=seeds,
        out_dir=args.out_dir,
        compiler_kind=args.compiler,
        config=cfg,
        compiler_config=CompilerConfig(
            kind=args.compiler, endpoint_url=args.endpoint, api_key_env_name=args.api_key_env
        ),
        audit_files=list(getattr(args, "audit_files", []) or []),
        sweep_params=getattr(args, "param", None),
    )
    problems = plan.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    return plan


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        plan = plan_from_args(args)
        paths = SCENARIOS[plan.scenario](plan)
    except ConfigError as exc:
        print(f"cmag: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExternalCompilerFailure as exc:
        print(f"cmag: external compiler failure: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (AuditError, OSError, ValueError, RuntimeError) as exc:
        print(f"cmag: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
