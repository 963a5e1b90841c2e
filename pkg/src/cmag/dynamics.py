"""Discrete-time simulation of exposure and cooperation under an influence policy loop."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .compiler import MockCompiler, PopulationSummary, generate_candidate_pool, summarize_population
from .core import (
    ConfigError,
    DynamicsCoefficients,
    GovernanceMode,
    Policy,
    SimConfig,
    ThreatMode,
    Timing,
    sigmoid,
    stream,
    validate_config,
)
from .governance import (
    AuditTrail,
    UtilityWeights,
    effective_decay,
    effective_dose,
    select_policy,
)
from .metrics import MetricRecord, SteadySummary, record_metrics, steady_summary
from .netgen import Network, SubgroupPartition, generate_ba, hub_partition, targets_for

log = logging.getLogger(__name__)

CSV_HEADER = (
    "t", "mode", "threat", "seed", "coop", "autonomy", "integrity", "fairness", "ecs",
    "avg_exposure", "max_exposure", "exposure_gini", "gap_exposure", "gap_coop",
)


@dataclass(frozen=True)
class AgentState:
    prosocial: float
    susceptibility: float
    exposure: float
    cooperated: bool


@dataclass(frozen=True, eq=False)
class PopulationState:
    """Column-wise agent state plus the network it lives on."""

    prosocial: np.ndarray
    susceptibility: np.ndarray
    exposure: np.ndarray
    cooperated: np.ndarray
    network: Network
    partition: SubgroupPartition
    t: int = 0
    neighbor_mean: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.neighbor_mean is None:
            object.__setattr__(self, "neighbor_mean", self.network.neighbor_mean_matrix())
        for name in ("prosocial", "susceptibility", "exposure", "cooperated"):
            if len(getattr(self, name)) != self.network.n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, network has {self.network.n} nodes")

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(self.n)]

    def agent(self, i: int) -> AgentState:
        return AgentState(
            float(self.prosocial[i]),
            float(self.susceptibility[i]),
            float(self.exposure[i]),
            bool(self.cooperated[i]),
        )


class DoseSchedule:
    """Per-step, per-agent exposure increments queued by deployments."""

    def __init__(self, horizon: int, n_agents: int) -> None:
        self.horizon = horizon
        self._doses = np.zeros((horizon, n_agents))

    def add(self, t: int, targets, dose: float, timing: Timing, interval: int) -> None:
        idx = np.asarray(list(targets), dtype=int)
        if idx.size == 0 or t >= self.horizon:
            return
        if timing is Timing.BURST:
            self._doses[t, idx] += dose
        else:
            # the same total spread over the deployment step and the following interval - 1 steps
            stop = min(t + interval, self.horizon)
            for s in range(t, stop):
                self._doses[s, idx] += dose / interval

    def at(self, t: int) -> np.ndarray:
        return self._doses[t]


def init_population(cfg: SimConfig, seed: int) -> PopulationState:
    net = generate_ba(cfg.n_agents, cfg.ba_m, stream(seed, "graph"))
    rng = stream(seed, "population")
    n = cfg.n_agents
    p = np.clip(rng.normal(cfg.prosocial_mean, cfg.prosocial_std, n), 0.0, 1.0)
    s = np.clip(rng.normal(cfg.susceptibility_mean, cfg.susceptibility_std, n), 0.0, 1.0)
    e = np.zeros(n)
    # opening actions taken before any influence
    a = rng.random(n) < cooperation_probability(p, e, s, cfg.dynamics)
    return PopulationState(p, s, e, a, net, hub_partition(net, cfg.hub_quantile), 0)


def cooperation_probability(p, e, s, coeffs: DynamicsCoefficients = DynamicsCoefficients()):
    return sigmoid(coeffs.logit_bias + coeffs.prosocial_gain * np.asarray(p) + coeffs.exposure_gain * np.asarray(e) * np.asarray(s))


def step(
    state: PopulationState,
    cfg: SimConfig,
    mode: GovernanceMode | str,
    dose: np.ndarray | None,
    rng: np.random.Generator,
) -> tuple[PopulationState, MetricRecord]:
    """Advance one step: decay, diffuse, dose, cap, decide, measure."""
    if state.t >= cfg.horizon:
        raise ValueError(f"step called at t={state.t} with horizon {cfg.horizon}")
    e = (1.0 - effective_decay(mode, cfg)) * state.exposure
    e = e + cfg.diffusion_rate * (state.neighbor_mean @ e - e)
    if dose is not None:
        e = e + dose
    e = np.clip(e, 0.0, cfg.exposure_cap)
    prob = cooperation_probability(state.prosocial, e, state.susceptibility, cfg.dynamics)
    coop = rng.random(state.n) < prob
    new = replace(state, exposure=e, cooperated=coop, t=state.t + 1)
    return new, record_metrics(new, cfg.metrics, state.t)


@dataclass
class RunResult:
    timeseries: list[MetricRecord]
    audit: AuditTrail
    config_echo: SimConfig
    mode: GovernanceMode
    threat: ThreatMode
    seed: int
    final_state: PopulationState | None = field(default=None, repr=False)

    def summary(self, window: int | None = None) -> SteadySummary:
        return steady_summary(self.timeseries, window or self.config_echo.steady_window)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.timeseries])

    def csv_rows(self) -> list[list[str]]:
        rows = []
        for r in self.timeseries:
            vals = (
                r.cooperation, r.autonomy, r.integrity, r.fairness, r.ecs, r.avg_exposure,
                r.max_exposure, r.exposure_gini, r.gap_exposure, r.gap_cooperation,
            )
            rows.append([str(r.t), self.mode.value, self.threat.value, str(self.seed)] + [f"{v:.6f}" for v in vals])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(self.csv_rows())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


Compiler = Callable[[PopulationSummary], Policy]


def run_simulation(
    cfg: SimConfig,
    mode: GovernanceMode | str,
    threat: ThreatMode | str = ThreatMode.ADVERSARIAL,
    compiler: Compiler | None = None,
    seed: int = 0,
) -> RunResult:
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(f"invalid config: {', '.join(problems)}")
    mode = GovernanceMode(mode)
    threat = ThreatMode(threat)
    compiler = compiler or MockCompiler()

    state = init_population(cfg, seed)
    cand_rng = stream(seed, "candidates")
    target_rng = stream(seed, "targets")
    decide_rng = stream(seed, "decisions")

    weights = UtilityWeights.from_constitution(cfg.constitution)
    s_mean = float(state.susceptibility.mean())
    schedule = DoseSchedule(cfg.horizon, cfg.n_agents)
    audit = AuditTrail()
    ts: list[MetricRecord] = []

    for t in range(cfg.horizon):
        if t % cfg.deploy_interval == 0:
            k = t // cfg.deploy_interval
            summary = summarize_population(state, t, threat)
            base = compiler(summary)
            pool = generate_candidate_pool(base, cfg, cand_rng, threat)
            result = select_policy(pool, mode, cfg.constitution, weights, s_mean, deployment_index=k)
            targets: list[int] = []
            dose = 0.0
            if result.selected is not None:
                targets = targets_for(state.network, result.selected, cfg.target_fraction, target_rng)
                dose = effective_dose(result.selected, mode, cfg.constitution, cfg.dose_scale)
                schedule.add(t, targets, dose, result.selected.timing, cfg.deploy_interval)
            else:
                log.info("deployment %d skipped: no feasible candidate", k)
            audit.record_deployment(
                deployment_index=k,
                t=t,
                mode=mode,
                threat=threat.value,
                pool=pool,
                result=result,
                targets=targets,
                dose=dose,
                compiler_source=getattr(compiler, "source", "custom"),
                compiler_fallback=getattr(compiler, "last_fallback", None),
            )
        state, rec = step(state, cfg, mode, schedule.at(t), decide_rng)
        ts.append(rec)

    return RunResult(ts, audit, cfg, mode, threat, int(seed), final_state=state)
