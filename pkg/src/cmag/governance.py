"""Constitutional gate, baseline selectors, exposure modulation and the audit trail."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .compiler import CandidatePool, explanation_fidelity
from .core import (
    ClaimType,
    Constitution,
    GovernanceMode,
    Policy,
    SimConfig,
    Targeting,
    Theme,
    Timing,
)


class Reason(str, enum.Enum):
    FORBIDDEN_THEME = "forbidden_theme"
    FORBIDDEN_CLAIM = "forbidden_claim"
    INTENSITY_EXCEEDED = "intensity_exceeded"


@dataclass(frozen=True)
class RejectionRecord:
    deployment_index: int
    candidate_index: int
    reasons: tuple[Reason, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "deployment_index": self.deployment_index,
            "candidate_index": self.candidate_index,
            "reasons": [r.value for r in self.reasons],
        }


def _theme_boost() -> dict[Theme, float]:
    return {Theme.FEAR: 1.30, Theme.MORAL: 0.85, Theme.HOPE: 0.80, Theme.COMMUNITY: 0.78}


def _claim_boost() -> dict[ClaimType, float]:
    return {ClaimType.MISLEADING: 1.20, ClaimType.EXAGGERATED: 1.10, ClaimType.FACTUAL: 1.00}


def _timing_boost() -> dict[Timing, float]:
    return {Timing.BURST: 1.10, Timing.SUSTAINED: 1.00}


def _target_boost() -> dict[Targeting, float]:
    return {Targeting.HUBS: 1.15, Targeting.RANDOM: 1.00, Targeting.PERIPHERY: 0.90}


def _targeting_bias() -> dict[Targeting, float]:
    return {Targeting.HUBS: 1.0, Targeting.RANDOM: 0.0, Targeting.PERIPHERY: 1.0}


def _theme_risk() -> dict[Theme, float]:
    return {Theme.FEAR: 0.8, Theme.MORAL: 0.1, Theme.HOPE: 0.1, Theme.COMMUNITY: 0.1}


def _claim_risk() -> dict[ClaimType, float]:
    return {ClaimType.MISLEADING: 0.7, ClaimType.EXAGGERATED: 0.5, ClaimType.FACTUAL: 0.0}


@dataclass(frozen=True)
class UtilityWeights:
    w_intensity: float = 0.6
    w_manipulation: float = 0.5
    w_autonomy: float = 0.3
    w_fidelity: float = 0.2
    w_targeting: float = 0.15
    theme_boost: dict[Theme, float] = field(default_factory=_theme_boost)
    claim_boost: dict[ClaimType, float] = field(default_factory=_claim_boost)
    timing_boost: dict[Timing, float] = field(default_factory=_timing_boost)
    target_boost: dict[Targeting, float] = field(default_factory=_target_boost)
    theme_risk: dict[Theme, float] = field(default_factory=_theme_risk)
    claim_risk: dict[ClaimType, float] = field(default_factory=_claim_risk)
    targeting_bias: dict[Targeting, float] = field(default_factory=_targeting_bias)

    @classmethod
    def from_constitution(cls, c: Constitution) -> "UtilityWeights":
        return cls(w_intensity=c.intensity_penalty)


@dataclass(frozen=True)
class SelectionResult:
    selected: Policy | None
    selected_index: int | None
    mode: GovernanceMode
    feasible_count: int
    feasible_indices: tuple[int, ...]
    rejections: tuple[RejectionRecord, ...]
    utility_scores: dict[int, float]


def violation_reasons(p: Policy, c: Constitution) -> tuple[Reason, ...]:
    reasons = []
    if p.theme in c.forbidden_themes:
        reasons.append(Reason.FORBIDDEN_THEME)
    if p.claim_type in c.forbidden_claims:
        reasons.append(Reason.FORBIDDEN_CLAIM)
    if p.intensity > c.max_intensity:
        reasons.append(Reason.INTENSITY_EXCEEDED)
    return tuple(reasons)


def hard_filter(pool: CandidatePool, c: Constitution, deployment_index: int = 0) -> tuple[list[int], list[RejectionRecord]]:
    """Split the pool into feasible indices (pool order) and rejections listing every broken rule."""
    feasible: list[int] = []
    rejections: list[RejectionRecord] = []
    for i, p in enumerate(pool.candidates):
        reasons = violation_reasons(p, c)
        if reasons:
            rejections.append(RejectionRecord(deployment_index, i, reasons))
        else:
            feasible.append(i)
    return feasible, rejections


def cooperation_boost_proxy(p: Policy, w: UtilityWeights) -> float:
    return (
        p.intensity
        * w.theme_boost[p.theme]
        * w.claim_boost[p.claim_type]
        * w.timing_boost[p.timing]
        * w.target_boost[p.targeting]
    )


def manipulation_score(p: Policy, w: UtilityWeights) -> float:
    return w.theme_risk[p.theme] + w.claim_risk[p.claim_type]


def soft_utility(p: Policy, w: UtilityWeights, pop_susceptibility_mean: float) -> float:
    return (
        cooperation_boost_proxy(p, w)
        - w.w_intensity * p.intensity**2
        - w.w_manipulation * manipulation_score(p, w)
        - w.w_autonomy * p.intensity * pop_susceptibility_mean
        - w.w_fidelity * (1.0 - explanation_fidelity(p))
        - w.w_targeting * w.targeting_bias[p.targeting]
    )


def select_policy(
    pool: CandidatePool,
    mode: GovernanceMode | str,
    c: Constitution,
    w: UtilityWeights,
    s_mean: float,
    deployment_index: int = 0,
) -> SelectionResult:
    mode = GovernanceMode(mode)
    if len(pool) == 0:
        raise ValueError("empty candidate pool")
    cands = pool.candidates

    if mode is GovernanceMode.UNCONSTRAINED:
        best = max(range(len(cands)), key=lambda i: (cooperation_boost_proxy(cands[i], w), -i))
        return SelectionResult(cands[best], best, mode, len(cands), tuple(range(len(cands))), (), {})

    feasible, rejections = hard_filter(pool, c, deployment_index)
    scores: dict[int, float] = {}
    best: int | None = None
    if feasible:
        if mode is GovernanceMode.GOVERNED:
            scores = {i: soft_utility(cands[i], w, s_mean) for i in feasible}
            # highest utility, then lowest intensity, then lowest index
            best = min(feasible, key=lambda i: (-scores[i], cands[i].intensity, i))
        else:
            best = min(feasible, key=lambda i: (-cands[i].intensity, i))
    return SelectionResult(
        cands[best] if best is not None else None,
        best,
        mode,
        len(feasible),
        tuple(feasible),
        tuple(rejections),
        scores,
    )


def effective_dose(p: Policy, mode: GovernanceMode | str, c: Constitution, dose_scale: float) -> float:
    attenuation = c.exposure_multiplier if GovernanceMode(mode) is GovernanceMode.GOVERNED else 1.0
    return p.intensity * dose_scale * attenuation


def effective_decay(mode: GovernanceMode | str, cfg: SimConfig) -> float:
    extra = cfg.constitution.governance_decay if GovernanceMode(mode) is GovernanceMode.GOVERNED else 0.0
    return cfg.base_decay + extra


# -- audit trail -----------------------------------------------------------


class AuditError(ValueError):
    pass


class AuditTrail:
    """Append-only list of per-deployment records, serialized as JSON lines."""

    def __init__(self) -> None:
        self._entries: list[dict[str, Any]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(list(self._entries))

    @property
    def entries(self) -> tuple[dict[str, Any], ...]:
        return tuple(self._entries)

    def append(self, entry: dict[str, Any]) -> None:
        # round-trip through JSON so later mutation of the caller's dict cannot leak in
        self._entries.append(json.loads(json.dumps(entry)))

    def record_deployment(
        self,
        *,
        deployment_index: int,
        t: int,
        mode: GovernanceMode,
        threat: str,
        pool: CandidatePool,
        result: SelectionResult,
        targets: Iterable[int] = (),
        dose: float = 0.0,
        compiler_source: str = "mock",
        compiler_fallback: str | None = None,
    ) -> None:
        self.append(
            {
                "deployment_index": deployment_index,
                "t": t,
                "mode": mode.value,
                "threat": threat,
                "pool": [
                    {"index": i, "provenance": prov, "policy": p.to_dict()}
                    for i, (p, prov) in enumerate(zip(pool.candidates, pool.provenance))
                ],
                "feasible_indices": list(result.feasible_indices),
                "feasible_count": result.feasible_count,
                "rejections": [r.to_dict() for r in result.rejections],
                "utility_scores": {str(i): round(s, 12) for i, s in sorted(result.utility_scores.items())},
                "selected_index": result.selected_index,
                "selected": result.selected.to_dict() if result.selected is not None else None,
                "skipped": result.selected is None,
                "targets": sorted(int(x) for x in targets),
                "dose": round(dose, 12),
                "compiler_source": compiler_source,
                "compiler_fallback": compiler_fallback,
            }
        )

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self._entries)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path: str | Path) -> "AuditTrail":
        trail = cls()
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AuditError(f"{path}:{lineno}: malformed audit line ({exc.msg})") from None
            if not isinstance(entry, dict) or "deployment_index" not in entry or "pool" not in entry:
                raise AuditError(f"{path}:{lineno}: not an audit record")
            trail._entries.append(entry)
        return trail
