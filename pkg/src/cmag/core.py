"""Domain types, experiment configuration and shared numeric primitives.

Everything in here is an immutable value. A :class:`SimConfig` fully
determines a run together with a governance mode, a threat mode and a seed.
"""

from __future__ import annotations

import enum
import json
import math
import zlib
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration input."""


class Theme(str, enum.Enum):
    MORAL = "moral"
    HOPE = "hope"
    COMMUNITY = "community"
    FEAR = "fear"


class ClaimType(str, enum.Enum):
    FACTUAL = "factual"
    EXAGGERATED = "exaggerated"
    MISLEADING = "misleading"


class Targeting(str, enum.Enum):
    HUBS = "hubs"
    RANDOM = "random"
    PERIPHERY = "periphery"


class Timing(str, enum.Enum):
    BURST = "burst"
    SUSTAINED = "sustained"


class IntensityBand(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @classmethod
    def of(cls, intensity: float) -> "IntensityBand":
        if intensity < 0.4:
            return cls.LOW
        if intensity < 0.7:
            return cls.MEDIUM
        return cls.HIGH

    def contains(self, intensity: float) -> bool:
        return IntensityBand.of(intensity) is self


class GovernanceMode(str, enum.Enum):
    GOVERNED = "governed"
    NAIVE = "naive"
    UNCONSTRAINED = "unconstrained"


class ThreatMode(str, enum.Enum):
    ADVERSARIAL = "adversarial"
    BENIGN = "benign"


BENIGN_THEMES = (Theme.MORAL, Theme.HOPE, Theme.COMMUNITY)


@dataclass(frozen=True)
class ExplanationMeta:
    rationale_text: str
    declared_theme: Theme
    declared_claim_type: ClaimType
    declared_intensity_band: IntensityBand


@dataclass(frozen=True)
class Policy:
    """A structured influence intervention."""

    theme: Theme
    claim_type: ClaimType
    intensity: float
    targeting: Targeting
    timing: Timing
    explanation: ExplanationMeta

    def __post_init__(self) -> None:
        if not (0.0 <= self.intensity <= 1.0) or math.isnan(self.intensity):
            raise ValueError(f"intensity must lie in [0, 1], got {self.intensity!r}")

    @classmethod
    def honest(
        cls,
        theme: Theme,
        claim_type: ClaimType,
        intensity: float,
        targeting: Targeting,
        timing: Timing,
        rationale: str = "",
    ) -> "Policy":
        """Build a policy whose explanation declares exactly its own attributes."""
        meta = ExplanationMeta(
            rationale_text=rationale,
            declared_theme=theme,
            declared_claim_type=claim_type,
            declared_intensity_band=IntensityBand.of(intensity),
        )
        return cls(theme, claim_type, float(intensity), targeting, timing, meta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "theme": self.theme.value,
            "claim_type": self.claim_type.value,
            "intensity": self.intensity,
            "targeting": self.targeting.value,
            "timing": self.timing.value,
            "explanation": {
                "rationale_text": self.explanation.rationale_text,
                "declared_theme": self.explanation.declared_theme.value,
                "declared_claim_type": self.explanation.declared_claim_type.value,
                "declared_intensity_band": self.explanation.declared_intensity_band.value,
            },
        }


@dataclass(frozen=True)
class Constitution:
    forbidden_themes: frozenset[Theme] = frozenset({Theme.FEAR})
    forbidden_claims: frozenset[ClaimType] = frozenset(
        {ClaimType.EXAGGERATED, ClaimType.MISLEADING}
    )
    max_intensity: float = 0.80
    intensity_penalty: float = 0.6
    exposure_multiplier: float = 0.70
    governance_decay: float = 0.03


@dataclass(frozen=True)
class DynamicsCoefficients:
    logit_bias: float = -0.25
    prosocial_gain: float = 2.1
    exposure_gain: float = 0.85


@dataclass(frozen=True)
class MetricsCoefficients:
    autonomy_coeff: float = 0.18
    integrity_coeff: float = 0.033
    fairness_coeff: float = 0.22


@dataclass(frozen=True)
class SimConfig:
    n_agents: int = 80
    ba_m: int = 3
    prosocial_mean: float = 0.42
    prosocial_std: float = 0.12
    susceptibility_mean: float = 0.55
    susceptibility_std: float = 0.18
    horizon: int = 100
    deploy_interval: int = 10
    target_fraction: float = 0.12
    base_decay: float = 0.06
    diffusion_rate: float = 0.12
    exposure_cap: float = 5.0
    n_candidates: int = 6
    # adversarial p_v; benign runs use benign_violation_prob
    violation_prob: float = 0.70
    benign_violation_prob: float = 0.15
    dose_scale: float = 4.0
    hub_quantile: float = 0.75
    steady_window: int = 15
    constitution: Constitution = field(default_factory=Constitution)
    dynamics: DynamicsCoefficients = field(default_factory=DynamicsCoefficients)
    metrics: MetricsCoefficients = field(default_factory=MetricsCoefficients)

    def violation_prob_for(self, threat: ThreatMode | str) -> float:
        threat = ThreatMode(threat)
        if threat is ThreatMode.ADVERSARIAL:
            return self.violation_prob
        return self.benign_violation_prob

    @property
    def n_deployments(self) -> int:
        return math.ceil(self.horizon / self.deploy_interval)

    def with_param(self, name: str, value: Any) -> "SimConfig":
        """Return a copy with one (possibly dotted, e.g. ``constitution.max_intensity``) field replaced."""
        head, _, rest = name.partition(".")
        names = {f.name for f in fields(self)}
        if head not in names:
            raise ConfigError(f"unknown config key: {name!r}")
        if rest:
            sub = getattr(self, head)
            sub_names = {f.name for f in fields(sub)}
            if rest not in sub_names:
                raise ConfigError(f"unknown config key: {name!r}")
            return replace(self, **{head: replace(sub, **{rest: value})})
        if is_dataclass(getattr(self, head)):
            raise ConfigError(f"{name!r} is a section, not a numeric key")
        current = getattr(self, head)
        if isinstance(current, int) and not isinstance(current, bool):
            if float(value) != int(value):
                raise ConfigError(f"{name!r} must be an integer, got {value!r}")
            value = int(value)
        return replace(self, **{head: value})

    def get_param(self, name: str) -> Any:
        obj: Any = self
        for part in name.split("."):
            if not is_dataclass(obj) or part not in {f.name for f in fields(obj)}:
                raise ConfigError(f"unknown config key: {name!r}")
            obj = getattr(obj, part)
        return obj


def default_config() -> SimConfig:
    return SimConfig()


def validate_config(cfg: SimConfig) -> list[str]:
    """Return the names of violated invariants; an empty list means the config is valid."""
    bad: list[str] = []
    c = cfg.constitution

    def check(ok: bool, name: str) -> None:
        if not ok:
            bad.append(name)

    check(cfg.n_agents > cfg.ba_m >= 1, "n_agents")
    check(cfg.ba_m >= 1, "ba_m")
    check(cfg.prosocial_std >= 0, "prosocial_std")
    check(cfg.susceptibility_std >= 0, "susceptibility_std")
    check(cfg.deploy_interval >= 1, "deploy_interval")
    check(cfg.horizon >= cfg.deploy_interval, "horizon")
    check(0 < cfg.target_fraction <= 1, "target_fraction")
    check(0 <= cfg.base_decay <= 1, "base_decay")
    check(0 <= cfg.diffusion_rate < 1, "diffusion_rate")
    check(cfg.exposure_cap > 0, "exposure_cap")
    check(cfg.n_candidates >= 3, "n_candidates")
    check(0 <= cfg.violation_prob <= 1, "violation_prob")
    check(0 <= cfg.benign_violation_prob <= 1, "benign_violation_prob")
    check(cfg.dose_scale >= 0, "dose_scale")
    check(0 < cfg.hub_quantile < 1, "hub_quantile")
    check(1 <= cfg.steady_window <= cfg.horizon, "steady_window")
    check(0 < c.max_intensity <= 1, "max_intensity")
    check(0 < c.exposure_multiplier <= 1, "exposure_multiplier")
    check(c.governance_decay >= 0, "governance_decay")
    check(c.intensity_penalty >= 0, "intensity_penalty")
    for name in ("logit_bias", "prosocial_gain", "exposure_gain"):
        check(math.isfinite(getattr(cfg.dynamics, name)), name)
    for name in ("autonomy_coeff", "integrity_coeff", "fairness_coeff"):
        check(getattr(cfg.metrics, name) >= 0, name)
    return bad


def sigmoid(x):
    """Logistic function; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    # exp of a non-positive argument never overflows
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return float(out) if out.ndim == 0 else out


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent named random stream derived from a master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


# -- serialization ---------------------------------------------------------

_SECTIONS = {
    "constitution": Constitution,
    "dynamics": DynamicsCoefficients,
    "metrics": MetricsCoefficients,
}


def config_to_dict(cfg: SimConfig) -> dict[str, Any]:
    d = asdict(cfg)
    c = d["constitution"]
    c["forbidden_themes"] = sorted(t.value for t in cfg.constitution.forbidden_themes)
    c["forbidden_claims"] = sorted(t.value for t in cfg.constitution.forbidden_claims)
    return d


def _coerce(name: str, current: Any, value: Any) -> Any:
    if isinstance(current, bool) or isinstance(value, bool):
        raise ConfigError(f"{name}: booleans are not accepted")
    if isinstance(current, int):
        if not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    return value


def _section_from_dict(cls, data: dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    base = cls()
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys in {where}: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        current = getattr(base, key)
        if key == "forbidden_themes":
            try:
                kwargs[key] = frozenset(Theme(v) for v in value)
            except ValueError as exc:
                raise ConfigError(f"{where}.{key}: {exc}") from None
        elif key == "forbidden_claims":
            try:
                kwargs[key] = frozenset(ClaimType(v) for v in value)
            except ValueError as exc:
                raise ConfigError(f"{where}.{key}: {exc}") from None
        else:
            kwargs[key] = _coerce(f"{where}.{key}", current, value)
    return replace(base, **kwargs)


def config_from_dict(data: dict[str, Any]) -> SimConfig:
    """Parse a (possibly partial) key/value tree; missing keys keep their defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    top = {k: v for k, v in data.items() if k not in _SECTIONS}
    cfg = _section_from_dict(SimConfig, top, "config")
    sections = {
        name: _section_from_dict(cls, data[name], name)
        for name, cls in _SECTIONS.items()
        if name in data
    }
    return replace(cfg, **sections)


def load_config(path: str | Path) -> SimConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = config_from_dict(data)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(f"{path}: invalid values for {', '.join(problems)}")
    return cfg


def dump_config(cfg: SimConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
