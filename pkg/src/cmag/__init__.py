"""Constitutional governance of an influence-policy loop on a networked agent population."""

from .core import (
    ConfigError,
    Constitution,
    GovernanceMode,
    Policy,
    SimConfig,
    ThreatMode,
    default_config,
    load_config,
)
from .dynamics import RunResult, run_simulation

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Constitution",
    "GovernanceMode",
    "Policy",
    "SimConfig",
    "ThreatMode",
    "default_config",
    "load_config",
    "RunResult",
    "run_simulation",
]
