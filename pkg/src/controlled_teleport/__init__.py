"""Exact simulation of controlled multiqubit teleportation through an EPR-GHZ channel."""

__version__ = "0.1.0"

from .errors import ConfigurationError, InvariantError
from .measurement import BellOutcome
from .protocol import (
    BranchLabel,
    CooperationPolicy,
    MessageState,
    Mode,
    ScenarioConfig,
    Strategy,
    Variant,
    correction_for,
    parity_branch,
    prepare_channel_state,
    run_protocol,
)

__all__ = [
    "BellOutcome",
    "BranchLabel",
    "ConfigurationError",
    "CooperationPolicy",
    "InvariantError",
    "MessageState",
    "Mode",
    "ScenarioConfig",
    "Strategy",
    "Variant",
    "correction_for",
    "parity_branch",
    "prepare_channel_state",
    "run_protocol",
]
