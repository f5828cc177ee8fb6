"""Forward-only EVA hard-attention model."""
from .control import (
    GateState,
    VarianceController,
    gate_step,
    label_error,
    relay,
    self_error,
    update_variance,
)
from .glimpse import GlimpseConfig, GlimpseObservation, encode_glimpse, extract_glimpse
from .losses import ce_loss, gate_regularizers, reinforce_loss, total_objective
from .rollout import RolloutTrace, StepRecord, rollout
from .weights import (
    EvaDims,
    WeightBundle,
    WeightFormatError,
    dumps_weights,
    init_weights,
    load_weights,
    loads_weights,
    save_weights,
    zero_weights,
)

__all__ = [
    "EvaDims", "GateState", "GlimpseConfig", "GlimpseObservation", "RolloutTrace", "StepRecord",
    "VarianceController", "WeightBundle", "WeightFormatError", "ce_loss", "dumps_weights",
    "encode_glimpse", "extract_glimpse", "gate_regularizers", "gate_step", "init_weights",
    "label_error", "load_weights", "loads_weights", "reinforce_loss", "relay", "rollout",
    "save_weights", "self_error", "total_objective", "update_variance", "zero_weights",
]
