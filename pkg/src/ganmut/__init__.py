"""Conditional expression GAN with a learnable polar emotion space."""

from .emotion_space import (
    DirectionTable,
    EmotionCode,
    EmotionLabel,
    cartesian_to_polar,
    init_directions,
    label_for_code,
    normalize_code,
    polar_to_cartesian,
    sample_condition,
)
from .losses import LossBreakdown, LossWeights
from .networks import ConfigError, DiscriminatorOutput, ModelConfig, build_models
from .trainer import TrainConfig, TrainState, TrainTrace, init_state, train

__version__ = "0.1.0"
