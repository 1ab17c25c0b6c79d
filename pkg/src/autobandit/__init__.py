"""Contextual-bandit benchmarking with an automatically searched Q-function."""

from .core import Episode, InteractionLog, RegretSeries, append_episode, compute_regret
from .errors import (
    ActionError,
    BanditError,
    ConfigError,
    DataError,
    IoError,
    LengthError,
    ParseError,
    SchemaError,
    StreamExhausted,
)

__version__ = "0.1.0"
