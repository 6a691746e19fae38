"""Spatio-appearance memory tracker on a synthetic-video test bed."""
from .errors import (
    ConfigurationError,
    DataError,
    EmptyMaskError,
    InvalidArgumentError,
    NumericError,
    SamTrackError,
    StateError,
)
from .mask import MaskPair
from .pipeline import TrackerConfig, TrackerState, TrackResult, init_from_box, init_from_mask, step

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataError",
    "EmptyMaskError",
    "InvalidArgumentError",
    "MaskPair",
    "NumericError",
    "SamTrackError",
    "StateError",
    "TrackResult",
    "TrackerConfig",
    "TrackerState",
    "init_from_box",
    "init_from_mask",
    "step",
]
