"""Uncertainty queue deciding which frames may enter the appearance memory."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, StateError

PEAK_EPS = 1e-6


class Decision(str, Enum):
    PRESERVED = "preserved"
    REMOVED = "removed"


@dataclass
class UncertaintyQueue:
    max_length: int = 20
    hard_threshold: float = 10.0
    values: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.max_length < 1:
            raise ConfigurationError("queue length must be positive")
        if not self.hard_threshold > 0:
            raise ConfigurationError("hard threshold must be positive")
        self.values = deque(self.values, maxlen=self.max_length)

    def __len__(self):
        return len(self.values)


def uncertainty(spatial_map, hard_threshold: float = 10.0) -> float:
    """Reciprocal of the map's peak; a peak at or below 1e-6 forces removal."""
    m = np.asarray(spatial_map, dtype=np.float64)
    if m.size == 0:
        raise InvalidArgumentError("uncertainty of an empty map")
    peak = float(m.max())
    if not peak > PEAK_EPS:
        return hard_threshold + 1.0
    return 1.0 / peak


def average(queue: UncertaintyQueue) -> float:
    """Mean of the stored values (divides by the current count, not the capacity)."""
    if not queue.values:
        raise StateError("average of an empty uncertainty queue")
    return math.fsum(queue.values) / len(queue.values)


def decide(u_t: float, queue: UncertaintyQueue) -> Decision:
    if u_t > queue.hard_threshold:
        return Decision.REMOVED
    if queue.values and u_t > average(queue):
        return Decision.REMOVED
    return Decision.PRESERVED


def push(queue: UncertaintyQueue, u_t: float) -> UncertaintyQueue:
    """Append ``u_t``; the deque's maxlen drops the oldest value when full."""
    if not (math.isfinite(u_t) and u_t > 0):
        raise InvalidArgumentError(f"uncertainty must be finite and positive, got {u_t}")
    queue.values.append(float(u_t))
    return queue
