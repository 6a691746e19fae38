from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class MaskPair:
    """Per-pixel foreground and background probabilities (``fg + bg = 1``)."""

    fg: np.ndarray
    bg: np.ndarray

    @classmethod
    def from_fg(cls, fg) -> "MaskPair":
        fg = np.asarray(fg, dtype=np.float64)
        if fg.ndim != 2:
            raise InvalidArgumentError("mask must be 2-D")
        if fg.size and (fg.min() < 0.0 or fg.max() > 1.0 or not np.all(np.isfinite(fg))):
            raise InvalidArgumentError("mask probabilities must lie in [0, 1]")
        return cls(fg, 1.0 - fg)

    @classmethod
    def from_box(cls, shape, box) -> "MaskPair":
        """Filled axis-aligned box ``(x, y, w, h)`` in pixels."""
        x, y, w, h = (int(round(v)) for v in box)
        fg = np.zeros(shape)
        fg[max(y, 0) : y + h, max(x, 0) : x + w] = 1.0
        return cls.from_fg(fg)

    @property
    def shape(self) -> tuple[int, int]:
        return self.fg.shape

    def binary(self, threshold: float = 0.5) -> np.ndarray:
        return self.fg > threshold

    def copy(self) -> "MaskPair":
        return MaskPair(self.fg.copy(), self.bg.copy())
