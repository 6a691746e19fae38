"""Segmentation and tracking scores: J, contour F, accuracy and a robustness proxy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, maximum_filter

from ..errors import InvalidArgumentError
from ..mask import MaskPair

FAILURE_IOU = 0.1
FAILURE_RUN = 5


def _binary(mask, threshold: float) -> np.ndarray:
    fg = mask.fg if isinstance(mask, MaskPair) else np.asarray(mask, dtype=np.float64)
    return fg > threshold


def _pair(pred, gt, threshold):
    p, g = _binary(pred, threshold), _binary(gt, threshold)
    if p.shape != g.shape:
        raise InvalidArgumentError(f"mask dims differ: {p.shape} vs {g.shape}")
    return p, g


def region_similarity(pred, gt, threshold: float = 0.5) -> float:
    """Jaccard index of the binarized masks; two empty masks score 1."""
    p, g = _pair(pred, gt, threshold)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbor outside the mask (the frame edge counts as outside)."""
    cross = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    return mask & ~binary_erosion(mask, cross, border_value=0)


def contour_fmeasure(pred, gt, tolerance_px: int = 1, threshold: float = 0.5) -> float:
    """Boundary F-measure with Chebyshev-distance matching."""
    p, g = _pair(pred, gt, threshold)
    if tolerance_px < 0:
        raise InvalidArgumentError("tolerance must be non-negative")
    bp, bg = boundary(p), boundary(g)
    n_p, n_g = np.count_nonzero(bp), np.count_nonzero(bg)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    size = 2 * tolerance_px + 1
    near_g = maximum_filter(bg, size=size, mode="constant", cval=False)
    near_p = maximum_filter(bp, size=size, mode="constant", cval=False)
    precision = np.count_nonzero(bp & near_g) / n_p
    recall = np.count_nonzero(bg & near_p) / n_g
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    """Scores of one tracked sequence (frame 0, the initialization, is not scored)."""

    ious: list[float]
    fmeasures: list[float]
    failed: list[bool]  # frames inside a failure run
    failures: int
    runtime: float = 0.0
    stage_timings: dict = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return len(self.ious)

    @property
    def j_mean(self) -> float:
        return float(np.mean(self.ious)) if self.ious else 1.0

    @property
    def f_mean(self) -> float:
        return float(np.mean(self.fmeasures)) if self.fmeasures else 1.0

    @property
    def jf_mean(self) -> float:
        return 0.5 * (self.j_mean + self.f_mean)

    @property
    def accuracy(self) -> float:
        ok = [v for v, f in zip(self.ious, self.failed) if not f]
        return float(np.mean(ok)) if ok else 0.0

    @property
    def robustness(self) -> float:
        return self.failures / self.frames if self.frames else 0.0

    @property
    def fps(self) -> float:
        return self.frames / self.runtime if self.runtime > 0 else float("inf")

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "frames": self.frames,
            "J_mean": self.j_mean,
            "F_mean": self.f_mean,
            "JF_mean": self.jf_mean,
            "accuracy": self.accuracy,
            "robustness": self.robustness,
            "failures": self.failures,
            "per_frame_iou": list(self.ious),
        }
        if timing:
            d["runtime_s"] = self.runtime
            d["fps"] = self.fps
            d["stage_timings_s"] = dict(self.stage_timings)
        return d


def aggregate(reports) -> dict:
    """Frame-weighted pooling of several sequence reports; ``reports`` must already be in a fixed order."""
    reports = list(reports)
    ious = [v for r in reports for v in r.ious]
    fs = [v for r in reports for v in r.fmeasures]
    ok = [v for r in reports for v, f in zip(r.ious, r.failed) if not f]
    frames = len(ious)
    failures = sum(r.failures for r in reports)
    j = float(np.mean(ious)) if ious else 1.0
    f = float(np.mean(fs)) if fs else 1.0
    return {
        "sequences": len(reports),
        "frames": frames,
        "J_mean": j,
        "F_mean": f,
        "JF_mean": 0.5 * (j + f),
        "accuracy": float(np.mean(ok)) if ok else 0.0,
        "robustness": failures / frames if frames else 0.0,
        "failures": failures,
    }
