"""Seeded synthetic video sequences with exact ground-truth masks.

A scene is a textured background, one target whose contour is a polar
radius function (ellipse or regular polygon) modulated by a radial
sinusoid, optional occluders composited on top, and photometric drift.
The ground-truth mask is the target's own footprint: occluders hide the
target in the frame but never cut it out of the mask.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ConfigurationError
from ..mask import MaskPair
from ..tensor import SplitMix64, bilinear_resize

EDGE_MARGIN = 2


@dataclass
class TargetSpec:
    shape: str = "ellipse"  # ellipse | polygon
    radii: tuple[float, float] = (16.0, 20.0)  # (rows, cols); polygons use radii[0]
    vertices: int = 6
    rotation: float = 0.0
    spin: float = 0.0  # radians per frame
    color: tuple[float, float, float] = (0.85, 0.25, 0.2)
    texture: float = 0.08  # amplitude of the stripe texture
    color_drift: tuple[float, float, float] = (0.0, 0.0, 0.0)  # per frame
    hue_drift: float = 0.0  # radians per frame, rotation about the grey axis
    drift_frames: tuple[int, int] = (0, 1 << 30)  # drift runs over [start, stop) and then holds


@dataclass
class MotionSpec:
    start: tuple[float, float] = (64.0, 64.0)
    velocity: tuple[float, float] = (0.0, 0.0)
    amplitude: tuple[float, float] = (0.0, 0.0)
    period: float = 30.0


@dataclass
class DeformSpec:
    cycles: int = 3
    amplitude: float = 0.0
    speed: float = 0.2  # phase advance per frame


@dataclass
class OccluderSpec:
    shape: str = "rect"  # rect | ellipse
    size: tuple[float, float] = (20.0, 20.0)
    color: tuple[float, float, float] = (0.3, 0.3, 0.3)
    opacity: float = 1.0
    entry_frame: int = 10
    duration: int = 10
    offset: tuple[float, float] = (0.0, 0.0)  # from the target center at entry
    velocity: tuple[float, float] = (0.0, 0.0)


@dataclass
class PhotometricSpec:
    brightness_slope: float = 0.0  # relative change per frame
    noise_sigma: float = 0.01


@dataclass
class BackgroundSpec:
    texture_seed: int = 1
    base: tuple[float, float, float] = (0.35, 0.5, 0.45)
    contrast: float = 0.15
    grid: int = 6
    clutter: int = 0  # number of static distractor blobs
    clutter_colors: list = field(default_factory=list)
    clutter_size: tuple[float, float] = (8.0, 14.0)


@dataclass
class SceneSpec:
    height: int = 128
    width: int = 128
    frames: int = 60
    seed: int = 0
    target: TargetSpec = field(default_factory=TargetSpec)
    motion: MotionSpec = field(default_factory=MotionSpec)
    deform: DeformSpec = field(default_factory=DeformSpec)
    occluders: list[OccluderSpec] = field(default_factory=list)
    photometric: PhotometricSpec = field(default_factory=PhotometricSpec)
    background: BackgroundSpec = field(default_factory=BackgroundSpec)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return _build(cls, d, "scene")


_NESTED = {
    "target": TargetSpec,
    "motion": MotionSpec,
    "deform": DeformSpec,
    "photometric": PhotometricSpec,
    "background": BackgroundSpec,
}


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {}
    for k, v in d.items():
        if cls is SceneSpec and k in _NESTED:
            v = _build(_NESTED[k], v, f"{where}.{k}")
        elif cls is SceneSpec and k == "occluders":
            v = [_build(OccluderSpec, o, f"{where}.occluders[{i}]") for i, o in enumerate(v)]
        elif isinstance(v, list) and k != "clutter_colors":
            v = tuple(v)
        kw[k] = v
    return cls(**kw)


@dataclass
class SequenceSample:
    frames: list
    gt_masks: list
    occluded: list  # fraction of target pixels covered by an occluder, per frame
    spec: SceneSpec | None = None

    def __len__(self):
        return len(self.frames)


def _validate(spec: SceneSpec):
    if spec.height < 8 or spec.width < 8 or spec.frames < 1:
        raise ConfigurationError("scene needs at least 8x8 pixels and one frame")
    t = spec.target
    if t.shape not in ("ellipse", "polygon"):
        raise ConfigurationError(f"unknown target shape {t.shape!r}")
    if t.shape == "polygon" and t.vertices < 3:
        raise ConfigurationError("polygon needs >= 3 vertices")
    if min(t.radii) <= 0:
        raise ConfigurationError("target radii must be positive")
    if not 0 <= t.drift_frames[0] <= t.drift_frames[1]:
        raise ConfigurationError("drift_frames must satisfy 0 <= start <= stop")
    for o in spec.occluders:
        if o.shape not in ("rect", "ellipse"):
            raise ConfigurationError(f"unknown occluder shape {o.shape!r}")
        if not 0 <= o.opacity <= 1:
            raise ConfigurationError("occluder opacity must be in [0, 1]")
    if max_radius(spec) + EDGE_MARGIN > min(spec.height, spec.width) / 2:
        raise ConfigurationError("target cannot fit inside the frame")


def max_radius(spec: SceneSpec) -> float:
    t = spec.target
    r = max(t.radii) if t.shape == "ellipse" else t.radii[0]
    return r * (1.0 + abs(spec.deform.amplitude))


def _grey_rotation(theta: float) -> np.ndarray:
    # Rodrigues rotation about the unit grey axis (1, 1, 1) / sqrt(3)
    k = np.full(3, 1.0 / math.sqrt(3.0))
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(theta) * kx + (1.0 - math.cos(theta)) * (kx @ kx)


def target_color(tg: TargetSpec, t: int) -> np.ndarray:
    """Base color at frame ``t``: hue rotation about mid-grey plus linear drift, clipped to [0, 1]."""
    start, stop = tg.drift_frames
    n = min(max(t, start), stop) - start
    c = np.asarray(tg.color, dtype=np.float64)
    if tg.hue_drift:
        c = 0.5 + _grey_rotation(n * tg.hue_drift) @ (c - 0.5)
    return np.clip(c + n * np.asarray(tg.color_drift), 0.0, 1.0)


def target_center(spec: SceneSpec, t: int) -> tuple[float, float]:
    """Center at frame ``t``, clamped so the target keeps its edge margin."""
    m = spec.motion
    w = 2.0 * math.pi / m.period if m.period else 0.0
    cy = m.start[0] + m.velocity[0] * t + m.amplitude[0] * math.sin(w * t)
    cx = m.start[1] + m.velocity[1] * t + m.amplitude[1] * math.sin(w * t + 0.5 * math.pi)
    lim = max_radius(spec) + EDGE_MARGIN
    cy = min(max(cy, lim), spec.height - 1 - lim)
    cx = min(max(cx, lim), spec.width - 1 - lim)
    return cy, cx


def _radius(spec: SceneSpec, phi: np.ndarray, t: int) -> np.ndarray:
    tg = spec.target
    theta = phi - (tg.rotation + tg.spin * t)
    if tg.shape == "ellipse":
        ry, rx = tg.radii
        r = 1.0 / np.sqrt((np.cos(theta) / rx) ** 2 + (np.sin(theta) / ry) ** 2)
    else:
        n = tg.vertices
        sector = 2.0 * math.pi / n
        r = tg.radii[0] * math.cos(math.pi / n) / np.cos(np.mod(theta, sector) - math.pi / n)
    d = spec.deform
    if d.amplitude:
        r = r * (1.0 + d.amplitude * np.sin(d.cycles * phi + d.speed * t))
    return r


def target_mask(spec: SceneSpec, t: int) -> np.ndarray:
    cy, cx = target_center(spec, t)
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    dy = rows - cy
    dx = cols - cx
    return np.hypot(dy, dx) <= _radius(spec, np.arctan2(dy, dx), t)


def _background(spec: SceneSpec) -> np.ndarray:
    b = spec.background
    rng = SplitMix64(b.texture_seed)
    coarse = rng.normal((b.grid, b.grid, 3), scale=b.contrast)
    bg = np.asarray(b.base) + bilinear_resize(coarse, spec.height, spec.width)
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    lo, hi = b.clutter_size
    for i in range(b.clutter):
        cy = rng.uniform() * (spec.height - 1)
        cx = rng.uniform() * (spec.width - 1)
        ry = lo + rng.uniform() * (hi - lo)
        rx = lo + rng.uniform() * (hi - lo)
        color = b.clutter_colors[i % len(b.clutter_colors)] if b.clutter_colors else rng.uniform(3)
        inside = ((rows - cy) / ry) ** 2 + ((cols - cx) / rx) ** 2 <= 1.0
        bg[inside] = color
    return bg


def _occluder_mask(spec: SceneSpec, o: OccluderSpec, t: int, entry_center) -> np.ndarray:
    dt = t - o.entry_frame
    cy = entry_center[0] + o.offset[0] + o.velocity[0] * dt
    cx = entry_center[1] + o.offset[1] + o.velocity[1] * dt
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    hy, hx = o.size[0] / 2.0, o.size[1] / 2.0
    if o.shape == "rect":
        return (np.abs(rows - cy) <= hy) & (np.abs(cols - cx) <= hx)
    return ((rows - cy) / hy) ** 2 + ((cols - cx) / hx) ** 2 <= 1.0


def generate(spec: SceneSpec) -> SequenceSample:
    """Render every frame and its ground-truth mask; a pure function of ``spec``."""
    _validate(spec)
    rng = SplitMix64(spec.seed)
    bg = _background(spec)
    tg = spec.target
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    frames, masks, occluded = [], [], []
    for t in range(spec.frames):
        fg = target_mask(spec, t)
        cy, cx = target_center(spec, t)
        color = target_color(tg, t)
        # stripes move with the target so texture is part of its appearance
        stripes = np.sin(0.6 * ((rows - cy) + 0.5 * (cols - cx)))
        tex = color[None, None, :] * (1.0 + tg.texture * stripes[:, :, None])
        img = np.where(fg[:, :, None], tex, bg)
        img = img * (1.0 + spec.photometric.brightness_slope * t)
        if spec.photometric.noise_sigma > 0:
            img = img + rng.normal(img.shape, scale=spec.photometric.noise_sigma)
        img = np.clip(img, 0.0, 1.0)
        covered = np.zeros(fg.shape, dtype=bool)
        for o in spec.occluders:
            if not o.entry_frame <= t < o.entry_frame + o.duration:
                continue
            om = _occluder_mask(spec, o, t, target_center(spec, o.entry_frame))
            col = np.asarray(o.color, dtype=np.float64)
            if o.opacity == 1.0:
                img[om] = col
            else:
                img[om] = (1.0 - o.opacity) * img[om] + o.opacity * col
            if o.opacity > 0:
                covered |= om
        frames.append(img)
        masks.append(MaskPair.from_fg(fg.astype(np.float64)))
        n_fg = int(fg.sum())
        occluded.append(float((covered & fg).sum() / n_fg) if n_fg else 0.0)
    return SequenceSample(frames, masks, occluded, spec)
