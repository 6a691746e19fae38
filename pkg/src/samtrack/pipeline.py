"""Per-frame tracking loop coupling the appearance and spatial memories."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import dcf as dcf_mod
from . import memory as mem
from .decoder import DecoderParams, LossCfg, decode, fit_first_frame, init_decoder, positional_fuse
from .encoder import EncoderParams, encode_memory, encode_query, init_encoder
from .errors import ConfigurationError, EmptyMaskError, InvalidArgumentError, NumericError
from .geometry import centroid, mask_to_boxes
from .mask import MaskPair
from .sample_filter import Decision, UncertaintyQueue, decide, push, uncertainty


@dataclass
class TrackerConfig:
    seed: int = 0
    channels: int = 32
    stride: int = 4
    key_scale: float = 32.0
    sampling_interval: Optional[int] = 5
    always_include_last: bool = True
    capacity: int = 40
    dcf: dcf_mod.DcfConfig = field(default_factory=dcf_mod.DcfConfig)
    queue_length: int = 20
    hard_threshold: float = 10.0
    filter_enabled: bool = True
    loss: LossCfg = field(default_factory=LossCfg)
    fit_steps: int = 100
    fit_lr: float = 0.05
    mask_threshold: float = 0.5
    posenc: str = "add"
    init_mode: str = "box"

    def validate(self) -> "TrackerConfig":
        if self.channels < 8 or self.channels % 8:
            raise ConfigurationError("channels must be a positive multiple of 8")
        if self.posenc not in ("add", "concat"):
            raise ConfigurationError(f"unknown positional encoding mode {self.posenc!r}")
        if self.init_mode not in ("box", "mask"):
            raise ConfigurationError(f"unknown init mode {self.init_mode!r}")
        if not 0 < self.mask_threshold < 1:
            raise ConfigurationError("mask threshold must lie in (0, 1)")
        if self.fit_steps < 0 or not self.fit_lr > 0:
            raise ConfigurationError("fit steps must be >= 0 and the learning rate positive")
        if self.sampling_interval is not None and self.sampling_interval < 0:
            raise ConfigurationError("sampling interval must be >= 0 or null")
        if self.capacity < 1 or self.queue_length < 1 or not self.hard_threshold > 0:
            raise ConfigurationError("capacity, queue length and hard threshold must be positive")
        self.dcf.validate()
        self.loss.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        kw = dict(d)
        for key, sub in (("dcf", dcf_mod.DcfConfig), ("loss", LossCfg)):
            if key in kw:
                if not isinstance(kw[key], dict):
                    raise ConfigurationError(f"{key} must be an object")
                bad = set(kw[key]) - {f.name for f in fields(sub)}
                if bad:
                    raise ConfigurationError(f"unknown {key} keys {sorted(bad)}")
                kw[key] = sub(**kw[key])
        try:
            return cls(**kw).validate()
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


@dataclass
class TrackResult:
    mask: MaskPair
    axis_box: tuple
    rotated_box: tuple
    uncertainty: float
    preserved: bool
    spatial_peak: float
    fail_safe: bool = False
    empty_mask: bool = False


@dataclass
class TrackerState:
    config: TrackerConfig
    encoder: EncoderParams
    decoder: DecoderParams
    bank: mem.MemoryBank
    dcf: dcf_mod.DcfModel
    queue: UncertaintyQueue
    frame_shape: tuple
    frame_index: int = 0
    last_result: TrackResult | None = None
    timings: dict = field(default_factory=dict, compare=False, repr=False)


STAGES = ("encode", "read", "spatial", "decode", "boxes", "update")


def _tick(state, name, t0):
    t1 = time.perf_counter()
    state.timings[name] = state.timings.get(name, 0.0) + (t1 - t0)
    return t1


def _cell_center(center_px, stride: int, dims) -> tuple[float, float]:
    """Pixel (row, col) to feature-cell coordinates, clamped into the grid."""
    r = min(max(center_px[0] / stride, 0.0), dims[0] - 1)
    c = min(max(center_px[1] / stride, 0.0), dims[1] - 1)
    return r, c


def _check_frame(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise InvalidArgumentError("frame must be an (h, w, 3) array")
    return frame


def _result(mask: MaskPair, cfg: TrackerConfig, u, preserved, peak, fallback=None) -> TrackResult:
    try:
        axis_box, rot_box = mask_to_boxes(mask, cfg.mask_threshold)
        empty = False
    except EmptyMaskError:
        empty = True
        if fallback is not None:
            axis_box, rot_box = fallback.axis_box, fallback.rotated_box
        else:
            axis_box, rot_box = (0.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0, 0.0)
    return TrackResult(mask, axis_box, rot_box, float(u), bool(preserved), float(peak), empty_mask=empty)


def _initialize(config: TrackerConfig, frame, mask: MaskPair, is_box: bool, label_center_px, box=None):
    config.validate()
    frame = _check_frame(frame)
    enc = init_encoder(config.seed, config.channels, config.stride, config.key_scale)
    dec_in = config.channels + (1 if config.posenc == "concat" else 0)
    dec = init_decoder(config.seed + 1, config.channels, dec_in)
    bank = mem.MemoryBank(config.sampling_interval, config.always_include_last, config.capacity)
    model = dcf_mod.init_dcf(config.seed + 2, config.channels, config.dcf)
    queue = UncertaintyQueue(config.queue_length, config.hard_threshold)

    emb = encode_memory(enc, frame, mask)
    bank.seed(mem.MemoryEntry(emb.key, emb.value, 0, is_box_mask=is_box))
    q = encode_query(enc, frame)
    dims = q.features.shape[:2]
    label = dcf_mod.make_label(_cell_center(label_center_px, config.stride, dims), dims, config.dcf.sigma)
    dcf_mod.update(model, q.features, label)
    spatial = dcf_mod.evaluate(model, q.features)

    readout = mem.readout_concat(mem.read(bank, q.query), q.query_value)
    fused = positional_fuse(readout, spatial, config.posenc)
    dec = fit_first_frame(dec, fused, q.skips, mask, config.loss, config.fit_steps, config.fit_lr).params
    out_mask = mask
    if is_box:
        x, y, w, h = (int(round(v)) for v in box)
        inside = np.zeros(frame.shape[:2])
        inside[y : y + h, x : x + w] = 1.0
        pred = decode(dec, fused, q.skips, frame.shape[:2])
        out_mask = MaskPair.from_fg(pred.fg * inside)
        emb = encode_memory(enc, frame, out_mask)
        mem.replace_box_mask_entry(bank, mem.MemoryEntry(emb.key, emb.value, 0))
    # the init map scores the filter on its own training sample, so its
    # uncertainty is optimistic and is kept out of the queue
    u0 = uncertainty(spatial, config.hard_threshold)
    state = TrackerState(config, enc, dec, bank, model, queue, frame.shape[:2])
    state.last_result = _result(out_mask, config, u0, True, spatial.max())
    return state


def init_from_box(config: TrackerConfig, frame, axis_box) -> TrackerState:
    """Initialize from an ``(x, y, w, h)`` box via the box-mask bootstrap."""
    frame = _check_frame(frame)
    x, y, w, h = axis_box
    H, W = frame.shape[:2]
    if w < 1 or h < 1:
        raise InvalidArgumentError("degenerate initialization box")
    if x < 0 or y < 0 or x + w > W or y + h > H:
        raise InvalidArgumentError("initialization box leaves the frame")
    box_mask = MaskPair.from_box((H, W), axis_box)
    center = (y + (h - 1) / 2.0, x + (w - 1) / 2.0)
    return _initialize(config, frame, box_mask, True, center, box=axis_box)


def init_from_mask(config: TrackerConfig, frame, mask: MaskPair) -> TrackerState:
    """Initialize from a full segmentation mask; the SMN label sits at its centroid."""
    frame = _check_frame(frame)
    if mask.fg.shape != frame.shape[:2]:
        raise InvalidArgumentError("mask and frame dims differ")
    try:
        center = centroid(mask, config.mask_threshold)
    except EmptyMaskError as exc:
        raise InvalidArgumentError("initialization mask is empty") from exc
    return _initialize(config, frame, mask, False, center)


def step(state: TrackerState, frame) -> TrackResult:
    """Track one frame, then update both memories; mutates ``state``."""
    frame = _check_frame(frame)
    if frame.shape[:2] != state.frame_shape:
        raise InvalidArgumentError(f"frame dims {frame.shape[:2]} differ from init dims {state.frame_shape}")
    state.frame_index += 1
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            result = _track(state, frame)
    except (NumericError, FloatingPointError, np.linalg.LinAlgError):
        prev = state.last_result
        result = TrackResult(prev.mask, prev.axis_box, prev.rotated_box, math.nan, False, math.nan, fail_safe=True)
    state.last_result = result
    return result


def _track(state: TrackerState, frame) -> TrackResult:
    cfg = state.config
    t0 = time.perf_counter()
    q = encode_query(state.encoder, frame)
    t0 = _tick(state, "encode", t0)
    readout = mem.readout_concat(mem.read(state.bank, q.query), q.query_value)
    t0 = _tick(state, "read", t0)
    spatial = dcf_mod.evaluate(state.dcf, q.features)
    peak = float(spatial.max())
    u_t = uncertainty(spatial, cfg.hard_threshold)
    decision = decide(u_t, state.queue) if cfg.filter_enabled else Decision.PRESERVED
    t0 = _tick(state, "spatial", t0)
    fused = positional_fuse(readout, spatial, cfg.posenc)
    mask = decode(state.decoder, fused, q.skips, frame.shape[:2])
    if not np.all(np.isfinite(mask.fg)):
        raise NumericError("decoder produced non-finite probabilities")
    t0 = _tick(state, "decode", t0)
    preserved = decision is Decision.PRESERVED
    result = _result(mask, cfg, u_t, preserved, peak, fallback=state.last_result)
    t0 = _tick(state, "boxes", t0)

    # updates: the current frame never attends to itself
    push(state.queue, u_t)
    if preserved:
        emb = encode_memory(state.encoder, frame, mask)
        mem.write(state.bank, mem.MemoryEntry(emb.key, emb.value, state.frame_index), True)
        dims = spatial.shape
        try:
            center_px = centroid(mask, cfg.mask_threshold)
            center = _cell_center(center_px, cfg.stride, dims)
        except EmptyMaskError:
            center = np.unravel_index(int(np.argmax(spatial)), dims)
        label = dcf_mod.make_label(center, dims, cfg.dcf.sigma)
        dcf_mod.update(state.dcf, q.features, label)
    _tick(state, "update", t0)
    return result
