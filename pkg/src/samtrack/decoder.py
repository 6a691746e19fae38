"""Mask decoder, positional fusion and the BCE + soft-IoU training loss.

Decoder layout (``C`` = read-out channels, ``W = C/2``):

    fusion      3x3  C_in -> C      learnable
    + mid skip  1x1  C -> C         fixed
    residual    3x3 - relu - 3x3    fixed
    reduce      1x1  C -> W         fixed
    upsample x2, + stem skip 1x1 C -> W (fixed)
    residual    3x3 - relu - 3x3    fixed
    projection  1x1  W -> 2         learnable
    upsample to frame size, per-pixel two-way softmax

The projection runs before the last upsample; a 1x1 conv commutes with
bilinear resizing (its weights sum to one), so this is the same map at a
quarter of the cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, NumericError
from .mask import MaskPair
from .tensor import (
    ConvKernelStack,
    SplitMix64,
    bilinear_resize,
    bilinear_resize_adjoint,
    conv2d,
    conv2d_input_grad,
    conv2d_weight_grad,
    im2col,
)

BLOCKS = ("fusion", "skip_mid", "res1a", "res1b", "reduce", "skip_stem", "res2a", "res2b", "proj")


@dataclass
class LossCfg:
    lambda_iou: float = 1.0
    bce_eps: float = 1e-7

    def validate(self):
        if self.lambda_iou < 0:
            raise ConfigurationError("lambda_iou must be non-negative")
        if not self.bce_eps > 0:
            raise ConfigurationError("bce_eps must be positive")


@dataclass
class DecoderParams:
    blocks: dict[str, ConvKernelStack]
    learnable: frozenset = frozenset({"fusion", "proj"})
    seed: int = 0

    def copy(self) -> "DecoderParams":
        return DecoderParams({k: v.copy() for k, v in self.blocks.items()}, self.learnable, self.seed)

    def parameter_count(self, learnable_only: bool = False) -> int:
        names = [n for n in BLOCKS if not learnable_only or n in self.learnable]
        return sum(self.blocks[n].weights.size + self.blocks[n].bias.size for n in names)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in BLOCKS:
            out[f"{name}.weights"] = self.blocks[name].weights
            out[f"{name}.bias"] = self.blocks[name].bias
        return out


def init_decoder(seed: int, channels: int = 32, in_channels: int | None = None) -> DecoderParams:
    """Seeded decoder for ``channels``-wide read-outs (``in_channels`` differs in concat mode)."""
    if channels < 2 or channels % 2:
        raise ConfigurationError("decoder width must be an even integer")
    c = channels
    cin = c if in_channels is None else in_channels
    wd = c // 2
    rng = SplitMix64(seed)

    def stack(cout, cinn, k, gain):
        w = rng.normal((cout, cinn, k, k), scale=gain / math.sqrt(cinn * k * k))
        return ConvKernelStack(w, np.zeros(cout))

    blocks = {
        "fusion": stack(c, cin, 3, 1.0),
        "skip_mid": stack(c, c, 1, 0.5),
        "res1a": stack(c, c, 3, 1.0),
        "res1b": stack(c, c, 3, 0.5),
        "reduce": stack(wd, c, 1, 1.0),
        "skip_stem": stack(wd, c, 1, 0.5),
        "res2a": stack(wd, wd, 3, 1.0),
        "res2b": stack(wd, wd, 3, 0.5),
        "proj": stack(2, wd, 1, 0.1),
    }
    return DecoderParams(blocks, seed=int(seed))


def positional_fuse(readout, spatial_map, mode: str = "add") -> np.ndarray:
    """Inject the spatial map: broadcast-add over channels, or append it as a channel."""
    readout = np.asarray(readout, dtype=np.float64)
    m = np.asarray(spatial_map, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidArgumentError("spatial map must be 2-D")
    if m.shape != readout.shape[:2]:
        m = bilinear_resize(m, *readout.shape[:2])
    if mode == "add":
        return readout + m[:, :, None]
    if mode == "concat":
        return np.concatenate([readout, m[:, :, None]], axis=2)
    raise ConfigurationError(f"unknown positional encoding mode {mode!r}")


def _relu(x):
    return np.maximum(x, 0.0)


def _forward(params: DecoderParams, fused, skips, frame_shape, keep=False):
    b = params.blocks
    stem, mid = skips
    if mid.shape[:2] != fused.shape[:2]:
        raise InvalidArgumentError(f"mid skip {mid.shape[:2]} does not match fused {fused.shape[:2]}")
    if fused.shape[2] != b["fusion"].in_channels:
        raise InvalidArgumentError(f"fused input has {fused.shape[2]} channels, decoder expects {b['fusion'].in_channels}")
    half = stem.shape[:2]
    if half != ((frame_shape[0] + 1) // 2, (frame_shape[1] + 1) // 2):
        raise InvalidArgumentError(f"stem skip {half} is not at half of the frame resolution {frame_shape}")
    h0 = conv2d(fused, b["fusion"])
    a1 = h0 + conv2d(mid, b["skip_mid"])
    t1 = conv2d(a1, b["res1a"])
    r1 = a1 + conv2d(_relu(t1), b["res1b"])
    u1 = conv2d(r1, b["reduce"])
    a2 = bilinear_resize(u1, *half) + conv2d(stem, b["skip_stem"])
    t2 = conv2d(a2, b["res2a"])
    z2 = _relu(t2)
    r2 = a2 + conv2d(z2, b["res2b"])
    half_logits = conv2d(r2, b["proj"])
    logits = bilinear_resize(half_logits, *frame_shape)
    cache = dict(a1=a1, t1=t1, t2=t2, z2=z2, r2=r2, u1=u1) if keep else None
    return logits, cache


def _softmax2(logits) -> MaskPair:
    diff = logits[:, :, 0] - logits[:, :, 1]
    fg = 0.5 * (1.0 + np.tanh(0.5 * diff))  # logistic, stable for both signs
    return MaskPair(fg, 1.0 - fg)


def decode_logits(params: DecoderParams, fused, skips, frame_shape) -> np.ndarray:
    """Pre-softmax two-channel logits at frame resolution."""
    return _forward(params, np.asarray(fused, dtype=np.float64), skips, tuple(frame_shape))[0]


def decode(params: DecoderParams, fused, skips, frame_shape) -> MaskPair:
    """Foreground/background probabilities at ``frame_shape`` resolution."""
    return _softmax2(decode_logits(params, fused, skips, frame_shape))


def _bce(p, y, eps: float) -> float:
    # log((p + eps) / (1 + eps)) keeps a perfect prediction at exactly zero
    # loss; the shift is a constant, so the gradient is the plain eps-BCE one
    return float(-np.mean(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps)) + math.log1p(eps))


def loss(pred: MaskPair, label: MaskPair, cfg: LossCfg | None = None) -> float:
    """Mean BCE on the fg channel plus ``lambda_iou`` times the soft-IoU loss."""
    cfg = cfg or LossCfg()
    p, y = _check_pair(pred, label)
    bce = _bce(p, y, cfg.bce_eps)
    inter = np.sum(p * y)
    union = np.sum(p + y - p * y) + cfg.bce_eps
    return float(bce + cfg.lambda_iou * (1.0 - inter / union))


def loss_terms(pred: MaskPair, label: MaskPair, cfg: LossCfg | None = None) -> tuple[float, float]:
    cfg = cfg or LossCfg()
    p, y = _check_pair(pred, label)
    eps = cfg.bce_eps
    bce = _bce(p, y, eps)
    iou = 1.0 - np.sum(p * y) / (np.sum(p + y - p * y) + eps)
    return float(bce), float(iou)


def loss_grad(pred: MaskPair, label: MaskPair, cfg: LossCfg | None = None, terms: str = "both") -> np.ndarray:
    """Analytic derivative of ``loss`` w.r.t. every fg probability.

    ``terms`` selects ``"bce"``, ``"iou"`` or ``"both"``.
    """
    cfg = cfg or LossCfg()
    p, y = _check_pair(pred, label)
    eps = cfg.bce_eps
    g = np.zeros_like(p)
    if terms in ("bce", "both"):
        g += (-y / (p + eps) + (1.0 - y) / (1.0 - p + eps)) / p.size
    if terms in ("iou", "both"):
        inter = np.sum(p * y)
        union = np.sum(p + y - p * y) + eps
        g += cfg.lambda_iou * -(y * union - inter * (1.0 - y)) / (union * union)
    return g


def _check_pair(pred: MaskPair, label: MaskPair):
    if pred.fg.shape != label.fg.shape:
        raise InvalidArgumentError(f"prediction {pred.fg.shape} and label {label.fg.shape} dims differ")
    return pred.fg, label.fg


def _backward(params, fused_cols, skips, cache, dlogits_half):
    """Gradients of the learnable blocks given d(loss)/d(half-resolution logits)."""
    b = params.blocks
    grads = {}
    r2 = cache["r2"]
    wd = r2.shape[2]
    gw = r2.reshape(-1, wd).T @ dlogits_half.reshape(-1, 2)
    grads["proj"] = (gw.T[:, :, None, None], dlogits_half.reshape(-1, 2).sum(axis=0))
    if "fusion" not in params.learnable:
        return grads
    dr2 = dlogits_half @ b["proj"].weights[:, :, 0, 0]
    dz2 = conv2d_input_grad(dr2, b["res2b"], cache["z2"].shape)
    da2 = dr2 + conv2d_input_grad(dz2 * (cache["t2"] > 0), b["res2a"], r2.shape)
    du1 = bilinear_resize_adjoint(da2, *cache["u1"].shape[:2])
    dr1 = du1 @ b["reduce"].weights[:, :, 0, 0]
    a1 = cache["a1"]
    dz1 = conv2d_input_grad(dr1, b["res1b"], a1.shape)
    dh0 = dr1 + conv2d_input_grad(dz1 * (cache["t1"] > 0), b["res1a"], a1.shape)
    k = b["fusion"].kernel_size
    grads["fusion"] = conv2d_weight_grad(None, dh0, k, cols=fused_cols)
    return grads


def learnable_grads(params: DecoderParams, fused, skips, label: MaskPair, cfg: LossCfg | None = None,
                    fused_cols=None):
    """Loss value and ``{block: (d weights, d bias)}`` for every learnable block."""
    cfg = cfg or LossCfg()
    fused = np.asarray(fused, dtype=np.float64)
    frame_shape = label.fg.shape
    logits, cache = _forward(params, fused, skips, frame_shape, keep=True)
    pred = _softmax2(logits)
    value = loss(pred, label, cfg)
    g = loss_grad(pred, label, cfg)
    ddiff = g * pred.fg * pred.bg
    dlogits = np.stack([ddiff, -ddiff], axis=2)
    dhalf = bilinear_resize_adjoint(dlogits, *cache["r2"].shape[:2])
    if fused_cols is None and "fusion" in params.learnable:
        fused_cols = im2col(fused, params.blocks["fusion"].kernel_size)
    grads = _backward(params, fused_cols, skips, cache, dhalf)
    return value, {k: v for k, v in grads.items() if k in params.learnable and v is not None}


@dataclass
class FitResult:
    params: DecoderParams
    losses: list[float] = field(default_factory=list)


def fit_first_frame(params: DecoderParams, fused, skips, init_mask: MaskPair, cfg: LossCfg | None = None,
                    steps: int = 100, lr: float = 0.05) -> FitResult:
    """Plain gradient descent on the learnable blocks against ``init_mask``.

    ``losses[i]`` is the loss before step ``i``; the final entry is the
    loss of the returned parameters.
    """
    cfg = cfg or LossCfg()
    params = params.copy()
    fused = np.asarray(fused, dtype=np.float64)
    cols = im2col(fused, params.blocks["fusion"].kernel_size) if "fusion" in params.learnable else None
    losses = []
    for _ in range(steps):
        value, grads = learnable_grads(params, fused, skips, init_mask, cfg, fused_cols=cols)
        if not math.isfinite(value):
            raise NumericError("decoder loss became non-finite")
        losses.append(value)
        for name, (gw, gb) in grads.items():
            blk = params.blocks[name]
            blk.weights = blk.weights - lr * gw
            blk.bias = blk.bias - lr * gb
    if steps:
        final = loss(decode(params, fused, skips, init_mask.fg.shape), init_mask, cfg)
        if not math.isfinite(final):
            raise NumericError("decoder loss became non-finite")
        losses.append(final)
    return FitResult(params, losses)
