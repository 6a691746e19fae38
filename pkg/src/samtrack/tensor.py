"""Dense tensor kernels: convolution, softmax, bilinear resize and the seeded RNG.

Feature maps are plain ``float64`` arrays laid out as ``(height, width,
channels)``; spatial maps are ``(height, width)``.  Nothing here keeps
state, so every function may be called concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError

__all__ = [
    "ConvKernelStack",
    "SplitMix64",
    "as_feature_map",
    "bilinear_resize",
    "conv2d",
    "conv2d_input_grad",
    "conv2d_weight_grad",
    "resize_matrix",
    "seeded_rng",
    "softmax_normalize",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """splitmix64 stream.  Bit-exact with the reference C implementation.

    Bulk draws are vectorized: the n-th output only depends on
    ``seed + n * gamma``, so a block of outputs is one numpy expression.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def u64(self, n: int) -> np.ndarray:
        n = int(n)
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64)
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return z

    def uniform(self, size=None):
        """Uniform reals in [0, 1) from the top 53 bits of each output."""
        if size is None:
            return (self.next_u64() >> 11) * 2.0**-53
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        return ((self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(shape)

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        """Standard normals by Box-Muller (cosine branch only)."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        u = self.uniform(2 * n)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:n]))
        return (scale * radius * np.cos(2.0 * np.pi * u[n:])).reshape(shape)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high)."""
        span = high - low
        if span <= 0:
            raise InvalidArgumentError("empty integer range")
        u = self.uniform(size)
        if size is None:
            return low + int(u * span)
        return low + np.floor(u * span).astype(np.int64)

    def fork(self) -> "SplitMix64":
        return SplitMix64(self.next_u64())


def seeded_rng(seed: int) -> SplitMix64:
    return SplitMix64(seed)


def as_feature_map(x, name: str = "input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty (h, w, c) array, got shape {arr.shape}")
    return arr


@dataclass
class ConvKernelStack:
    """Convolution weights ``(out, in, kh, kw)`` and per-output bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ConfigurationError("kernel weights must be (out, in, kh, kw)")
        out_c, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigurationError("kernel spatial dims must be odd")
        self.bias = np.zeros(out_c) if self.bias is None else np.asarray(self.bias, dtype=np.float64)
        if self.bias.shape != (out_c,):
            raise ConfigurationError("bias must have one value per output channel")

    @classmethod
    def zeros(cls, out_channels, in_channels, kh=1, kw=None):
        kw = kh if kw is None else kw
        return cls(np.zeros((out_channels, in_channels, kh, kw)), np.zeros(out_channels))

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]

    def copy(self) -> "ConvKernelStack":
        return ConvKernelStack(self.weights.copy(), self.bias.copy())


def _pads(kernels: ConvKernelStack, padding: str) -> tuple[int, int]:
    kh, kw = kernels.kernel_size
    if padding == "same":
        return kh // 2, kw // 2
    if padding == "valid":
        return 0, 0
    raise ConfigurationError(f"unknown padding mode {padding!r}")


def _check_channels(x: np.ndarray, kernels: ConvKernelStack):
    if x.shape[2] != kernels.in_channels:
        raise ConfigurationError(
            f"input has {x.shape[2]} channels, kernels expect {kernels.in_channels}"
        )


def _pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((ph, ph), (pw, pw), (0, 0)))


def conv2d(x, kernels: ConvKernelStack, stride: int = 1, padding: str = "same") -> np.ndarray:
    """2-D cross-correlation with zero padding.

    "same" pads ``k // 2`` on every side, so the output has
    ``ceil(n / stride)`` rows and columns.
    """
    x = as_feature_map(x)
    _check_channels(x, kernels)
    if stride < 1:
        raise ConfigurationError("stride must be positive")
    ph, pw = _pads(kernels, padding)
    kh, kw = kernels.kernel_size
    h, w, _ = x.shape
    out_h = (h + 2 * ph - kh) // stride + 1
    out_w = (w + 2 * pw - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError("input smaller than kernel")
    xp = _pad(x, ph, pw)
    wts = kernels.weights
    if kh == 1 and kw == 1:
        sub = xp[: (out_h - 1) * stride + 1 : stride, : (out_w - 1) * stride + 1 : stride]
        return sub @ wts[:, :, 0, 0].T + kernels.bias
    if stride == 1:
        # one GEMM against all taps, then shift-and-add the tap planes
        cout = kernels.out_channels
        taps = wts.transpose(1, 2, 3, 0).reshape(kernels.in_channels, kh * kw * cout)
        hp, wp, _ = xp.shape
        planes = (xp.reshape(hp * wp, -1) @ taps).reshape(hp, wp, kh, kw, cout)
        out = np.empty((out_h, out_w, cout))
        out[...] = kernels.bias
        for dy in range(kh):
            for dx in range(kw):
                out += planes[dy : dy + out_h, dx : dx + out_w, dy, dx]
        return out
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    mat = wts.transpose(1, 2, 3, 0).reshape(-1, kernels.out_channels)
    return (cols @ mat).reshape(out_h, out_w, -1) + kernels.bias


def _im2col(xp, kh, kw, stride, out_h, out_w) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    win = win[: (out_h - 1) * stride + 1 : stride, : (out_w - 1) * stride + 1 : stride]
    # (out_h, out_w, cin, kh, kw) -> rows of patches
    return win.reshape(out_h * out_w, -1)


def im2col(x, kernel_size: tuple[int, int], stride: int = 1, padding: str = "same") -> np.ndarray:
    """Patch matrix whose rows dot ``weights.transpose(1, 2, 3, 0).reshape(-1, out)``."""
    x = as_feature_map(x)
    kh, kw = kernel_size
    ph, pw = (kh // 2, kw // 2) if padding == "same" else (0, 0)
    h, w, _ = x.shape
    out_h = (h + 2 * ph - kh) // stride + 1
    out_w = (w + 2 * pw - kw) // stride + 1
    return np.ascontiguousarray(_im2col(_pad(x, ph, pw), kh, kw, stride, out_h, out_w))


def conv2d_input_grad(grad_out: np.ndarray, kernels: ConvKernelStack, input_shape) -> np.ndarray:
    """Adjoint of a stride-1 "same" ``conv2d`` with respect to its input."""
    kh, kw = kernels.kernel_size
    ph, pw = kh // 2, kw // 2
    h, w, cin = input_shape
    wts = kernels.weights
    if kh == 1 and kw == 1:
        return grad_out @ wts[:, :, 0, 0]
    cout = kernels.out_channels
    taps = wts.transpose(0, 2, 3, 1).reshape(cout, kh * kw * cin)
    planes = (grad_out.reshape(h * w, cout) @ taps).reshape(h, w, kh, kw, cin)
    gp = np.zeros((h + 2 * ph, w + 2 * pw, cin))
    for dy in range(kh):
        for dx in range(kw):
            gp[dy : dy + h, dx : dx + w] += planes[:, :, dy, dx]
    return gp[ph : ph + h, pw : pw + w]


def conv2d_weight_grad(x: np.ndarray, grad_out: np.ndarray, kernel_size, cols=None):
    """Gradients of a stride-1 "same" conv w.r.t. weights ``(out, in, kh, kw)`` and bias.

    ``cols`` may carry a precomputed ``im2col(x, kernel_size)``.
    """
    kh, kw = kernel_size
    cout = grad_out.shape[2]
    g = grad_out.reshape(-1, cout)
    if cols is None:
        cols = im2col(x, kernel_size)
    gw = (cols.T @ g).reshape(-1, kh, kw, cout).transpose(3, 0, 1, 2)
    return gw, g.sum(axis=0)


def softmax_normalize(logits, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis`` with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[axis] == 0:
        raise InvalidArgumentError("softmax of an empty sequence")
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("softmax logits must be finite")
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@lru_cache(maxsize=64)
def _lerp_table(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    for arr in (lo, hi, frac):
        arr.setflags(write=False)
    return lo, hi, frac


@lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` interpolation matrix of one bilinear axis."""
    lo, hi, frac = _lerp_table(n_in, n_out)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    m.setflags(write=False)
    return m


def bilinear_resize(x, new_height: int, new_width: int) -> np.ndarray:
    """Bilinear resize, align-corners-false, edge-clamped.

    Works on ``(h, w)`` and ``(h, w, c)`` arrays.  Interpolation is written
    as ``a + t * (b - a)`` so constant maps come back bit-exact.
    """
    if new_height < 1 or new_width < 1:
        raise InvalidArgumentError("target dims must be positive")
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[:2]
    if (h, w) == (new_height, new_width):
        return x.copy()
    lo, hi, t = _lerp_table(h, new_height)
    t = t.reshape((-1,) + (1,) * (x.ndim - 1))
    a = x[lo]
    rows = a + t * (x[hi] - a)
    lo, hi, t = _lerp_table(w, new_width)
    t = t.reshape((1, -1) + (1,) * (x.ndim - 2))
    a = rows[:, lo]
    return a + t * (rows[:, hi] - a)


def bilinear_resize_adjoint(grad, in_height: int, in_width: int) -> np.ndarray:
    """Transpose of ``bilinear_resize`` from ``(in_height, in_width)``."""
    g = np.asarray(grad, dtype=np.float64)
    ry = resize_matrix(in_height, g.shape[0])
    rx = resize_matrix(in_width, g.shape[1])
    if g.ndim == 2:
        return ry.T @ g @ rx
    return np.einsum("ah,abc,bw->hwc", ry, g, rx, optimize=True)
