"""Spatial memory: an online correlation filter trained by Gauss-Newton / CG.

The filter has two layers.  A fixed seeded 1x1 convolution reduces the
backbone features to ``D`` channels; a learned ``k x k`` single-output
convolution maps them to the score map.  Training minimizes

    sum_k w_k || score(x_k) - y_k ||^2 + lam * || f ||^2

over a ring buffer of (features, label, weight) samples.  Without the
optional residual clamp the problem is linear least squares, so one GN
step with an exact inner solve reaches the optimum; CG runs matrix-free
through the convolution and its adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, NumericError, StateError
from .tensor import ConvKernelStack, SplitMix64, as_feature_map, conv2d, im2col


@dataclass
class DcfConfig:
    reduce_channels: int = 16
    kernel_size: int = 3
    lam: float = 0.05
    sigma: float = 1.0
    max_samples: int = 30
    gamma: float = 0.99
    gn_iters: int = 2
    cg_iters: int = 10
    clamp_residuals: bool = False

    def validate(self):
        if self.reduce_channels < 1 or self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigurationError("filter needs >= 1 channel and an odd kernel size")
        if not self.lam > 0:
            raise ConfigurationError("regularization must be positive")
        if not self.sigma > 0:
            raise ConfigurationError("label sigma must be positive")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError("decay must lie in (0, 1]")
        if self.max_samples < 1 or self.gn_iters < 0 or self.cg_iters < 0:
            raise ConfigurationError("buffer size and iteration counts must be non-negative")


@dataclass
class Sample:
    """One buffered training pair plus its normal-equation blocks.

    ``gram = X^T X``, ``xty = X^T y`` and ``yty = y.y`` where ``X`` is the
    patch matrix of the reduced features; they are fixed at insertion.
    """

    features: np.ndarray  # reduced features (h, w, D)
    label: np.ndarray  # (h, w)
    base_weight: float
    inserted_at: int
    pinned: bool = False
    gram: np.ndarray | None = None
    xty: np.ndarray | None = None
    yty: float = 0.0

    def cols(self, k: int) -> np.ndarray:
        return im2col(self.features, (k, k))

    def fill_normal_blocks(self, k: int):
        x = self.cols(k)
        y = self.label.reshape(-1)
        self.gram = x.T @ x
        self.xty = x.T @ y
        self.yty = float(y @ y)


@dataclass
class SolveInfo:
    """Diagnostics of the last training call."""

    objective: list[float] = field(default_factory=list)  # after every CG iteration when monitored
    curvature: list[float] = field(default_factory=list)  # p.Ap of every CG direction
    residual_norms: list[float] = field(default_factory=list)
    cg_iterations: int = 0


@dataclass
class DcfModel:
    cfg: DcfConfig
    reduce: ConvKernelStack
    weights: np.ndarray  # learned layer (1, D, k, k)
    samples: list[Sample] = field(default_factory=list)
    update_count: int = 0
    info: SolveInfo = field(default_factory=SolveInfo, repr=False, compare=False)

    @property
    def in_channels(self) -> int:
        return self.reduce.in_channels

    def sample_weight(self, s: Sample) -> float:
        if s.pinned:
            return s.base_weight
        return s.base_weight * self.cfg.gamma ** (self.update_count - s.inserted_at)

    def weights_vector(self) -> np.ndarray:
        # matches the im2col row layout (in, kh, kw)
        return self.weights[0].reshape(-1).copy()

    def set_weights_vector(self, v: np.ndarray):
        self.weights = np.asarray(v, dtype=np.float64).reshape(self.weights.shape).copy()


def init_dcf(seed: int, in_channels: int, cfg: DcfConfig | None = None) -> DcfModel:
    cfg = cfg or DcfConfig()
    cfg.validate()
    rng = SplitMix64(seed)
    d = cfg.reduce_channels
    reduce = ConvKernelStack(rng.normal((d, in_channels, 1, 1), scale=1.0 / np.sqrt(in_channels)), np.zeros(d))
    k = cfg.kernel_size
    return DcfModel(cfg, reduce, np.zeros((1, d, k, k)))


def make_label(center, dims, sigma: float = 1.0) -> np.ndarray:
    """Gaussian label ``exp(-|p - center|^2 / (2 sigma^2))`` over a ``dims`` grid of cells."""
    h, w = dims
    r, c = center
    if not (0 <= r <= h - 1 and 0 <= c <= w - 1):
        raise InvalidArgumentError(f"label center {center} outside {dims}")
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    rows = (np.arange(h) - r) ** 2
    cols = (np.arange(w) - c) ** 2
    return np.exp(-(rows[:, None] + cols[None, :]) / (2.0 * sigma * sigma))


def _reduce(model: DcfModel, x) -> np.ndarray:
    x = as_feature_map(x, "features")
    if x.shape[2] != model.in_channels:
        raise InvalidArgumentError(f"features have {x.shape[2]} channels, filter expects {model.in_channels}")
    return conv2d(x, model.reduce)


def evaluate(model: DcfModel, x) -> np.ndarray:
    """Score map of ``x`` at feature resolution."""
    z = _reduce(model, x)
    return conv2d(z, ConvKernelStack(model.weights, np.zeros(1)))[:, :, 0]


def _stack(model: DcfModel):
    k = model.cfg.kernel_size
    cols = np.concatenate([s.cols(k) for s in model.samples])
    labels = np.concatenate([s.label.reshape(-1) for s in model.samples])
    weights = np.concatenate([np.full(s.label.size, model.sample_weight(s)) for s in model.samples])
    return cols, labels, weights


def _residuals(model: DcfModel, cols, labels, f):
    score = cols @ f
    if model.cfg.clamp_residuals:
        # hinge on background cells: negative scores there are not penalized
        bg = labels < 1e-2
        active = ~bg | (score > 0)
        score = np.where(active, score, 0.0)
        return score - labels, active
    return score - labels, None


def _objective(model, cols, labels, weights, f) -> float:
    r, _ = _residuals(model, cols, labels, f)
    return float(np.dot(weights, r * r) + model.cfg.lam * np.dot(f, f))


def objective(model: DcfModel) -> float:
    """Weighted squared error over the buffer plus the ridge term."""
    if not model.samples:
        raise StateError("objective of an empty sample buffer")
    cols, labels, weights = _stack(model)
    return _objective(model, cols, labels, weights, model.weights_vector())


def conjugate_gradient(apply_a, b, x0=None, max_iter: int = 10, tol: float = 0.0, on_iter=None):
    """Plain CG for a symmetric positive definite operator.

    Stops after ``max_iter`` iterations or when ``|r| <= tol * |b|``.
    ``on_iter(x, p, pAp, |r|)`` is called after every iteration.
    Returns ``(x, iterations)``.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_a(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = float(r @ r)
    bnorm = float(np.sqrt(b @ b))
    it = 0
    while it < max_iter and np.sqrt(rr) > tol * bnorm and rr > 0:
        ap = apply_a(p)
        pap = float(p @ ap)
        if not pap > 0:
            raise NumericError(f"CG met a non-positive curvature direction (p.Ap = {pap})")
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        if on_iter is not None:
            on_iter(x, p, pap, np.sqrt(rr))
    return x, it


def _normal_system(model: DcfModel):
    """Weighted ``(sum w X^T X, sum w X^T y, sum w y.y)`` over the buffer."""
    n = model.weights.size
    gram = np.zeros((n, n))
    xty = np.zeros(n)
    yty = 0.0
    for s in model.samples:
        w = model.sample_weight(s)
        gram += w * s.gram
        xty += w * s.xty
        yty += w * s.yty
    return gram, xty, yty


def train(model: DcfModel, gn_iters: int, cg_iters: int, tol: float = 0.0, monitor: bool = False) -> SolveInfo:
    """Run GN outer iterations with inner CG on the buffered samples.

    Without residual clamping the GN matrix is constant, so it is summed
    once from the cached per-sample blocks.  With clamping the active set
    changes per GN iteration and the operator is applied matrix-free.
    ``monitor`` records the objective after every CG iteration, computed
    from explicit residuals.
    """
    lam = model.cfg.lam
    f = model.weights_vector()
    info = SolveInfo()
    clamp = model.cfg.clamp_residuals
    if clamp or monitor:
        cols, labels, weights = _stack(model)
    if not clamp:
        gram, xty, _ = _normal_system(model)
    for _ in range(gn_iters):
        if clamp:
            r, active = _residuals(model, cols, labels, f)
            jw = weights * active
            grad = cols.T @ (jw * r) + lam * f

            def apply_a(p, jw=jw):
                return cols.T @ (jw * (cols @ p)) + lam * p
        else:
            grad = gram @ f - xty + lam * f

            def apply_a(p):
                return gram @ p + lam * p

        def on_iter(delta, _p, pap, rnorm, f0=f):
            info.curvature.append(pap)
            info.residual_norms.append(rnorm)
            if monitor:
                info.objective.append(_objective(model, cols, labels, weights, f0 + delta))

        if monitor:
            info.objective.append(_objective(model, cols, labels, weights, f))
        delta, it = conjugate_gradient(apply_a, -grad, max_iter=cg_iters, tol=tol, on_iter=on_iter)
        info.cg_iterations += it
        f = f + delta
    if not np.all(np.isfinite(f)):
        raise NumericError("filter weights became non-finite")
    model.set_weights_vector(f)
    model.info = info
    return info


def fast_objective(model: DcfModel) -> float:
    """``objective`` evaluated from the cached normal-equation blocks (unclamped form)."""
    gram, xty, yty = _normal_system(model)
    f = model.weights_vector()
    return float(f @ gram @ f - 2.0 * xty @ f + yty + model.cfg.lam * f @ f)


def add_sample(model: DcfModel, x, y, weight: float = 1.0) -> Sample:
    """Append a sample; the first one is pinned, later ones evict the oldest unpinned."""
    z = _reduce(model, x)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != z.shape[:2]:
        raise InvalidArgumentError(f"label dims {y.shape} differ from feature dims {z.shape[:2]}")
    model.update_count += 1
    s = Sample(z, y, float(weight), model.update_count, pinned=not model.samples)
    s.fill_normal_blocks(model.cfg.kernel_size)
    model.samples.append(s)
    if len(model.samples) > model.cfg.max_samples:
        for i, old in enumerate(model.samples):
            if not old.pinned:
                del model.samples[i]
                break
    return s


def update(model: DcfModel, x_t, y_t, gn_iters: int | None = None, cg_iters: int | None = None,
           monitor: bool = False) -> DcfModel:
    """Absorb one (features, label) sample and retrain the learned layer in place."""
    add_sample(model, x_t, y_t)
    train(
        model,
        model.cfg.gn_iters if gn_iters is None else gn_iters,
        model.cfg.cg_iters if cg_iters is None else cg_iters,
        monitor=monitor,
    )
    obj = objective(model) if model.cfg.clamp_residuals else fast_objective(model)
    if not np.isfinite(obj):
        raise NumericError("non-finite filter objective")
    return model
