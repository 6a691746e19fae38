"""Slow, independent reference implementations.

Every function here recomputes a production result the obvious way
(nested loops, extended precision, dense factorizations, brute-force
sweeps) and shares no code path with the module it checks.  The test
suite and the ``selftest`` command compare the two.
"""
from __future__ import annotations

import math
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np


def conv2d(x, weights, bias, stride=1, padding="same"):
    """Direct nested-loop convolution (cross-correlation) with zero padding."""
    x = np.asarray(x, dtype=np.float64)
    h, w, cin = x.shape
    cout, _, kh, kw = weights.shape
    ph, pw = (kh // 2, kw // 2) if padding == "same" else (0, 0)
    oh = (h + 2 * ph - kh) // stride + 1
    ow = (w + 2 * pw - kw) // stride + 1
    out = np.zeros((oh, ow, cout))
    for o in range(cout):
        for i in range(oh):
            for j in range(ow):
                acc = bias[o]
                for c in range(cin):
                    for di in range(kh):
                        for dj in range(kw):
                            r = i * stride + di - ph
                            q = j * stride + dj - pw
                            if 0 <= r < h and 0 <= q < w:
                                acc += weights[o, c, di, dj] * x[r, q, c]
                out[i, j, o] = acc
    return out


def softmax(logits, digits: int = 50) -> np.ndarray:
    """Naive exp/sum in 50-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = digits
        ex = [Decimal(float(v)).exp() for v in logits]
        total = sum(ex)
        return np.array([float(e / total) for e in ex])


def mean(values, digits: int = 50) -> float:
    with localcontext() as ctx:
        ctx.prec = digits
        return float(sum(Decimal(float(v)) for v in values) / len(values))


def bilinear_resize(x, new_h, new_w):
    """Align-corners-false bilinear sampling written out per output pixel."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[:2]
    out = np.zeros((new_h, new_w) + x.shape[2:])
    for i in range(new_h):
        sy = min(max((i + 0.5) * h / new_h - 0.5, 0.0), h - 1)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(new_w):
            sx = min(max((j + 0.5) * w / new_w - 0.5, 0.0), w - 1)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            out[i, j] = ((1 - fy) * ((1 - fx) * x[y0, x0] + fx * x[y0, x1])
                         + fy * ((1 - fx) * x[y1, x0] + fx * x[y1, x1]))
    return out


def attention_read(query, keys, values):
    """Materialize every logit for every query position, normalize naively, sum values.

    ``keys``/``values`` are lists of per-entry (h, w, c) maps.
    """
    q = np.asarray(query, dtype=np.float64)
    kvecs = [k[r, c] for k in keys for r in range(k.shape[0]) for c in range(k.shape[1])]
    vvecs = [v[r, c] for v in values for r in range(v.shape[0]) for c in range(v.shape[1])]
    out = np.zeros(q.shape[:2] + (vvecs[0].shape[0],))
    weights = np.zeros(q.shape[:2] + (len(kvecs),))
    for i in range(q.shape[0]):
        for j in range(q.shape[1]):
            ex = [math.exp(float(np.dot(q[i, j], k))) for k in kvecs]
            total = math.fsum(ex)
            for n, e in enumerate(ex):
                weights[i, j, n] = e / total
                out[i, j] += (e / total) * vvecs[n]
    return out, weights


def design_matrix(z, k):
    """Rows = positions, columns = (channel, di, dj) taps of a k x k same-padded conv."""
    h, w, d = z.shape
    p = k // 2
    rows = np.zeros((h * w, d * k * k))
    for i in range(h):
        for j in range(w):
            col = 0
            for c in range(d):
                for di in range(k):
                    for dj in range(k):
                        r, q = i + di - p, j + dj - p
                        rows[i * w + j, col] = z[r, q, c] if 0 <= r < h and 0 <= q < w else 0.0
                        col += 1
    return rows


def ridge_direct(samples, weights, lam, k):
    """Dense normal equations ``(sum w X^T X + lam I) f = sum w X^T y`` solved by Cholesky.

    ``samples`` are ``(reduced features, label)`` pairs.
    """
    mats = [(design_matrix(z, k), y.reshape(-1)) for z, y in samples]
    n = mats[0][0].shape[1]
    a = lam * np.eye(n)
    b = np.zeros(n)
    for (x, y), wk in zip(mats, weights):
        a += wk * x.T @ x
        b += wk * x.T @ y
    c = np.linalg.cholesky(a)
    return np.linalg.solve(c.T, np.linalg.solve(c, b))


def ridge_objective(samples, weights, lam, k, f):
    total = lam * float(np.dot(f, f))
    for (z, y), wk in zip(samples, weights):
        r = design_matrix(z, k) @ f - y.reshape(-1)
        total += wk * float(np.dot(r, r))
    return total


def ridge_dual_response(z, y, lam, x_eval):
    """Kernel-form response for one sample and a 1x1 filter.

    Solves the positions x positions Gram system ``(G + lam I) alpha = y``
    with ``G = Z Z^T`` (linear kernel) and returns ``<sum alpha_i z_i, x_j>``.
    """
    zm = z.reshape(-1, z.shape[2])
    g = zm @ zm.T
    alpha = np.linalg.solve(g + lam * np.eye(len(g)), y.reshape(-1))
    xm = np.asarray(x_eval).reshape(-1, z.shape[2])
    return (xm @ (zm.T @ alpha)).reshape(x_eval.shape[:2])


def loss_value(p, y, lam=1.0, eps=1e-7):
    """The BCE + soft-IoU loss evaluated term by term in Python floats."""
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    bce = -math.fsum(yi * math.log((pi + eps) / (1 + eps)) + (1 - yi) * math.log((1 - pi + eps) / (1 + eps))
                     for pi, yi in zip(p, y)) / len(p)
    inter = math.fsum(p * y)
    union = math.fsum(p + y - p * y) + eps
    return bce + lam * (1.0 - inter / union)


def finite_difference(fn, p, index, h=1e-5):
    """Central difference of ``fn`` w.r.t. ``p[index]``."""
    hi = p.copy()
    lo = p.copy()
    hi[index] += h
    lo[index] -= h
    return (fn(hi) - fn(lo)) / (2.0 * h)


def min_area_rect_sweep(points, n_angles: int = 360):
    """Smallest area over ``n_angles`` evenly spaced orientations in [0, pi/2)."""
    pts = np.asarray(points, dtype=np.float64)
    best = math.inf
    for a in range(n_angles):
        th = 0.5 * math.pi * a / n_angles
        u = np.array([math.cos(th), math.sin(th)])
        v = np.array([-math.sin(th), math.cos(th)])
        pu, pv = pts @ u, pts @ v
        best = min(best, (pu.max() - pu.min()) * (pv.max() - pv.min()))
    return best


def boundary_pixels(mask):
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    out = []
    for i in range(h):
        for j in range(w):
            if not m[i, j]:
                continue
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                r, c = i + di, j + dj
                if not (0 <= r < h and 0 <= c < w) or not m[r, c]:
                    out.append((i, j))
                    break
    return out


def contour_f_allpairs(pred, gt, tol: int = 1):
    """Boundary F-measure matching every boundary pixel against every counterpart."""
    bp, bg = boundary_pixels(pred), boundary_pixels(gt)
    if not bp and not bg:
        return 1.0
    if not bp or not bg:
        return 0.0

    def matched(src, dst):
        return sum(any(max(abs(a - c), abs(b - d)) <= tol for c, d in dst) for a, b in src)

    prec = matched(bp, bg) / len(bp)
    rec = matched(bg, bp) / len(bg)
    return 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)


class ReferenceFilter:
    """Straight-line restatement of the uncertainty queue and decision rule (exact rational mean)."""

    def __init__(self, length: int, threshold: float):
        self.length = length
        self.threshold = threshold
        self.items: list[float] = []

    def decide(self, u: float) -> str:
        if u > self.threshold:
            return "removed"
        if len(self.items) == 0:
            return "preserved"
        avg = sum(Fraction(v) for v in self.items) / len(self.items)
        if u > avg:
            return "removed"
        return "preserved"

    def push(self, u: float):
        self.items.append(u)
        if len(self.items) > self.length:
            self.items = self.items[1:]
