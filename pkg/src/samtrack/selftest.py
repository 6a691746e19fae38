"""Oracle-equivalence checks shared by the ``selftest`` command and the test suite.

Each ``check_*`` function draws seeded instances, compares production
code against ``samtrack.oracles`` and returns a plain dict
``{name, instances, max_error, tolerance, passed, ...}``.  Reports hold
no timings, so two runs serialize to identical JSON.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import dcf as dcf_mod
from . import memory as mem
from . import oracles
from .decoder import LossCfg, loss, loss_grad
from .geometry import min_area_rect
from .mask import MaskPair
from .sample_filter import Decision, UncertaintyQueue, decide, push, uncertainty
from .sim.metrics import contour_fmeasure
from .tensor import ConvKernelStack, SplitMix64, bilinear_resize, conv2d, softmax_normalize

SPLITMIX_SEED0 = (0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F)


def _result(name, instances, max_error, tolerance, passed=None, **extra):
    ok = bool(max_error <= tolerance) if passed is None else bool(passed)
    out = {"name": name, "instances": instances, "max_error": float(max_error), "tolerance": tolerance, "passed": ok}
    out.update(extra)
    return out


def check_rng() -> dict:
    rng = SplitMix64(0)
    got = tuple(rng.next_u64() for _ in range(3))
    a, b = SplitMix64(1).u64(4), SplitMix64(2).u64(4)
    ok = got == SPLITMIX_SEED0 and bool(np.all(a != b))
    return _result("splitmix64", 3, 0.0 if ok else 1.0, 0.0, ok)


def check_conv(instances: int = 10, seed: int = 11) -> dict:
    rng = SplitMix64(seed)
    err = 0.0
    for i in range(instances):
        x = rng.normal((5, 5, 2))
        k = ConvKernelStack(rng.normal((3, 2, 3, 3)), rng.normal(3))
        stride = 1 + i % 2
        for padding in ("same", "valid"):
            got = conv2d(x, k, stride=stride, padding=padding)
            ref = oracles.conv2d(x, k.weights, k.bias, stride, padding)
            err = max(err, float(np.abs(got - ref).max()))
    return _result("conv2d_vs_nested_loops", instances, err, 1e-9)


def check_softmax(instances: int = 10, seed: int = 12) -> dict:
    rng = SplitMix64(seed)
    err = 0.0
    for _ in range(instances):
        logits = rng.normal(64, scale=5.0)
        got = softmax_normalize(logits)
        ref = oracles.softmax(logits)
        err = max(err, float(np.max(np.abs(got - ref) / ref)))
    return _result("softmax_vs_decimal", instances, err, 1e-12)


def check_bilinear(instances: int = 10, seed: int = 13) -> dict:
    rng = SplitMix64(seed)
    cases = [(np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None], 4, 4)]
    for _ in range(instances - 1):
        h, w = (int(v) for v in rng.integers(1, 7, 2))
        nh, nw = (int(v) for v in rng.integers(1, 13, 2))
        cases.append((rng.normal((h, w, 2)), nh, nw))
    err = 0.0
    for x, nh, nw in cases:
        err = max(err, float(np.abs(bilinear_resize(x, nh, nw) - oracles.bilinear_resize(x, nh, nw)).max()))
    return _result("bilinear_vs_formula", len(cases), err, 1e-12)


def check_attention(instances: int = 200, seed: int = 14) -> dict:
    """Joint softmax read against brute force, plus per-position weight sums."""
    rng = SplitMix64(seed)
    err = 0.0
    sum_err = 0.0
    for _ in range(instances):
        h, w = (int(v) for v in rng.integers(1, 5, 2))
        n = int(rng.integers(1, 4))
        ck, cv = (int(v) for v in rng.integers(1, 9, 2))
        bank = mem.MemoryBank(sampling_interval=1, always_include_last=False)
        keys, values = [], []
        for t in range(n):
            mh, mw = (int(v) for v in rng.integers(1, 5, 2))
            k, v = rng.normal((mh, mw, ck)), rng.normal((mh, mw, cv))
            keys.append(k)
            values.append(v)
            entry = mem.MemoryEntry(k, v, t)
            if t == 0:
                bank.seed(entry)
            else:
                mem.write(bank, entry, True)
        q = rng.normal((h, w, ck))
        got = mem.read(bank, q)
        ref, ref_w = oracles.attention_read(q, keys, values)
        err = max(err, float(np.abs(got - ref).max()))
        weights = mem.attention_weights(bank, q)
        sum_err = max(sum_err, float(np.abs(weights.sum(axis=1) - 1.0).max()))
        err = max(err, float(np.abs(weights - ref_w.reshape(weights.shape)).max()))
    return _result("attention_read_vs_brute_force", instances, max(err, sum_err), 1e-9,
                   weight_sum_error=sum_err)


def random_dcf_problem(rng: SplitMix64, max_unknowns: int = 300):
    """A random buffered DCF with 1-4 samples and at most ``max_unknowns`` filter taps."""
    while True:
        d = int(rng.integers(1, 9))
        k = (1, 3, 5)[int(rng.integers(0, 3))]
        if d * k * k <= max_unknowns:
            break
    c = int(rng.integers(d, d + 5))
    cfg = dcf_mod.DcfConfig(reduce_channels=d, kernel_size=k, lam=0.05 + rng.uniform(), gamma=0.9 + 0.1 * rng.uniform())
    model = dcf_mod.init_dcf(int(rng.integers(0, 1 << 30)), c, cfg)
    for _ in range(int(rng.integers(1, 5))):
        h, w = (int(v) for v in rng.integers(3, 9, 2))
        x = rng.normal((h, w, c))
        center = (rng.uniform() * (h - 1), rng.uniform() * (w - 1))
        dcf_mod.add_sample(model, x, dcf_mod.make_label(center, (h, w), 1.0), weight=0.5 + rng.uniform())
    return model


def check_dcf_solve(instances: int = 50, seed: int = 15) -> dict:
    """CG to residual 1e-10 against Cholesky on independently built normal equations.

    Also tracks the largest per-iteration objective increase and the
    smallest curvature ``p.Ap`` met by CG.
    """
    rng = SplitMix64(seed)
    err = 0.0
    rise = 0.0
    min_curv = math.inf
    for _ in range(instances):
        model = random_dcf_problem(rng)
        n = model.weights.size
        info = dcf_mod.train(model, gn_iters=1, cg_iters=20 * n, tol=1e-10, monitor=True)
        samples = [(s.features, s.label) for s in model.samples]
        weights = [model.sample_weight(s) for s in model.samples]
        ref = oracles.ridge_direct(samples, weights, model.cfg.lam, model.cfg.kernel_size)
        got = model.weights_vector()
        err = max(err, float(np.linalg.norm(got - ref) / np.linalg.norm(ref)))
        obj = info.objective
        rise = max(rise, max((b - a for a, b in zip(obj, obj[1:])), default=0.0))
        min_curv = min(min_curv, min(info.curvature, default=math.inf))
    ok = err <= 1e-8 and rise <= 1e-9 and min_curv > 0
    return _result("dcf_cg_vs_direct_solve", instances, err, 1e-8, ok, max_objective_rise=rise,
                   min_curvature_positive=bool(min_curv > 0))


def check_dcf_dual(instances: int = 10, seed: int = 16) -> dict:
    """Primal 1x1 filter response against the kernel (dual) form on one sample."""
    rng = SplitMix64(seed)
    err = 0.0
    for _ in range(instances):
        d = int(rng.integers(1, 6))
        cfg = dcf_mod.DcfConfig(reduce_channels=d, kernel_size=1, lam=0.1)
        model = dcf_mod.init_dcf(int(rng.integers(0, 1 << 30)), d + 2, cfg)
        h, w = (int(v) for v in rng.integers(3, 8, 2))
        x = rng.normal((h, w, d + 2))
        s = dcf_mod.add_sample(model, x, dcf_mod.make_label(((h - 1) / 2, (w - 1) / 2), (h, w)))
        dcf_mod.train(model, gn_iters=1, cg_iters=50 * d, tol=1e-13)
        x_eval = rng.normal((h, w, d + 2))
        got = dcf_mod.evaluate(model, x_eval)
        z_eval = conv2d(x_eval, model.reduce)
        ref = oracles.ridge_dual_response(s.features, s.label, cfg.lam, z_eval)
        err = max(err, float(np.abs(got - ref).max() / np.abs(ref).max()))
    return _result("dcf_primal_vs_dual", instances, err, 1e-6)


def check_loss_grad(pairs: int = 20, pixels: int = 100, seed: int = 17) -> dict:
    """Analytic gradient against central differences (h = 1e-5), ``pixels`` spread over ``pairs``."""
    rng = SplitMix64(seed)
    cfg = LossCfg()
    per = pixels // pairs
    err = 0.0
    val_err = 0.0
    for i in range(pairs):
        h, w = (int(v) for v in rng.integers(4, 11, 2))
        p = 0.05 + 0.9 * rng.uniform((h, w))
        y = rng.uniform((h, w))
        if i % 2 == 0:
            y = (y > 0.5).astype(np.float64)
        g = loss_grad(MaskPair.from_fg(p), MaskPair.from_fg(y), cfg)
        val_err = max(val_err, abs(loss(MaskPair.from_fg(p), MaskPair.from_fg(y), cfg) - oracles.loss_value(p, y)))

        def fn(pp):
            return oracles.loss_value(pp, y)

        flat = rng.integers(0, h * w, per)
        for f in flat:
            idx = np.unravel_index(int(f), (h, w))
            num = oracles.finite_difference(fn, p, idx)
            err = max(err, abs(g[idx] - num) / max(abs(num), abs(g[idx]), 1e-12))
    return _result("loss_grad_vs_finite_differences", pairs * per, err, 1e-4, loss_value_error=val_err)


def check_min_rect(instances: int = 20, seed: int = 18) -> dict:
    """Calipers rectangle never larger than, and within 1% of, a 360-angle sweep."""
    rng = SplitMix64(seed)
    err = 0.0
    ok = True
    for _ in range(instances):
        n = int(rng.integers(3, 40))
        pts = rng.normal((n, 2), scale=10.0) * np.array([1.0, 0.2 + rng.uniform()])
        _, _, w, h, _ = min_area_rect(pts)
        ref = oracles.min_area_rect_sweep(pts)
        ok &= w * h <= ref * (1 + 1e-9)
        err = max(err, abs(w * h - ref) / ref)
    return _result("min_area_rect_vs_angle_sweep", instances, err, 0.01, ok and err <= 0.01)


def check_contour(instances: int = 20, seed: int = 19) -> dict:
    rng = SplitMix64(seed)
    err = 0.0
    for _ in range(instances):
        h, w = (int(v) for v in rng.integers(6, 16, 2))
        a = rng.uniform((h, w)) > 0.5
        b = np.roll(a, int(rng.integers(0, 4)), axis=int(rng.integers(0, 2)))
        tol = int(rng.integers(0, 3))
        got = contour_fmeasure(a.astype(float), b.astype(float), tol)
        err = max(err, abs(got - oracles.contour_f_allpairs(a, b, tol)))
    return _result("contour_f_vs_all_pairs", instances, err, 1e-12)


def check_sample_filter(sequences: int = 10_000, seed: int = 20) -> dict:
    """Randomized push/decide sequences against the straight-line reference, exact match required.

    Values lie on a 0.25 grid so means are exact and ties with the
    running average actually occur.
    """
    rng = SplitMix64(seed)
    mismatches = 0
    decisions = 0
    ties = 0
    for _ in range(sequences):
        length = int(rng.integers(1, 26))
        threshold = (2.5, 5.0, 10.0)[int(rng.integers(0, 3))]
        q = UncertaintyQueue(length, threshold)
        ref = oracles.ReferenceFilter(length, threshold)
        for _ in range(int(rng.integers(1, 41))):
            u = 0.25 * int(rng.integers(1, 61))
            if ref.items and rng.uniform() < 0.2:
                avg = sum(Fraction(v) for v in ref.items) / len(ref.items)
                if Fraction(float(avg)) == avg and avg > 0:
                    u = float(avg)
                    ties += 1
            got = decide(u, q)
            want = ref.decide(u)
            mismatches += got.value != want
            decisions += 1
            push(q, u)
            ref.push(u)
        mismatches += list(q.values) != ref.items
    worked = decide(uncertainty(np.array([[0.05]]), 10.0), UncertaintyQueue(20, 10.0))
    ok = mismatches == 0 and worked is Decision.REMOVED
    return _result("sample_filter_vs_reference", sequences, float(mismatches), 0.0, ok, decisions=decisions,
                   forced_ties=ties, worked_point_removed=worked is Decision.REMOVED)


CHECKS = (
    check_rng,
    check_conv,
    check_softmax,
    check_bilinear,
    check_attention,
    check_dcf_solve,
    check_dcf_dual,
    check_loss_grad,
    check_min_rect,
    check_contour,
    check_sample_filter,
)


def run_all() -> dict:
    results = [c() for c in CHECKS]
    return {"passed": all(r["passed"] for r in results), "checks": results}
