import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from samtrack import dcf
from samtrack import oracles
from samtrack.errors import ConfigurationError, InvalidArgumentError, StateError
from samtrack.tensor import SplitMix64, conv2d

from conftest import rel_err


def _model(d=4, k=3, c=6, lam=0.05, gamma=0.99, seed=1, **kw):
    return dcf.init_dcf(seed, c, dcf.DcfConfig(reduce_channels=d, kernel_size=k, lam=lam, gamma=gamma, **kw))


def _samples(model):
    return [(s.features, s.label) for s in model.samples], [model.sample_weight(s) for s in model.samples]


def test_label_examples():
    y = dcf.make_label((3, 4), (7, 9), 1.0)
    assert y[3, 4] == 1.0
    for r, c in ((2, 4), (4, 4), (3, 3), (3, 5)):
        assert y[r, c] == pytest.approx(math.exp(-0.5), abs=1e-15)
    a = dcf.make_label((10, 10), (21, 21)).sum()
    b = dcf.make_label((11, 9), (21, 21)).sum()
    assert a == pytest.approx(b, rel=1e-12)
    sigma = 1e3
    big = dcf.make_label((2, 2), (5, 5), sigma)
    assert np.all(big >= math.exp(-16 / (2 * sigma**2)))


def test_label_errors():
    with pytest.raises(InvalidArgumentError):
        dcf.make_label((7, 0), (7, 7))
    with pytest.raises(ConfigurationError):
        dcf.make_label((1, 1), (3, 3), 0.0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        dcf.DcfConfig(kernel_size=2).validate()
    with pytest.raises(ConfigurationError):
        dcf.DcfConfig(gamma=0.0).validate()
    with pytest.raises(ConfigurationError):
        dcf.DcfConfig(lam=0.0).validate()


def test_ridge_limit(rng):
    m = _model(lam=1e6)
    dcf.update(m, rng.normal((6, 6, 6)), dcf.make_label((2, 3), (6, 6)))
    assert np.linalg.norm(m.weights) < 1e-3


def test_cg_matches_direct_solve(rng):
    m = _model()
    dcf.add_sample(m, rng.normal((6, 6, 6)), dcf.make_label((2.5, 2.5), (6, 6)))
    dcf.train(m, gn_iters=2, cg_iters=200, tol=1e-12)
    s, w = _samples(m)
    ref = oracles.ridge_direct(s, w, m.cfg.lam, 3)
    assert rel_err(m.weights_vector(), ref) <= 1e-6


def test_duplicate_samples_equal_double_weight(rng):
    x = rng.normal((6, 6, 6))
    y = dcf.make_label((2, 2), (6, 6))
    a = _model(gamma=1.0)
    dcf.add_sample(a, x, y)
    dcf.add_sample(a, x, y)
    b = _model(gamma=1.0)
    dcf.add_sample(b, x, y, weight=2.0)
    for m in (a, b):
        dcf.train(m, 1, 500, tol=1e-14)
    assert rel_err(a.weights_vector(), b.weights_vector()) <= 1e-9


def test_evaluate_zero_filter_and_linearity(rng):
    m = _model()
    x = rng.normal((5, 7, 6))
    assert np.all(dcf.evaluate(m, x) == 0)
    dcf.update(m, x, dcf.make_label((2, 3), (5, 7)))
    a = 2.75
    assert np.max(np.abs(dcf.evaluate(m, a * x) - a * dcf.evaluate(m, x))) <= 1e-9
    with pytest.raises(InvalidArgumentError):
        dcf.evaluate(m, rng.normal((5, 7, 5)))


def test_exactly_solvable_peak(rng):
    # 4 x 4 cells, 8 channels x 9 taps = 72 unknowns > 16 constraints
    m = _model(d=8, c=8, lam=1e-6)
    x = rng.normal((4, 4, 8))
    y = dcf.make_label((1, 2), (4, 4))
    dcf.add_sample(m, x, y)
    dcf.train(m, 1, 200, tol=1e-12)
    assert dcf.evaluate(m, x)[1, 2] >= 0.9


def test_objective_examples(rng):
    m = _model()
    with pytest.raises(StateError):
        dcf.objective(m)
    dcf.add_sample(m, rng.normal((5, 5, 6)), np.zeros((5, 5)))
    assert dcf.objective(m) == 0.0
    dcf.add_sample(m, rng.normal((5, 5, 6)), dcf.make_label((2, 2), (5, 5)))
    before = dcf.objective(m)
    info = dcf.train(m, 2, 10, monitor=True)
    assert dcf.objective(m) <= before + 1e-9
    assert all(b <= a + 1e-9 for a, b in zip(info.objective, info.objective[1:]))
    assert min(info.objective) >= 0


def test_fast_objective_matches_explicit(rng):
    m = _model()
    for i in range(3):
        dcf.update(m, rng.normal((6, 5, 6)), dcf.make_label((i + 1, 2), (6, 5)))
    assert dcf.fast_objective(m) == pytest.approx(dcf.objective(m), rel=1e-9)


def test_sample_decay_exact(rng):
    m = _model(gamma=0.9)
    for i in range(5):
        dcf.add_sample(m, rng.normal((4, 4, 6)), dcf.make_label((1, 1), (4, 4)))
    first, second = m.samples[0], m.samples[1]
    assert m.sample_weight(first) == 1.0  # pinned
    assert m.sample_weight(second) == 0.9 ** (m.update_count - second.inserted_at)
    assert m.sample_weight(m.samples[-1]) == 1.0


def test_buffer_eviction_keeps_pinned(rng):
    m = _model(max_samples=3)
    for i in range(6):
        dcf.add_sample(m, rng.normal((4, 4, 6)), dcf.make_label((1, 1), (4, 4)))
    assert len(m.samples) == 3
    assert m.samples[0].pinned and m.samples[0].inserted_at == 1
    assert [s.inserted_at for s in m.samples[1:]] == [5, 6]


def test_label_dims_checked(rng):
    m = _model()
    with pytest.raises(InvalidArgumentError):
        dcf.add_sample(m, rng.normal((4, 4, 6)), np.zeros((3, 4)))


def test_primal_dual_consistency(rng):
    m = _model(d=3, k=1, c=5, lam=0.1)
    x = rng.normal((5, 6, 5))
    s = dcf.add_sample(m, x, dcf.make_label((2, 2.5), (5, 6)))
    dcf.train(m, 1, 200, tol=1e-13)
    xe = rng.normal((5, 6, 5))
    ref = oracles.ridge_dual_response(s.features, s.label, 0.1, conv2d(xe, m.reduce))
    assert rel_err(dcf.evaluate(m, xe), ref) <= 1e-6


def test_clamped_mode_decreases_objective(rng):
    m = _model(clamp_residuals=True)
    for i in range(3):
        dcf.add_sample(m, rng.normal((6, 6, 6)), dcf.make_label((i + 1, 3), (6, 6)))
    before = dcf.objective(m)
    dcf.train(m, 3, 10)
    assert dcf.objective(m) <= before


@given(st.integers(0, 2**31), st.integers(1, 4), st.sampled_from([1, 3]))
def test_cg_curvature_and_monotone(seed, n, k):
    r = SplitMix64(seed)
    m = dcf.init_dcf(seed, 4, dcf.DcfConfig(reduce_channels=3, kernel_size=k, gamma=0.95))
    for i in range(n):
        dcf.add_sample(m, r.normal((5, 5, 4)), dcf.make_label((r.uniform() * 4, r.uniform() * 4), (5, 5)))
    info = dcf.train(m, 2, 15, monitor=True)
    assert all(c > 0 for c in info.curvature)
    assert all(b <= a + 1e-9 for a, b in zip(info.objective, info.objective[1:]))
    s, w = _samples(m)
    assert dcf.objective(m) == pytest.approx(oracles.ridge_objective(s, w, m.cfg.lam, k, m.weights_vector()),
                                             rel=1e-9, abs=1e-12)
