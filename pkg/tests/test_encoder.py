import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from samtrack.encoder import STACKS, encode_memory, encode_query, init_encoder
from samtrack.errors import ConfigurationError, InvalidArgumentError
from samtrack.mask import MaskPair
from samtrack.tensor import SplitMix64


@pytest.fixture(scope="module")
def enc():
    return init_encoder(7, 32, 4)


def _frame(seed, h=64, w=64):
    return SplitMix64(seed).uniform((h, w, 3))


def _disk(h=64, w=64, r=12):
    yy, xx = np.mgrid[:h, :w]
    return MaskPair.from_fg(((yy - h / 2) ** 2 + (xx - w / 2) ** 2 <= r * r).astype(float))


def test_seed_determinism(enc):
    other = init_encoder(7, 32, 4)
    for name in STACKS:
        assert enc.stacks[name].weights.tobytes() == other.stacks[name].weights.tobytes()
        assert enc.stacks[name].bias.tobytes() == other.stacks[name].bias.tobytes()
    assert not np.array_equal(init_encoder(8).stacks["backbone1"].weights, enc.stacks["backbone1"].weights)


def test_head_widths(enc):
    assert enc.stacks["key_head"].out_channels == 4
    assert enc.stacks["query_head"].out_channels == 4
    assert enc.stacks["value_head"].out_channels == 16
    assert enc.stacks["query_value_head"].out_channels == 16


@pytest.mark.parametrize("c", [30, 4, 0])
def test_bad_channels(c):
    with pytest.raises(ConfigurationError):
        init_encoder(0, c)


def test_bad_stride():
    with pytest.raises(ConfigurationError):
        init_encoder(0, 32, 3)


def test_handcrafted_stem_filters(enc):
    w = enc.stacks["frame_stem"].weights
    # identity, gradients and box blur on the red channel
    assert w[0, 0, 1, 1] == 1.0 and np.count_nonzero(w[0]) == 1
    assert w[3, 0, 1, 1] == -1.0
    assert np.array_equal(w[6, 0], np.array([[0, 0, 0], [-0.5, 0, 0.5], [0, 0, 0]]))
    assert np.array_equal(w[9, 0], np.array([[0, -0.5, 0], [0, 0, 0], [0, 0.5, 0]]))
    assert np.allclose(w[12, 0], 1.0 / 9.0)


def test_memory_shapes(enc):
    emb = encode_memory(enc, _frame(1), _disk())
    assert emb.key.shape == (16, 16, 4)
    assert emb.value.shape == (16, 16, 16)
    assert np.all(np.isfinite(emb.key)) and np.all(np.isfinite(emb.value))


def test_memory_determinism(enc):
    f, m = _frame(2), _disk()
    a, b = encode_memory(enc, f, m), encode_memory(enc, f, m)
    assert np.array_equal(a.key, b.key) and np.array_equal(a.value, b.value)


def test_swapping_fg_bg_changes_embedding(enc):
    f, m = _frame(3), _disk()
    a = encode_memory(enc, f, m)
    b = encode_memory(enc, f, MaskPair(m.bg, m.fg))
    assert np.linalg.norm(a.value - b.value) > 0


def test_memory_dim_mismatch(enc):
    with pytest.raises(InvalidArgumentError):
        encode_memory(enc, _frame(1), _disk(32, 32))
    with pytest.raises(InvalidArgumentError):
        encode_memory(enc, _frame(1), MaskPair(np.full((64, 64), 1.5), np.full((64, 64), -0.5)))


def test_query_shapes_and_skips(enc):
    f = _frame(4)
    q = encode_query(enc, f)
    assert q.query.shape == (16, 16, 4)
    assert q.query_value.shape == (16, 16, 16)
    assert q.skips[0].shape == (32, 32, 32)
    assert q.skips[1].shape == (16, 16, 32)
    assert q.query.shape[:2] == encode_memory(enc, f, _disk()).key.shape[:2]


def test_zero_frame_finite(enc):
    q = encode_query(enc, np.zeros((32, 32, 3)))
    for a in (q.query, q.query_value, q.features, *q.skips):
        assert np.all(np.isfinite(a))


def test_query_rejects_bad_frames(enc):
    with pytest.raises(InvalidArgumentError):
        encode_query(enc, np.zeros((32, 32, 4)))


def test_shared_weights_between_paths(enc):
    """Both encoders use the same frame stem and backbone, so a mask of zeros differs only by mask stems."""
    f = _frame(5)
    zero = MaskPair(np.zeros((64, 64)), np.zeros((64, 64)))
    from samtrack.encoder import _backbone, _relu
    from samtrack.tensor import conv2d
    st_ = enc.stacks
    stem = conv2d(f, st_["frame_stem"], stride=2)
    stem += conv2d(zero.fg[:, :, None], st_["fg_stem"], stride=2)
    stem += conv2d(zero.bg[:, :, None], st_["bg_stem"], stride=2)
    f_m = _backbone(enc, _relu(stem))[-1]
    q = encode_query(enc, f)
    half = enc.channels // 2
    # appearance channels never see the mask stems
    assert np.array_equal(f_m[:, :, :half], q.features[:, :, :half])


def test_keys_are_scaled_unit_vectors(enc):
    emb = encode_memory(enc, _frame(6), _disk())
    norms = np.linalg.norm(emb.key, axis=2)
    # a 1e-6 guard in the normalizer keeps zero vectors finite
    assert np.allclose(norms[norms > 1.0], enc.key_scale, rtol=1e-4)


@given(st.integers(1, 6), st.integers(1, 6))
def test_shape_contract(a, b):
    e = init_encoder(1, 16, 4)
    q = encode_query(e, np.full((4 * a, 4 * b, 3), 0.3))
    assert q.query.shape[:2] == (a, b)


def test_odd_dims_ceil():
    e = init_encoder(1, 16, 4)
    q = encode_query(e, np.full((17, 10, 3), 0.3))
    assert q.query.shape[:2] == (5, 3)
