import math

import numpy as np
import pytest

from samtrack import dcf as dcf_mod
from samtrack import pipeline as pl
from samtrack.encoder import encode_memory
from samtrack.errors import ConfigurationError, InvalidArgumentError
from samtrack.geometry import rotated_area
from samtrack.mask import MaskPair
from samtrack.sim.metrics import region_similarity as jaccard


def _box(mask):
    ys, xs = np.nonzero(mask.fg > 0.5)
    return (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))


def _run(sample, cfg=None, n=None):
    cfg = cfg or pl.TrackerConfig()
    st = pl.init_from_box(cfg, sample.frames[0], _box(sample.gt_masks[0]))
    out = [pl.step(st, f) for f in sample.frames[1 : n and n + 1]]
    return st, out


@pytest.fixture(scope="module")
def static_run(static_sample):
    return _run(static_sample)


def test_config_round_trip_and_rejection():
    cfg = pl.TrackerConfig(sampling_interval=3)
    assert pl.TrackerConfig.from_dict(cfg.to_dict()) == cfg
    for bad in ({"bogus": 1}, {"dcf": {"nope": 1}}, {"posenc": "mul"}, {"channels": 12}, {"sampling_interval": -1}):
        with pytest.raises(ConfigurationError):
            pl.TrackerConfig.from_dict(bad)


def test_init_from_box(static_sample):
    frame, gt = static_sample.frames[0], static_sample.gt_masks[0]
    box = _box(gt)
    st = pl.init_from_box(pl.TrackerConfig(), frame, box)
    assert len(st.bank) == 1 and not st.bank.entries[0].is_box_mask
    x, y, w, h = box
    spatial = dcf_mod.evaluate(st.dcf, pl.encode_query(st.encoder, frame).features)
    r, c = np.unravel_index(np.argmax(spatial), spatial.shape)
    assert abs(r - (y + (h - 1) / 2) / 4) <= 2 and abs(c - (x + (w - 1) / 2) / 4) <= 2
    pseudo = st.last_result.mask.fg > 0.5
    assert 0 < pseudo.sum() <= 1.5 * w * h
    assert st.frame_index == 0


def test_init_rejects_bad_inputs(static_sample):
    frame = static_sample.frames[0]
    cfg = pl.TrackerConfig()
    for box in ((10, 10, 0, 5), (10, 10, 5, 0), (60, 60, 10, 10), (-1, 0, 4, 4)):
        with pytest.raises(InvalidArgumentError):
            pl.init_from_box(cfg, frame, box)
    with pytest.raises(InvalidArgumentError):
        pl.init_from_mask(cfg, frame, MaskPair.from_fg(np.zeros((64, 64))))
    with pytest.raises(InvalidArgumentError):
        pl.init_from_mask(cfg, frame, MaskPair.from_fg(np.ones((32, 64))))
    with pytest.raises(InvalidArgumentError):
        pl.init_from_box(cfg, frame[:, :, :2], (1, 1, 4, 4))


def test_init_from_mask_stores_exact_embedding(static_sample):
    cfg = pl.TrackerConfig(fit_steps=5)
    frame, gt = static_sample.frames[0], static_sample.gt_masks[0]
    st = pl.init_from_mask(cfg, frame, gt)
    ref = encode_memory(st.encoder, frame, gt)
    e = st.bank.entries[0]
    assert not e.is_box_mask and e.frame_index == 0
    assert e.value.tobytes() == ref.value.tobytes() and e.key.tobytes() == ref.key.tobytes()


def test_static_scene_tracks(static_sample, static_run):
    st, out = static_run
    assert st.frame_index == len(static_sample.frames) - 1
    # full-resolution static scene: IoU against the init mask stays high
    from samtrack.geometry import mask_to_boxes
    from samtrack.sim.scene import SceneSpec, generate
    s = generate(SceneSpec(frames=11, seed=3))
    init = s.gt_masks[0]
    st = pl.init_from_box(pl.TrackerConfig(), s.frames[0], mask_to_boxes(init)[0])
    ious = [jaccard(pl.step(st, f).mask, init) for f in s.frames[1:]]
    assert min(ious) >= 0.8


def test_result_boxes_nest(static_run):
    _, out = static_run
    for r in out:
        assert not r.fail_safe and not r.empty_mask
        assert r.mask.fg.shape == (64, 64)
        assert np.all(np.abs(r.mask.fg + r.mask.bg - 1) <= 1e-9)
        x, y, w, h = r.axis_box
        assert rotated_area(r.rotated_box) <= w * h + 1e-9
        assert r.uncertainty == pytest.approx(1 / r.spatial_peak)


def test_reproducible(static_sample, static_run):
    _, a = static_run
    _, b = _run(static_sample, n=4)
    for ra, rb in zip(a, b):
        assert ra.mask.fg.tobytes() == rb.mask.fg.tobytes()
        assert (ra.uncertainty, ra.axis_box, ra.rotated_box) == (rb.uncertainty, rb.axis_box, rb.rotated_box)


def test_noise_frame_is_removed(static_sample):
    cfg = pl.TrackerConfig(fit_steps=20)
    st, _ = _run(static_sample, cfg, n=4)
    bank_before = [e.frame_index for e in st.bank.readable()]
    count = st.dcf.update_count
    noise = np.random.default_rng(0).uniform(size=(64, 64, 3))
    r = pl.step(st, noise)
    assert not r.preserved
    assert [e.frame_index for e in st.bank.readable()] == bank_before
    assert st.dcf.update_count == count
    assert st.queue.values[-1] == r.uncertainty


def test_filter_removes_everything_with_tiny_threshold(static_sample):
    cfg = pl.TrackerConfig(fit_steps=5, hard_threshold=1e-6)
    st, out = _run(static_sample, cfg, n=3)
    assert not any(r.preserved for r in out)
    assert len(st.bank) == 1 and st.dcf.update_count == 1


def test_memory_discipline_without_filter(static_sample):
    cfg = pl.TrackerConfig(fit_steps=5, filter_enabled=False, sampling_interval=3)
    st, out = _run(static_sample, cfg)
    n = len(out)
    assert all(r.preserved for r in out)
    assert len(st.bank.entries) == 1 + n // 3
    assert len(st.bank) == 1 + n // 3 + 1
    assert st.bank.last.frame_index == n
    assert st.dcf.update_count == n + 1


def test_frame_dims_must_match(static_sample):
    st = pl.init_from_box(pl.TrackerConfig(fit_steps=1), static_sample.frames[0], _box(static_sample.gt_masks[0]))
    with pytest.raises(InvalidArgumentError):
        pl.step(st, np.zeros((32, 64, 3)))
    assert st.frame_index == 0


def test_fail_safe_on_numeric_fault(static_sample, monkeypatch):
    st = pl.init_from_box(pl.TrackerConfig(fit_steps=5), static_sample.frames[0], _box(static_sample.gt_masks[0]))
    good = pl.step(st, static_sample.frames[1])
    n_bank, n_queue = len(st.bank), len(st.queue)

    def broken(*a, **k):
        return MaskPair(np.full((64, 64), math.nan), np.full((64, 64), math.nan))

    monkeypatch.setattr(pl, "decode", broken)
    r = pl.step(st, static_sample.frames[2])
    assert r.fail_safe and not r.preserved and math.isnan(r.uncertainty)
    assert r.axis_box == good.axis_box
    assert len(st.bank) == n_bank and len(st.queue) == n_queue
    assert st.frame_index == 2
