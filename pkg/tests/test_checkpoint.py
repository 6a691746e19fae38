import struct

import numpy as np
import pytest

from samtrack import checkpoint as ck
from samtrack import pipeline as pl
from samtrack.errors import DataError
from samtrack.geometry import mask_to_boxes


def _state(sample, n, **cfg):
    st = pl.init_from_box(pl.TrackerConfig(fit_steps=10, **cfg), sample.frames[0], mask_to_boxes(sample.gt_masks[0])[0])
    for f in sample.frames[1 : n + 1]:
        pl.step(st, f)
    return st


def _same(a, b):
    return (a.mask.fg.tobytes() == b.mask.fg.tobytes() and a.axis_box == b.axis_box
            and a.rotated_box == b.rotated_box and a.uncertainty == b.uncertainty
            and a.preserved == b.preserved and a.spatial_peak == b.spatial_peak)


def test_round_trip_bytes(moving_sample):
    st = _state(moving_sample, 6, sampling_interval=2)
    blob = ck.dumps(st)
    assert blob[:4] == b"SAMT" and struct.unpack_from("<H", blob, 4)[0] == ck.VERSION
    again = ck.dumps(ck.loads(blob))
    assert again == blob
    assert ck.dumps(ck.loads(again)) == blob


def test_resume_is_bit_identical(moving_sample, tmp_path):
    st = _state(moving_sample, 5)
    path = tmp_path / "s.samt"
    ck.save(st, path)
    resumed = ck.load(path)
    assert resumed.frame_index == st.frame_index == 5
    for f in moving_sample.frames[6:]:
        assert _same(pl.step(st, f), pl.step(resumed, f))
    assert ck.dumps(st) == ck.dumps(resumed)


def test_fresh_state_round_trip(static_sample):
    st = _state(static_sample, 0, init_mode="box")
    assert ck.dumps(ck.loads(ck.dumps(st))) == ck.dumps(st)


def test_sections_preserve_arrays():
    arrs = [np.arange(6, dtype=np.float64).reshape(2, 3), np.array(-0.0), np.zeros((0, 4)), np.array([1, 2], dtype="<i8")]
    blob = ck.encode_sections([(f"a{i}", a) for i, a in enumerate(arrs)] + [("meta", {"x": 0.1, "y": [1, None]})])
    sec = ck.decode_sections(blob)
    for i, a in enumerate(arrs):
        assert sec[f"a{i}"].dtype == a.dtype and sec[f"a{i}"].tobytes() == a.tobytes()
    assert sec["meta"] == {"x": 0.1, "y": [1, None]}


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<H", 99) + b[6:],
    lambda b: b[:-3],
    lambda b: b + b"\0",
    lambda b: b[:12],
])
def test_corrupt_files_rejected(moving_sample, mutate):
    blob = ck.dumps(_state(moving_sample, 1))
    with pytest.raises(DataError):
        ck.loads(mutate(blob))


def test_missing_section_rejected():
    with pytest.raises(DataError):
        ck.loads(ck.encode_sections([("meta", {})]))
    with pytest.raises(DataError):
        ck.load("/nonexistent/state.samt")
