"""Binary tracker checkpoints.

Layout (all integers little-endian)::

    magic   4 bytes  b"SAMT"
    version u16
    count   u32      number of sections
    section * count:
        name_len u16, name (utf-8)
        kind     u8   0 = JSON text, 1 = array
        size     u64  payload bytes
        payload

An array payload is ``dtype_len u8, dtype (numpy str, e.g. "<f8"),
ndim u8, ndim * u64 dims, raw C-order data``.  Section names are dotted
paths (``bank.entry.3.key``); the ``meta`` JSON section lists everything
needed to rebuild the state object graph.  Floats are stored as raw
IEEE bits or as shortest round-trip JSON text, so save -> load -> save
is byte-identical.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import dcf as dcf_mod
from . import memory as mem
from .decoder import BLOCKS, DecoderParams
from .encoder import STACKS, EncoderParams
from .errors import DataError
from .mask import MaskPair
from .pipeline import TrackerConfig, TrackerState, TrackResult
from .sample_filter import UncertaintyQueue
from .tensor import ConvKernelStack

MAGIC = b"SAMT"
VERSION = 1
_JSON, _ARRAY = 0, 1


def _pack_array(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a)
    dt = a.dtype.str.encode("ascii")
    head = struct.pack("<B", len(dt)) + dt + struct.pack("<B", a.ndim)
    head += b"".join(struct.pack("<Q", d) for d in a.shape)
    return head + a.tobytes()


def _unpack_array(buf: bytes) -> np.ndarray:
    n = buf[0]
    dt = np.dtype(buf[1 : 1 + n].decode("ascii"))
    pos = 1 + n
    ndim = buf[pos]
    pos += 1
    shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
    pos += 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(buf) - pos != count * dt.itemsize:
        raise DataError("array section size does not match its header")
    return np.frombuffer(buf, dtype=dt, count=count, offset=pos).reshape(shape).copy()


def encode_sections(sections: list[tuple[str, object]]) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(sections))]
    for name, value in sections:
        nb = name.encode("utf-8")
        if isinstance(value, np.ndarray):
            kind, payload = _ARRAY, _pack_array(value)
        else:
            kind, payload = _JSON, json.dumps(value, sort_keys=True).encode("utf-8")
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<BQ", kind, len(payload)) + payload)
    return b"".join(out)


def decode_sections(data: bytes) -> dict:
    if data[:4] != MAGIC:
        raise DataError("not a tracker checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<HI", data, 4)
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        pos = 10
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2 : pos + 2 + nlen].decode("utf-8")
            pos += 2 + nlen
            kind, size = struct.unpack_from("<BQ", data, pos)
            pos += 9
            payload = data[pos : pos + size]
            if len(payload) != size:
                raise DataError("truncated checkpoint")
            pos += size
            if kind == _JSON:
                out[name] = json.loads(payload.decode("utf-8"))
            elif kind == _ARRAY:
                out[name] = _unpack_array(payload)
            else:
                raise DataError(f"unknown section kind {kind}")
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise DataError(f"corrupt checkpoint: {exc}") from exc
    if pos != len(data):
        raise DataError("trailing bytes after the last section")
    return out


def _stack_sections(prefix: str, stacks: dict, names) -> list:
    out = []
    for n in names:
        out.append((f"{prefix}.{n}.weights", stacks[n].weights))
        out.append((f"{prefix}.{n}.bias", stacks[n].bias))
    return out


def _entry_meta(e: mem.MemoryEntry) -> dict:
    return {"frame_index": e.frame_index, "is_box_mask": e.is_box_mask}


def _result_meta(r: TrackResult | None):
    if r is None:
        return None
    return {
        "axis_box": list(r.axis_box),
        "rotated_box": list(r.rotated_box),
        "uncertainty": r.uncertainty,
        "preserved": r.preserved,
        "spatial_peak": r.spatial_peak,
        "fail_safe": r.fail_safe,
        "empty_mask": r.empty_mask,
    }


def state_sections(state: TrackerState) -> list[tuple[str, object]]:
    enc, dec, bank, model, queue = state.encoder, state.decoder, state.bank, state.dcf, state.queue
    meta = {
        "config": state.config.to_dict(),
        "frame_shape": list(state.frame_shape),
        "frame_index": state.frame_index,
        "encoder": {"seed": enc.seed, "channels": enc.channels, "stride": enc.stride, "key_scale": enc.key_scale},
        "decoder": {"seed": dec.seed, "learnable": sorted(dec.learnable)},
        "bank": {
            "entries": [_entry_meta(e) for e in bank.entries],
            "last": None if bank.last is None else _entry_meta(bank.last),
        },
        "dcf": {
            "update_count": model.update_count,
            "samples": [
                {"base_weight": s.base_weight, "inserted_at": s.inserted_at, "pinned": s.pinned, "yty": s.yty}
                for s in model.samples
            ],
        },
        "queue": {"values": list(queue.values)},
        "last_result": _result_meta(state.last_result),
    }
    sec: list[tuple[str, object]] = [("meta", meta)]
    sec += _stack_sections("encoder", enc.stacks, STACKS)
    sec += _stack_sections("decoder", dec.blocks, BLOCKS)
    for i, e in enumerate(bank.entries):
        sec += [(f"bank.entry.{i}.key", e.key), (f"bank.entry.{i}.value", e.value)]
    if bank.last is not None:
        sec += [("bank.last.key", bank.last.key), ("bank.last.value", bank.last.value)]
    sec += [("dcf.reduce.weights", model.reduce.weights), ("dcf.reduce.bias", model.reduce.bias),
            ("dcf.weights", model.weights)]
    for i, s in enumerate(model.samples):
        sec += [(f"dcf.sample.{i}.features", s.features), (f"dcf.sample.{i}.label", s.label),
                (f"dcf.sample.{i}.gram", s.gram), (f"dcf.sample.{i}.xty", s.xty)]
    if state.last_result is not None:
        sec += [("last_result.fg", state.last_result.mask.fg), ("last_result.bg", state.last_result.mask.bg)]
    return sec


def dumps(state: TrackerState) -> bytes:
    return encode_sections(state_sections(state))


def _stacks(sec: dict, prefix: str, names) -> dict:
    return {n: ConvKernelStack(sec[f"{prefix}.{n}.weights"], sec[f"{prefix}.{n}.bias"]) for n in names}


def loads(data: bytes) -> TrackerState:
    sec = decode_sections(data)
    try:
        return _rebuild(sec)
    except KeyError as exc:
        raise DataError(f"checkpoint lacks section {exc}") from exc


def _rebuild(sec: dict) -> TrackerState:
    meta = sec["meta"]
    config = TrackerConfig.from_dict(meta["config"])
    e = meta["encoder"]
    enc = EncoderParams(e["seed"], e["channels"], e["stride"], e["key_scale"], _stacks(sec, "encoder", STACKS))
    d = meta["decoder"]
    dec = DecoderParams(_stacks(sec, "decoder", BLOCKS), frozenset(d["learnable"]), d["seed"])

    bank = mem.MemoryBank(config.sampling_interval, config.always_include_last, config.capacity)
    for i, em in enumerate(meta["bank"]["entries"]):
        bank.entries.append(mem.MemoryEntry(sec[f"bank.entry.{i}.key"], sec[f"bank.entry.{i}.value"],
                                            em["frame_index"], em["is_box_mask"]))
    lm = meta["bank"]["last"]
    if lm is not None:
        bank.last = mem.MemoryEntry(sec["bank.last.key"], sec["bank.last.value"], lm["frame_index"], lm["is_box_mask"])

    dm = meta["dcf"]
    model = dcf_mod.DcfModel(config.dcf, ConvKernelStack(sec["dcf.reduce.weights"], sec["dcf.reduce.bias"]),
                             sec["dcf.weights"], update_count=dm["update_count"])
    for i, sm in enumerate(dm["samples"]):
        model.samples.append(dcf_mod.Sample(
            sec[f"dcf.sample.{i}.features"], sec[f"dcf.sample.{i}.label"], sm["base_weight"], sm["inserted_at"],
            sm["pinned"], sec[f"dcf.sample.{i}.gram"], sec[f"dcf.sample.{i}.xty"], sm["yty"],
        ))

    queue = UncertaintyQueue(config.queue_length, config.hard_threshold, meta["queue"]["values"])
    state = TrackerState(config, enc, dec, bank, model, queue, tuple(meta["frame_shape"]), meta["frame_index"])
    rm = meta["last_result"]
    if rm is not None:
        state.last_result = TrackResult(
            MaskPair(sec["last_result.fg"], sec["last_result.bg"]), tuple(rm["axis_box"]), tuple(rm["rotated_box"]),
            rm["uncertainty"], rm["preserved"], rm["spatial_peak"], rm["fail_safe"], rm["empty_mask"],
        )
    return state


def save(state: TrackerState, path):
    Path(path).write_bytes(dumps(state))


def load(path) -> TrackerState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(data)
