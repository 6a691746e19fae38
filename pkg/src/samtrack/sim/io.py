"""Image-sequence and report files: binary PPM/PGM, JSON, CSV and aligned text."""
from __future__ import annotations

import csv
import io
import json
import re
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..mask import MaskPair

_HEADER = re.compile(rb"^(P[56])\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def _write_pnm(path, magic: str, data: np.ndarray):
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"{magic}\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data, dtype=np.uint8).tobytes())


def _read_pnm(path, magic: bytes) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    m = _HEADER.match(raw)
    if not m or m.group(1) != magic:
        raise DataError(f"{path}: not a binary {magic.decode()} file")
    w, h, maxval = int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit images are supported")
    depth = 3 if magic == b"P6" else 1
    body = raw[m.end():]
    if len(body) < w * h * depth:
        raise DataError(f"{path}: truncated pixel data")
    arr = np.frombuffer(body[: w * h * depth], dtype=np.uint8)
    return arr.reshape(h, w, depth) if depth == 3 else arr.reshape(h, w)


def to_u8(x: np.ndarray) -> np.ndarray:
    return np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_frame(path, frame: np.ndarray):
    """RGB frame in [0, 1] as 8-bit PPM (P6)."""
    _write_pnm(path, "P6", to_u8(frame))


def read_frame(path) -> np.ndarray:
    return _read_pnm(path, b"P6").astype(np.float64) / 255.0


def write_mask(path, mask, threshold: float = 0.5):
    """Binarized mask as 8-bit PGM (P5), 255 = foreground."""
    fg = mask.fg if isinstance(mask, MaskPair) else np.asarray(mask)
    _write_pnm(path, "P5", np.where(fg > threshold, 255, 0))


def read_mask(path) -> MaskPair:
    return MaskPair.from_fg((_read_pnm(path, b"P5") >= 128).astype(np.float64))


def frame_name(t: int) -> str:
    return f"frame_{t:05d}.ppm"


def mask_name(t: int) -> str:
    return f"mask_{t:05d}.pgm"


def write_sequence(directory, sample):
    """Frames, ground-truth masks and occlusion fractions of a generated sequence."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for t, (frame, gt) in enumerate(zip(sample.frames, sample.gt_masks)):
        write_frame(d / frame_name(t), frame)
        write_mask(d / mask_name(t), gt)
    meta = {"frames": len(sample), "occluded": list(sample.occluded)}
    if sample.spec is not None:
        meta["spec"] = sample.spec.to_dict()
    (d / "sequence.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def read_sequence(directory):
    """Frames plus whatever ground-truth masks exist; masks may be absent past frame 0."""
    from .scene import SequenceSample

    d = Path(directory)
    frames = sorted(d.glob("frame_*.ppm"))
    if not frames:
        raise DataError(f"{d}: no frame_*.ppm files")
    imgs = [read_frame(p) for p in frames]
    masks = []
    for t in range(len(imgs)):
        p = d / mask_name(t)
        masks.append(read_mask(p) if p.exists() else None)
    if masks[0] is None:
        raise DataError(f"{d}: the first frame needs a ground-truth mask ({mask_name(0)})")
    occluded = [0.0] * len(imgs)
    return SequenceSample(imgs, masks, occluded)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return "inf" if v is None else str(v)


def rows_to_text(rows: list[dict]) -> str:
    """Aligned columns for humans; floats at four decimals."""
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[_fmt(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"
