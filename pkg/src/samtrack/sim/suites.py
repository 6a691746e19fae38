"""The five standard benchmark suites.

Each suite is 20 sequences of 60 frames at 128x128, drawn by
``build_suite`` from a fixed seed and committed as JSON under
``samtrack/suites`` so the benchmark does not drift with generator code.
Regenerate with ``python -m samtrack.sim.suites``.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

from ..errors import ConfigurationError, DataError
from ..tensor import SplitMix64
from .scene import (
    BackgroundSpec,
    DeformSpec,
    MotionSpec,
    OccluderSpec,
    PhotometricSpec,
    SceneSpec,
    TargetSpec,
)

SUITES = ("static", "deform", "occlude", "deform+occlude", "clutter")
SUITE_SEEDS = {name: 1000 * (i + 1) for i, name in enumerate(SUITES)}
SEQUENCES = 20
FRAMES = 60
SIZE = 128


def _file_name(name: str) -> str:
    return name.replace("+", "_") + ".json"


def _target(rng: SplitMix64) -> TargetSpec:
    shape = "ellipse" if rng.uniform() < 0.6 else "polygon"
    r0 = 13.0 + 5.0 * rng.uniform()
    r1 = r0 * (0.75 + 0.5 * rng.uniform())
    hue = rng.uniform()
    # a saturated color away from the greyish-green background
    color = tuple(round(0.15 + 0.75 * (0.5 + 0.5 * math.cos(2 * math.pi * (hue + k / 3))), 4) for k in range(3))
    return TargetSpec(
        shape=shape,
        radii=(round(r0, 3), round(r1 if shape == "ellipse" else r0, 3)),
        vertices=3 + int(rng.integers(0, 4)),
        rotation=round(math.pi * rng.uniform(), 4),
        color=color,
    )


def _background(rng: SplitMix64) -> BackgroundSpec:
    return BackgroundSpec(texture_seed=int(rng.integers(0, 1 << 30)))


def _moving(rng: SplitMix64, speed: float) -> MotionSpec:
    ang = 2 * math.pi * rng.uniform()
    return MotionSpec(
        start=(round(44 + 40 * rng.uniform(), 3), round(44 + 40 * rng.uniform(), 3)),
        velocity=(round(speed * math.sin(ang), 4), round(speed * math.cos(ang), 4)),
        amplitude=(round(6 * rng.uniform(), 3), round(6 * rng.uniform(), 3)),
        period=round(25 + 20 * rng.uniform(), 3),
    )


def _hue_drift(rng: SplitMix64, frames: int, amount: float) -> float:
    """Per-frame hue rotation reaching ``amount`` radians (either direction) after ``frames`` frames."""
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    return round(sign * amount * (0.8 + 0.4 * rng.uniform()) / frames, 6)


def _occluder(rng: SplitMix64, entry: int, duration: int) -> OccluderSpec:
    grey = round(0.2 + 0.6 * rng.uniform(), 4)
    side = 1.0 if rng.uniform() < 0.5 else -1.0
    return OccluderSpec(
        shape="rect" if rng.uniform() < 0.5 else "ellipse",
        size=(round(42 + 10 * rng.uniform(), 3), round(42 + 10 * rng.uniform(), 3)),
        color=(grey, grey, grey),
        opacity=1.0,
        entry_frame=entry,
        duration=duration,
        offset=(0.0, round(-18.0 * side, 3)),
        velocity=(0.0, round(1.8 * side, 3)),
    )


def _spec(name: str, i: int, rng: SplitMix64) -> SceneSpec:
    target = _target(rng)
    spec = SceneSpec(height=SIZE, width=SIZE, frames=FRAMES, seed=int(rng.integers(0, 1 << 30)),
                     target=target, background=_background(rng),
                     photometric=PhotometricSpec(noise_sigma=0.01))
    deform = "deform" in name
    occlude = "occlude" in name
    if name == "static":
        spec.motion = MotionSpec(start=(round(50 + 28 * rng.uniform(), 3), round(50 + 28 * rng.uniform(), 3)))
        return spec
    spec.motion = _moving(rng, 0.4 + 0.4 * rng.uniform())
    if deform:
        spec.deform = DeformSpec(cycles=2 + int(rng.integers(0, 3)), amplitude=round(0.12 + 0.08 * rng.uniform(), 4),
                                 speed=round(0.15 + 0.1 * rng.uniform(), 4))
        target.spin = round(0.02 * (rng.uniform() - 0.5), 5)
        target.hue_drift = _hue_drift(rng, FRAMES, 1.0)
        spec.photometric.brightness_slope = round(0.003 * (rng.uniform() - 0.5), 6)
    if occlude:
        entry = 15 + int(rng.integers(0, 15))
        occ = _occluder(rng, entry, 8 + int(rng.integers(0, 6)))
        if name == "occlude":
            # a scene-colored occluder that passes in front and stays in view: frames
            # taken while it hides the target teach background colors as target
            occ.color = spec.background.base
            occ.duration = FRAMES - entry
        spec.occluders = [occ]
    if name == "clutter":
        spec.background.clutter = 4
        spec.background.clutter_colors = [list(target.color)] * 2 + [[0.8, 0.8, 0.2], [0.2, 0.3, 0.8]]
    return spec


def build_suite(name: str) -> list[tuple[str, SceneSpec]]:
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; expected one of {SUITES}")
    rng = SplitMix64(SUITE_SEEDS[name])
    return [(f"{name}-{i:02d}", _spec(name, i, rng.fork())) for i in range(SEQUENCES)]


def suite_to_json(name: str, seqs) -> str:
    doc = {"suite": name, "sequences": [{"id": sid, "spec": spec.to_dict()} for sid, spec in seqs]}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def parse_suite(text: str) -> list[tuple[str, SceneSpec]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"suite file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"suite", "sequences"}:
        raise ConfigurationError("suite file must hold exactly 'suite' and 'sequences'")
    out = []
    for item in doc["sequences"]:
        if not isinstance(item, dict) or set(item) != {"id", "spec"}:
            raise ConfigurationError("suite entries need exactly 'id' and 'spec'")
        out.append((str(item["id"]), SceneSpec.from_dict(item["spec"])))
    return out


def load_suite(name: str) -> list[tuple[str, SceneSpec]]:
    """A committed suite by name, or any suite JSON file by path."""
    if name in SUITES:
        text = resources.files("samtrack.suites").joinpath(_file_name(name)).read_text()
    else:
        path = Path(name)
        if not path.is_file():
            raise ConfigurationError(f"unknown suite {name!r}; expected one of {SUITES} or a suite file")
        text = path.read_text()
    return parse_suite(text)


def write_suites(directory: Path | None = None):
    directory = Path(directory) if directory else Path(__file__).resolve().parent.parent / "suites"
    for name in SUITES:
        (directory / _file_name(name)).write_text(suite_to_json(name, build_suite(name)))


if __name__ == "__main__":
    write_suites()
