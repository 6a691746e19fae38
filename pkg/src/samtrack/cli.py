"""Command-line interface: ``samtrack generate|track|ablate|bench|selftest``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
numeric error (including a failed self-test check).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, pipeline
from .errors import ConfigurationError, DataError, InvalidArgumentError, NumericError
from .geometry import mask_to_boxes
from .pipeline import TrackerConfig

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _read_json(path, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {what} {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{what} {path} is not valid JSON: {exc}") from exc


def load_config(path) -> TrackerConfig:
    if path is None:
        return TrackerConfig().validate()
    return TrackerConfig.from_dict(_read_json(path, "config"))


def _write_rows(out: Path, stem: str, rows: list[dict]):
    from .sim.io import rows_to_csv, rows_to_text

    (out / f"{stem}.csv").write_text(rows_to_csv(rows))
    (out / f"{stem}.txt").write_text(rows_to_text(rows))


def cmd_generate(args) -> int:
    from .sim.io import write_sequence
    from .sim.scene import SceneSpec, generate

    spec = SceneSpec.from_dict(_read_json(args.spec, "scene spec"))
    if args.seed is not None:
        if not 0 <= args.seed < 1 << 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        spec.seed = args.seed
    write_sequence(args.out, generate(spec))
    print(f"wrote {spec.frames} frames to {args.out}")
    return EXIT_OK


def _frame_row(t: int, r, gt) -> dict:
    from .sim.metrics import contour_fmeasure, region_similarity

    row = {
        "frame": t,
        "uncertainty": r.uncertainty,
        "preserved": int(r.preserved),
        "peak": r.spatial_peak,
        "fail_safe": int(r.fail_safe),
        "box_x": r.axis_box[0], "box_y": r.axis_box[1], "box_w": r.axis_box[2], "box_h": r.axis_box[3],
        "rot_cx": r.rotated_box[0], "rot_cy": r.rotated_box[1], "rot_w": r.rotated_box[2],
        "rot_h": r.rotated_box[3], "rot_theta": r.rotated_box[4],
    }
    if gt is not None:
        row["J"] = region_similarity(r.mask, gt)
        row["F"] = contour_fmeasure(r.mask, gt)
    return row


def cmd_track(args) -> int:
    from .sim.io import mask_name, read_sequence, write_json, write_mask

    config = load_config(args.config)
    seq = read_sequence(args.sequence)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        state = checkpoint.load(args.resume)
        if state.frame_shape != seq.frames[0].shape[:2]:
            raise DataError("checkpoint frame size differs from the sequence")
    elif config.init_mode == "box":
        box, _ = mask_to_boxes(seq.gt_masks[0])
        state = pipeline.init_from_box(config, seq.frames[0], box)
    else:
        state = pipeline.init_from_mask(config, seq.frames[0], seq.gt_masks[0])
    start = state.frame_index + 1
    stop = len(seq) if args.frames is None else min(len(seq), start + args.frames)
    rows = []
    for t in range(start, stop):
        r = pipeline.step(state, seq.frames[t])
        rows.append(_frame_row(t, r, seq.gt_masks[t]))
        if args.emit_masks:
            write_mask(out / mask_name(t), r.mask, state.config.mask_threshold)
    if args.save_state:
        checkpoint.save(state, args.save_state)
    summary = {"frames": len(rows), "config": state.config.to_dict()}
    scored = [r["J"] for r in rows if "J" in r]
    if scored:
        summary["J_mean"] = float(np.mean(scored))
        summary["F_mean"] = float(np.mean([r["F"] for r in rows if "F" in r]))
    summary["preserved_fraction"] = float(np.mean([r["preserved"] for r in rows])) if rows else 0.0
    write_json(out / "track.json", {"summary": summary, "frames": rows})
    _write_rows(out, "frames", rows)
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, sort_keys=True))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .sim.io import rows_to_csv, rows_to_text, write_json
    from .sim.runner import ablation_sweep

    config = load_config(args.config)
    rows = ablation_sweep(config, args.suite, args.sweep, workers=args.workers, max_frames=args.max_frames)
    text = rows_to_text(rows)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        if out.suffix == ".csv":
            out.write_text(rows_to_csv(rows))
        elif out.suffix == ".txt":
            out.write_text(text)
        else:
            write_json(out, {"suite": args.suite, "sweep": args.sweep, "rows": rows})
    return EXIT_OK


def cmd_bench(args) -> int:
    from .sim.io import rows_to_text, write_json
    from .sim.runner import run_suite, suite_report

    config = load_config(args.config)
    reports = run_suite(config, args.suite, workers=args.workers, max_frames=args.max_frames)
    rep = suite_report(reports, timing=True)
    tm = rep["timing"]
    rows = [{"stage": k, "total_s": v, "ms_per_frame": tm["stage_ms_per_frame"][k]} for k, v in tm["stage_s"].items()]
    print(rows_to_text(rows), end="")
    print(f"frames {tm['frames']}  runtime {tm['runtime_s']:.2f} s  "
          f"fps(tracking) {tm['fps_tracking']:.2f}  fps(with re-inits) {tm['fps_overall']:.2f}")
    print(json.dumps(rep["summary"], sort_keys=True))
    if args.out:
        write_json(args.out, rep)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    res = run_all()
    for c in res["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status}  {c['name']:<34} n={c['instances']:<6} max_err={c['max_error']:.3e} tol={c['tolerance']:.0e}")
    if args.out:
        Path(args.out).write_text(json.dumps(res, indent=1, sort_keys=True) + "\n")
    return EXIT_OK if res["passed"] else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    from .sim.runner import SWEEPS

    p = argparse.ArgumentParser(prog="samtrack", description="Spatio-appearance memory tracker on synthetic video.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a scene spec to an image-sequence directory")
    g.add_argument("--spec", required=True, help="scene spec JSON")
    g.add_argument("--seed", type=int, default=None, help="master seed (overrides the spec's)")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("track", help="track a sequence directory from its frame-0 mask")
    t.add_argument("--config", help="tracker config JSON (defaults when omitted)")
    t.add_argument("--sequence", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--emit-masks", action="store_true", help="write mask_NNNNN.pgm per tracked frame")
    t.add_argument("--frames", type=int, default=None, help="track at most this many frames")
    t.add_argument("--save-state", help="write a checkpoint after the last tracked frame")
    t.add_argument("--resume", help="continue from a checkpoint instead of initializing")
    t.set_defaults(fn=cmd_track)

    a = sub.add_parser("ablate", help="sweep one setting over a suite")
    a.add_argument("--config")
    a.add_argument("--suite", required=True, help="suite name or suite JSON path")
    a.add_argument("--sweep", required=True, choices=sorted(SWEEPS))
    a.add_argument("--out", help=".json, .csv or .txt")
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--max-frames", type=int, default=None)
    a.set_defaults(fn=cmd_ablate)

    b = sub.add_parser("bench", help="run a suite and report per-stage timings")
    b.add_argument("--config")
    b.add_argument("--suite", required=True)
    b.add_argument("--out")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--max-frames", type=int, default=None)
    b.set_defaults(fn=cmd_bench)

    s = sub.add_parser("selftest", help="run every oracle-equivalence check")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, InvalidArgumentError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
