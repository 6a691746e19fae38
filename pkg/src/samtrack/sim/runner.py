"""Sequence runner, suite evaluation, ablation sweeps and timing."""
from __future__ import annotations

import copy
import time
from concurrent.futures import ProcessPoolExecutor

from .. import pipeline
from ..errors import ConfigurationError
from ..geometry import mask_to_boxes
from ..pipeline import TrackerConfig
from .metrics import FAILURE_IOU, FAILURE_RUN, MetricsReport, aggregate, contour_fmeasure, region_similarity
from .scene import SequenceSample, generate
from .suites import load_suite

TRACKERS = ("samtrack", "oracle", "blind")


class _Tracker:
    """Thin adapter giving the real tracker and the two reference trackers one interface."""

    def __init__(self, kind: str, config: TrackerConfig):
        if kind not in TRACKERS:
            raise ConfigurationError(f"unknown tracker {kind!r}")
        self.kind = kind
        self.config = config
        self.state = None
        self.timings: dict = {}
        self.init_mask = None

    def init(self, frame, gt):
        if self.state is not None:
            for k, v in self.state.timings.items():
                self.timings[k] = self.timings.get(k, 0.0) + v
        self.init_mask = gt
        if self.kind != "samtrack":
            return
        if self.config.init_mode == "box":
            box, _ = mask_to_boxes(gt)
            self.state = pipeline.init_from_box(self.config, frame, box)
        else:
            self.state = pipeline.init_from_mask(self.config, frame, gt)

    def step(self, frame, gt):
        if self.kind == "oracle":
            return gt
        if self.kind == "blind":
            return self.init_mask
        return pipeline.step(self.state, frame).mask

    def stage_timings(self) -> dict:
        out = dict(self.timings)
        if self.state is not None:
            for k, v in self.state.timings.items():
                out[k] = out.get(k, 0.0) + v
        return out


def run_sequence(config: TrackerConfig, sample: SequenceSample, tracker: str = "samtrack",
                 max_frames: int | None = None) -> MetricsReport:
    """Track ``sample`` from a ground-truth start and score frames 1..n-1.

    A failure is ``FAILURE_RUN`` consecutive frames with IoU below
    ``FAILURE_IOU``; the tracker is then re-initialized from the
    ground truth of the frame that completed the run.
    """
    config = copy.deepcopy(config).validate()
    n = len(sample) if max_frames is None else min(len(sample), max_frames)
    t_start = time.perf_counter()
    trk = _Tracker(tracker, config)
    t0 = time.perf_counter()
    trk.init(sample.frames[0], sample.gt_masks[0])
    init_time = time.perf_counter() - t0
    ious, fms, failed = [], [], []
    failures = 0
    run = 0
    for t in range(1, n):
        gt = sample.gt_masks[t]
        pred = trk.step(sample.frames[t], gt)
        ious.append(region_similarity(pred, gt, config.mask_threshold))
        fms.append(contour_fmeasure(pred, gt, 1, config.mask_threshold))
        failed.append(False)
        run = run + 1 if ious[-1] < FAILURE_IOU else 0
        if run == FAILURE_RUN:
            failures += 1
            failed[-FAILURE_RUN:] = [True] * FAILURE_RUN
            run = 0
            t0 = time.perf_counter()
            trk.init(sample.frames[t], gt)
            init_time += time.perf_counter() - t0
    timings = trk.stage_timings()
    timings["init"] = init_time
    return MetricsReport(ious, fms, failed, failures, time.perf_counter() - t_start, timings)


def _job(args):
    config, seq_id, spec, tracker, max_frames = args
    return seq_id, run_sequence(config, generate(spec), tracker, max_frames)


def run_suite(config: TrackerConfig, suite, tracker: str = "samtrack", workers: int = 1,
              max_frames: int | None = None) -> dict:
    """Evaluate every sequence of ``suite``; returns ``{sequence id: MetricsReport}`` in sorted id order.

    ``suite`` is a suite name or a list of ``(id, SceneSpec)``.  Sequences
    are independent, so a process pool may evaluate them in any order.
    """
    seqs = load_suite(suite) if isinstance(suite, str) else list(suite)
    if not seqs:
        raise ConfigurationError("empty suite")
    jobs = [(config, sid, spec, tracker, max_frames) for sid, spec in seqs]
    if workers <= 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    return {sid: rep for sid, rep in sorted(results, key=lambda r: r[0])}


def suite_report(reports: dict, timing: bool = False) -> dict:
    """JSON-ready report; only timing fields vary between identical runs, so they are opt-in."""
    out = {
        "summary": aggregate(reports[k] for k in sorted(reports)),
        "sequences": {k: reports[k].to_dict(timing) for k in sorted(reports)},
    }
    if timing:
        out["timing"] = timing_summary(reports)
    return out


def timing_summary(reports: dict) -> dict:
    frames = sum(r.frames for r in reports.values())
    runtime = sum(r.runtime for r in reports.values())
    stages: dict = {}
    for k in sorted(reports):
        for name, v in reports[k].stage_timings.items():
            stages[name] = stages.get(name, 0.0) + v
    tracked = sum(v for k, v in stages.items() if k != "init")
    return {
        "frames": frames,
        "runtime_s": runtime,
        "fps_overall": frames / runtime if runtime > 0 else float("inf"),
        "fps_tracking": frames / tracked if tracked > 0 else float("inf"),
        "stage_s": stages,
        "stage_ms_per_frame": {k: 1000.0 * v / frames for k, v in stages.items()} if frames else {},
    }


SWEEPS = {
    "interval": [0, 1, 5, 10, 15, 20, 30, None],
    "filter": [True, False],
    "posenc": ["add", "concat"],
    "queue": [1, 5, 10, 20, 40],
}


def _with(config: TrackerConfig, sweep: str, value) -> TrackerConfig:
    cfg = copy.deepcopy(config)
    if sweep == "interval":
        cfg.sampling_interval = value
    elif sweep == "filter":
        cfg.filter_enabled = bool(value)
    elif sweep == "posenc":
        cfg.posenc = value
    elif sweep == "queue":
        cfg.queue_length = int(value)
    else:
        raise ConfigurationError(f"unknown sweep {sweep!r}; expected one of {sorted(SWEEPS)}")
    return cfg.validate()


def ablation_sweep(config: TrackerConfig, suite, sweep: str = "interval", values=None, workers: int = 1,
                   max_frames: int | None = None) -> list[dict]:
    """One aggregate row per setting of ``sweep`` (interval ``None`` means unbounded, ``0`` first-frame-only)."""
    if sweep not in SWEEPS:
        raise ConfigurationError(f"unknown sweep {sweep!r}; expected one of {sorted(SWEEPS)}")
    values = SWEEPS[sweep] if values is None else list(values)
    rows = []
    for v in values:
        reports = run_suite(_with(config, sweep, v), suite, workers=workers, max_frames=max_frames)
        row = {"sweep": sweep, "value": v}
        row.update(aggregate(reports[k] for k in sorted(reports)))
        rows.append(row)
    return rows


def ablation_interval_sweep(config: TrackerConfig, suite, intervals=None, workers: int = 1,
                            max_frames: int | None = None) -> list[dict]:
    return ablation_sweep(config, suite, "interval", intervals, workers, max_frames)
