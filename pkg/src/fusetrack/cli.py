"""Command-line pipeline: generate -> track -> eval, plus gradcheck and bench.

Failures exit nonzero after printing one machine-parsable line to stderr::

    error kind=FormatError file=meas.jsonl line=7 message="..."
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import config, formats
from .bench import run_bench
from .fusion import FusionMode, TrackConfig, UnknownTrackError, run_scenario, merge_streams
from .losses import gradcheck
from .metrics import evaluate
from .synth import ScenarioSpec, build_scenario


def render_kv(d: dict) -> str:
    lines = []
    for k, v in d.items():
        if v is None:
            v = "absent"
        elif isinstance(v, float):
            v = formats.fmt_float(v)
        elif isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k}={v}\n")
    return "".join(lines)


def cmd_generate(spec_path, out_dir, seed: int | None = None) -> ScenarioSpec:
    spec = config.load(ScenarioSpec, spec_path)
    if seed is not None:
        spec = replace(spec, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = build_scenario(spec)
    formats.write_records(out / "gt.jsonl", formats.GT, formats.gt_lines(sc.tracks))
    formats.write_records(
        out / "measurements.jsonl", formats.MEASUREMENT,
        (formats.measurement_line(m) for m in merge_streams(sc.streams)),
    )
    formats.write_atomic(out / "spec.echo", config.dump_kv(spec).splitlines())
    return spec


def queries_from_gt(gt_path, cfg: config.RunConfig) -> dict[int, TrackConfig]:
    return {
        tr.track_id: TrackConfig(
            (float(tr.pos[0, 0]), float(tr.pos[0, 1])), float(tr.t[0]),
            cfg.track.init_pos_var, cfg.track.init_vel_var, cfg.ooo,
        )
        for tr in formats.read_gt(gt_path)
    }


def cmd_track(config_path, measurements_path, out_path, mode=None, queries_path=None) -> dict:
    cfg = config.load_run_config(config_path)
    if mode is not None:
        cfg = replace(cfg, mode=FusionMode(mode))
    if queries_path is None:
        queries_path = Path(measurements_path).with_name("gt.jsonl")
    configs = queries_from_gt(queries_path, cfg)
    records = formats.read_measurements(measurements_path)
    for idx, m in enumerate(records):
        if m.track_id not in configs:
            raise UnknownTrackError(f"record {idx}: unknown track_id {m.track_id}")
    outputs = run_scenario([records], configs, cfg.mode, cfg.process, cfg.noise.as_mapping())
    lines = (formats.prediction_line(tid, o) for tid in sorted(outputs) for o in outputs[tid])
    formats.write_records(out_path, formats.PREDICTION, lines)
    n_out = sum(len(v) for v in outputs.values())
    return {"mode": cfg.mode.value, "tracks": len(outputs), "measurements": len(records),
            "outputs": n_out}


def cmd_eval(pred_path, gt_path, out_dir, eval_config_path=None):
    cfg = config.load_eval_config(eval_config_path)
    report = evaluate(formats.read_predictions(pred_path), formats.read_gt(gt_path), cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_atomic(out / "report.txt", render_kv(report.as_dict()).splitlines())

    def cell(v):
        return "" if v is None else formats.fmt_float(v)

    rows = ["track_id,fa,delta_vis,delta_occ,delta_all"]
    rows += [f"{r.track_id},{cell(r.fa)},{cell(r.delta_vis)},{cell(r.delta_occ)},{cell(r.delta_all)}"
             for r in report.tracks]
    formats.write_atomic(out / "per_track.csv", rows)
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fusetrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize ground truth and measurements")
    g.add_argument("spec", nargs="?", help="scenario spec (key=value); defaults if omitted")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, help="override the spec seed")

    t = sub.add_parser("track", help="run the fusion engine over a measurements file")
    t.add_argument("measurements")
    t.add_argument("--out", required=True, help="predictions file to write")
    t.add_argument("--config", help="run config (key=value)")
    t.add_argument("--mode", choices=[m.value for m in FusionMode])
    t.add_argument("--queries", help="gt file whose first sample per track is the query point "
                                     "(default: gt.jsonl next to the measurements)")

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--out", required=True, help="directory for report.txt and per_track.csv")
    e.add_argument("--config", help="eval config (key=value)")

    c = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    c.add_argument("--cases", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="single-thread Kalman step timing")
    b.add_argument("--iterations", type=int, default=1_000_000)
    return p


def _error_line(exc: BaseException) -> str:
    parts = [f"kind={type(exc).__name__}"]
    path = getattr(exc, "path", None) or getattr(exc, "filename", None)
    if path is not None:
        parts.append(f"file={path}")
    if getattr(exc, "line", None):
        parts.append(f"line={exc.line}")
    msg = getattr(exc, "msg", None) or getattr(exc, "strerror", None) or str(exc)
    parts.append(f"message={json.dumps(str(msg))}")
    return "error " + " ".join(parts)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            spec = cmd_generate(args.spec, args.out, args.seed)
            summary = {"seed": spec.seed, "n_tracks": spec.n_tracks, "out": args.out}
        elif args.command == "track":
            summary = cmd_track(args.config, args.measurements, args.out, args.mode, args.queries)
        elif args.command == "eval":
            summary = cmd_eval(args.pred, args.gt, args.out, args.config).as_dict()
        elif args.command == "gradcheck":
            summary = gradcheck(args.cases, args.seed).as_dict()
        else:
            summary = run_bench(args.iterations)
    except (OSError, ValueError, KeyError, ArithmeticError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    sys.stdout.write(render_kv(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
