"""Command-line entry point.

Subcommands: simulate, serve, replay, calibrate, estimate, pipeline,
report. Data goes to files and stdout; diagnostics go to stderr; the exit
status is 0 iff no error. Given identical inputs and seed, every command
writes byte-identical data files (the run manifest also records wallclock
timestamps, which are metadata, not data).
"""

import argparse
import asyncio
import csv
import dataclasses
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__
from .calibration import Checkpoint, FitReport, evaluate, load_checkpoint, save_checkpoint
from .errors import AirtraqError, ConfigError, EmptyInputError
from .estimator import read_estimates_csv, write_estimates_csv
from .gateway import GatewayStore, replay_log, serve_gateway
from .pipeline import (
    AppConfig,
    compute_baselines,
    estimate_minutes,
    hourly_summary,
    load_config,
    prepare_node_series,
    run_pipeline,
    train_weights,
)
from .simulator import default_scenario, read_truth_csv, run_scenario, write_truth_csv
from .types import SPECIES
from .wire import read_log, write_log

__all__ = ["main"]


def _status(msg: str) -> None:
    print(msg, file=sys.stderr)


def _append_manifest(out_dir: Path, stage: str, **fields) -> None:
    """Manifest is append-only metadata; timestamps here are wallclock."""
    manifest_path = out_dir / "manifest.json"
    entries = []
    if manifest_path.exists():
        entries = json.loads(manifest_path.read_text(encoding="utf-8"))
    entries.append({
        "stage": stage,
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        **fields,
    })
    manifest_path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")


def _load_app_config(path: Optional[str]) -> AppConfig:
    if path is None:
        return AppConfig(scenario=default_scenario())
    return load_config(path)


def _write_records_csv(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["node_id", "seq", "ts", "co", "so2", "hc", "soot",
                         "temp", "rh", "wind"])
        for r in records:
            writer.writerow([r.node_id, r.seq, r.ts,
                             repr(r.gases.co), repr(r.gases.so2),
                             repr(r.gases.hc), repr(r.gases.soot),
                             repr(r.env.temperature), repr(r.env.relative_humidity),
                             repr(r.env.wind_speed)])


def _format_fit_report(report: FitReport) -> str:
    return "\n".join([
        f"{'n':>10} : {report.n}",
        f"{'MAE':>10} : {report.mae:.4f} veh/min",
        f"{'RMSE':>10} : {report.rmse:.4f} veh/min",
        f"{'Pearson r':>10} : {report.pearson_r:.4f}",
    ])


def _write_fit_report_csv(path: Path, report: FitReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["mae", "rmse", "pearson_r", "n"])
        writer.writerow([repr(report.mae), repr(report.rmse),
                         repr(report.pearson_r), report.n])


def cmd_simulate(args) -> int:
    cfg = _load_app_config(args.config)
    scenario = cfg.scenario
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, rng_seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    records, truth = run_scenario(scenario)

    records_log = out / "records.log"
    records_csv = out / "records.csv"
    truth_csv = out / "truth.csv"
    write_log(records_log, records)
    _write_records_csv(records_csv, records)
    write_truth_csv(truth_csv, truth)
    _append_manifest(out, "simulate",
                     scenario=args.config or "<default>",
                     seed=scenario.rng_seed,
                     outputs={"records_log": str(records_log),
                              "records_csv": str(records_csv),
                              "truth_csv": str(truth_csv)})
    _status(f"simulated {len(truth)} minutes x {len(scenario.sensors)} nodes "
            f"({len(records)} records) in {time.perf_counter() - t0:.1f}s -> {out}")
    return 0


def _parse_listen(listen: str):
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"--listen must be host:port, got {listen!r}")
    return host, int(port)


def cmd_serve(args) -> int:
    host, port = _parse_listen(args.listen)

    async def _run():
        with GatewayStore(args.log) as store:
            server = await serve_gateway(store, host=host, port=port)
            _status(f"gateway listening on {host}:{port}, log {args.log}")
            async with server:
                await server.serve_forever()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        _status("gateway stopped")
    return 0


def cmd_replay(args) -> int:
    host, port = _parse_listen(args.listen)
    counts = replay_log(args.log, host, port)
    print(f"accepted={counts['ACCEPTED']} duplicate={counts['DUPLICATE']} "
          f"rejected={counts['REJECTED']}")
    return 0


def _capacity_for(args, cfg: AppConfig) -> float:
    if args.capacity is not None:
        return args.capacity
    return cfg.scenario.capacity_veh_per_min


def cmd_pipeline(args) -> int:
    cfg = _load_app_config(args.config)
    records = read_log(args.records)
    truth = read_truth_csv(args.truth)

    result = run_pipeline(records, truth, split=args.split, qc=cfg.qc,
                          env_params=cfg.env_params,
                          capacity=_capacity_for(args, cfg),
                          lam=args.lam, delta=args.delta)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    estimates_csv = out / "estimates.csv"
    with open(estimates_csv, "w", encoding="utf-8", newline="") as fp:
        write_estimates_csv(result.estimates, fp)
    ckpt_path = out / "weights.ckpt"
    save_checkpoint(ckpt_path, result.checkpoint)
    report_csv = out / "fit_report.csv"
    _write_fit_report_csv(report_csv, result.report)
    _append_manifest(out, "pipeline",
                     records=args.records, truth=args.truth, split=args.split,
                     outputs={"estimates_csv": str(estimates_csv),
                              "checkpoint": str(ckpt_path),
                              "fit_report_csv": str(report_csv)})

    _status(f"calibrated on {result.train_minutes} minutes, estimated "
            f"{result.holdout_minutes} ({result.n_rejected} records rejected by QC) "
            f"in {result.elapsed_s:.1f}s")
    print(_format_fit_report(result.report))
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_app_config(args.config)
    records = read_log(args.records)
    truth = read_truth_csv(args.truth)
    truth_by_minute = {g.minute: g.vehicles_per_min for g in truth}

    by_node, n_rejected = prepare_node_series(records, cfg.qc)
    if not by_node:
        raise EmptyInputError("no samples survived QC")
    baselines = compute_baselines(by_node)
    state = train_weights(by_node, truth_by_minute, sorted(truth_by_minute),
                          baselines, cfg.env_params, lam=args.lam, delta=args.delta)

    capacity = _capacity_for(args, cfg)
    checkpoint = Checkpoint(state=state, baselines=baselines,
                            env_params=cfg.env_params,
                            capacity_veh_per_min=capacity)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "weights.ckpt"
    save_checkpoint(ckpt_path, checkpoint)

    estimates = estimate_minutes(by_node, sorted(truth_by_minute),
                                 state.weight_vector(), baselines,
                                 cfg.env_params, capacity)
    report = evaluate({e.minute: e.vehicles_per_min for e in estimates},
                      truth_by_minute)
    _write_fit_report_csv(out / "fit_report.csv", report)
    _append_manifest(out, "calibrate", records=args.records, truth=args.truth,
                     outputs={"checkpoint": str(ckpt_path)})
    _status(f"{state.n_updates} updates, {n_rejected} records rejected by QC; "
            "in-sample fit:")
    print(_format_fit_report(report))
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_app_config(args.config)
    records = read_log(args.records)
    ckpt = load_checkpoint(args.checkpoint)

    by_node, n_rejected = prepare_node_series(records, cfg.qc)
    if not by_node:
        raise EmptyInputError("no samples survived QC")
    baselines = dict(ckpt.baselines)
    missing = [n for n in by_node if n not in baselines]
    if missing:
        _status(f"checkpoint has no baseline for {missing}; deriving from records")
        baselines.update(compute_baselines({n: by_node[n] for n in missing}))

    minutes = sorted({s.minute for series in by_node.values() for s in series})
    estimates = estimate_minutes(by_node, minutes, ckpt.state.weight_vector(),
                                 baselines, ckpt.env_params,
                                 ckpt.capacity_veh_per_min)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    estimates_csv = out / "estimates.csv"
    with open(estimates_csv, "w", encoding="utf-8", newline="") as fp:
        write_estimates_csv(estimates, fp)
    _append_manifest(out, "estimate", records=args.records,
                     checkpoint=args.checkpoint,
                     outputs={"estimates_csv": str(estimates_csv)})
    _status(f"estimated {len(estimates)} minutes "
            f"({n_rejected} records rejected by QC) -> {estimates_csv}")
    return 0


def cmd_report(args) -> int:
    with open(args.estimates, "r", encoding="utf-8", newline="") as fp:
        estimates = read_estimates_csv(fp)
    summary = hourly_summary(estimates)

    print(f"{'hour':>4}  {'mean veh/min':>12}")
    for hour, mean in summary["hourly_means"].items():
        print(f"{hour:>4}  {mean:>12.3f}")
    print(f"minimum-traffic hour: {summary['min_hour']:02d}:00")
    print(f"maximum-traffic hour: {summary['max_hour']:02d}:00")
    print("mean gas contributions (veh/min): "
          + ", ".join(f"{g.value}={summary['mean_contributions'][g]:.3f}"
                      for g in SPECIES))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        hourly_csv = out / "hourly.csv"
        with open(hourly_csv, "w", encoding="utf-8", newline="") as fp:
            writer = csv.writer(fp, lineterminator="\n")
            writer.writerow(["hour", "mean_vehicles_per_min"]
                            + [f"mean_contrib_{g.value}" for g in SPECIES])
            contribs = _hourly_contributions(estimates)
            for hour, mean in summary["hourly_means"].items():
                writer.writerow([hour, repr(mean)]
                                + [repr(contribs[hour][g]) for g in SPECIES])
        _append_manifest(out, "report", estimates=args.estimates,
                         outputs={"hourly_csv": str(hourly_csv)})
        _status(f"wrote {hourly_csv}")
    return 0


def _hourly_contributions(estimates):
    sums = {}
    counts = {}
    for est in estimates:
        hour = (est.minute % 1440) // 60
        bucket = sums.setdefault(hour, dict.fromkeys(SPECIES, 0.0))
        counts[hour] = counts.get(hour, 0) + 1
        for g in SPECIES:
            bucket[g] += float(est.contributions.get(g, 0.0))
    return {h: {g: bucket[g] / counts[h] for g in SPECIES}
            for h, bucket in sums.items()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airtraq",
        description="Traffic congestion estimation from roadside pollutant-gas "
                    "sensor arrays: simulate scenarios, collect records, "
                    "calibrate gas weights online, estimate and report.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--config", help="scenario YAML (defaults built in)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario RNG seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the ingestion gateway")
    p.add_argument("--listen", default="127.0.0.1:9099", help="host:port")
    p.add_argument("--log", required=True, help="append-only record log path")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="stream a record log to a gateway")
    p.add_argument("--log", required=True, help="wire-format log to replay")
    p.add_argument("--listen", default="127.0.0.1:9099", help="gateway host:port")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("pipeline",
                       help="calibrate on a time prefix, estimate the rest, score")
    p.add_argument("--records", required=True, help="wire-format record log")
    p.add_argument("--truth", required=True, help="ground-truth CSV")
    p.add_argument("--split", type=float, default=0.5,
                   help="training fraction of minutes (0, 1)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="pipeline/QC/estimator YAML")
    p.add_argument("--capacity", type=float, help="street capacity, veh/min")
    p.add_argument("--lambda", dest="lam", type=float, default=0.99,
                   help="RLS forgetting factor")
    p.add_argument("--delta", type=float, default=100.0,
                   help="initial covariance scale")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("calibrate", help="train weights on all overlapping minutes")
    p.add_argument("--records", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--capacity", type=float)
    p.add_argument("--lambda", dest="lam", type=float, default=0.99)
    p.add_argument("--delta", type=float, default=100.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("estimate", help="apply a frozen checkpoint to records")
    p.add_argument("--records", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", help="hourly summary of an estimates CSV")
    p.add_argument("--estimates", required=True)
    p.add_argument("--out", help="directory for the plot-ready CSV")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AirtraqError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FILE_NOT_FOUND: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
