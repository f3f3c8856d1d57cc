"""Command-line entry point.

One `run` reproduces a full experiment from a manifest: load config,
rescale, build, simulate, analyze, and write every artifact (manifest
copy, spike file, statistics, rescale report) into a self-describing
output directory.  `sweep` repeats that over a grid of scale factors and
input modes and tabulates values plus relative deviations from the
full-scale row.  `rescale-report`, `stats` and `raster` operate without
simulation.

Worker count comes from --workers or the MICROCIRCUIT_WORKERS variable
and is deliberately not part of the manifest: results are identical for
any worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .build import build, dump_network
from .engine import SpikeRecord, run
from .params import (canonical_config, canonical_path, config_from_dict,
                     config_to_dict, load_config)
from .rescale import apply_transform, as_scale_factor
from .stats import SamplingPlan, report

_MODE_FLAGS = {
    "poisson-balanced": "poisson_balanced",
    "dc-balanced": "dc_balanced",
    "poisson-unbalanced": "poisson_unbalanced",
}
_MODE_NAMES = {v: k for k, v in _MODE_FLAGS.items()}

DC_SILENCE_SCALE = 0.1  # below this, dc input is expected to yield no activity


def _parse_sampling(text: str) -> SamplingPlan:
    """fraction-total:8000 | per-population:1000[:clamp] | all"""
    parts = text.split(":")
    kind = parts[0]
    if kind == "all":
        return SamplingPlan.everything()
    if kind == "fraction-total":
        return SamplingPlan.fraction_total(int(parts[1]))
    if kind == "per-population":
        clamp = len(parts) > 2 and parts[2] == "clamp"
        return SamplingPlan.per_population(int(parts[1]), clamp=clamp)
    raise argparse.ArgumentTypeError(
        f"bad sampling spec {text!r}; use all, fraction-total:N, "
        "or per-population:N[:clamp]")


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get("MICROCIRCUIT_WORKERS", "1"))


def _resolve_manifest(args) -> dict:
    """Fully resolve an experiment before any computation."""
    if getattr(args, "manifest", None):
        with open(args.manifest) as f:
            manifest = json.load(f)
        manifest.setdefault("format", "microcircuit-manifest")
        return manifest
    if args.config:
        config_path = str(args.config)
        config = load_config(config_path)
    else:
        config_path = canonical_path()
        config = canonical_config()
    exp = config.experiment
    duration = args.duration if args.duration is not None else exp.duration_ms
    dt = args.dt if args.dt is not None else exp.dt_ms
    seed = args.seed if args.seed is not None else exp.seed
    transient = args.transient if args.transient is not None else exp.transient_ms
    plan = args.sampling if args.sampling is not None \
        else SamplingPlan.fraction_total(8000)
    return {
        "format": "microcircuit-manifest",
        "schema_version": 1,
        "config_path": config_path,
        "config": config_to_dict(config),
        "scale": str(args.scale),
        "input_mode": _MODE_FLAGS[args.input_mode],
        "duration_ms": float(duration),
        "dt_ms": float(dt),
        "transient_ms": float(transient),
        "seed": int(seed),
        "sampling": plan.to_dict(),
        "sync_window_ms": args.sync_window,
        "spike_format": args.spike_format,
    }


def _versions() -> dict:
    return {
        "microcircuit": __version__,
        "numpy": np.__version__,
        "python": sys.version.split()[0],
    }


def execute_manifest(manifest: dict, outdir: Path, workers: int = 1,
                     dump_path=None, quiet: bool = False) -> dict:
    """Run one experiment and write all artifacts; returns the stats dict."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    config = config_from_dict(manifest["config"])
    config = config.with_mode(manifest["input_mode"]).with_experiment(
        dt_ms=manifest["dt_ms"], duration_ms=manifest["duration_ms"],
        transient_ms=manifest["transient_ms"], seed=manifest["seed"])
    k = as_scale_factor(manifest["scale"])

    def say(msg):
        if not quiet:
            print(msg, flush=True)

    scaled, transform = apply_transform(config, k)
    with open(outdir / "rescale_report.json", "w") as f:
        json.dump(transform.to_dict(), f, indent=2)

    if manifest["input_mode"] == "dc_balanced" and float(k) < DC_SILENCE_SCALE:
        say(f"warning: dc input below {DC_SILENCE_SCALE:.0%} scale is an "
            "expected-silence regime (insufficient input fluctuations)")

    say(f"building network: {transform.total_neurons} neurons, "
        f"{transform.total_synapses} synapses (scale {manifest['scale']})")
    network = build(scaled, transform, seed=manifest["seed"], workers=workers)
    if dump_path:
        dump_network(network, dump_path)
        say(f"wrote network dump to {dump_path}")

    say(f"simulating {manifest['duration_ms']:.0f} ms at dt="
        f"{manifest['dt_ms']} ms (seed {manifest['seed']}, {workers} worker(s))")
    record = run(network, manifest["duration_ms"], seed=manifest["seed"],
                 transient_ms=manifest["transient_ms"], workers=workers)

    spike_format = manifest.get("spike_format", "auto")
    if spike_format == "auto":
        spike_format = "npz" if record.n_events > 2_000_000 else "text"
    if spike_format == "npz":
        spike_path = outdir / "spikes.npz"
        record.write_npz(spike_path)
    else:
        spike_path = outdir / "spikes.txt"
        record.write_text(spike_path)

    plan = SamplingPlan.from_dict(manifest["sampling"])
    stats = report(record, plan, sync_window_ms=manifest.get("sync_window_ms"))
    stats_dict = stats.to_dict()
    with open(outdir / "stats.json", "w") as f:
        json.dump(stats_dict, f, indent=2)
    (outdir / "stats.csv").write_text(stats.to_csv())

    persisted = dict(manifest)
    persisted["versions"] = _versions()
    with open(outdir / "manifest.json", "w") as f:
        json.dump(persisted, f, indent=2)

    say(f"wrote {spike_path.name} ({record.n_events} events) and statistics "
        f"to {outdir}")
    if not quiet:
        print(stats.to_csv(), end="")
    return stats_dict


def cmd_run(args) -> int:
    manifest = _resolve_manifest(args)
    execute_manifest(manifest, Path(args.outdir), workers=_workers(args),
                     dump_path=args.dump_network, quiet=args.quiet)
    return 0


def cmd_sweep(args) -> int:
    scales = [s for s in args.scales.split(",") if s]
    if not scales:
        print("error: empty scale list", file=sys.stderr)
        return 2
    modes = [m for m in args.modes.split(",") if m]
    for m in modes:
        if m not in _MODE_FLAGS:
            print(f"error: unknown input mode {m!r}", file=sys.stderr)
            return 2
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    results = {}
    for mode in modes:
        for scale in scales:
            sub = argparse.Namespace(
                manifest=None, config=args.config, scale=scale,
                input_mode=mode, duration=args.duration, dt=args.dt,
                seed=args.seed, transient=args.transient,
                sampling=args.sampling, sync_window=args.sync_window,
                spike_format="auto", workers=args.workers)
            manifest = _resolve_manifest(sub)
            run_dir = outdir / f"{mode}_scale_{scale.replace('/', '_')}"
            stats = execute_manifest(manifest, run_dir,
                                     workers=_workers(args), quiet=True)
            results[(mode, scale)] = stats
            print(f"done: mode={mode} scale={scale}", flush=True)

    for mode in modes:
        labels = results[(mode, scales[0])]["populations"]
        for stat_key, stem in (("rate_hz", "rates"),
                               ("irregularity_cv_isi", "irregularity"),
                               ("synchrony", "synchrony")):
            path = outdir / f"{stem}_{mode.replace('-', '_')}.csv"
            with open(path, "w", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                header = ["scale"]
                for lab in labels:
                    header += [lab, f"{lab}_rel_dev"]
                header += ["remark"]
                writer.writerow(header)
                base = results.get((mode, "1")) or results.get((mode, "1.0"))
                base_vals = base[stat_key] if base else None
                for scale in scales:
                    vals = results[(mode, scale)][stat_key]
                    row = [scale]
                    for i, v in enumerate(vals):
                        row.append("" if v is None else f"{v:.6g}")
                        dev = ""
                        if (base_vals is not None and v is not None
                                and base_vals[i] not in (None, 0)):
                            dev = f"{abs(v - base_vals[i]) / base_vals[i]:.4f}"
                        row.append(dev)
                    remark = ""
                    if (mode == "dc-balanced"
                            and float(as_scale_factor(scale)) < DC_SILENCE_SCALE):
                        remark = "expected-silence"
                    row.append(remark)
                    writer.writerow(row)
            print(f"wrote {path}")
    return 0


def cmd_rescale_report(args) -> int:
    config = load_config(args.config) if args.config else canonical_config()
    _, transform = apply_transform(config, args.scale)
    text = json.dumps(transform.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _load_record(spike_path: str, manifest_path: str | None) -> SpikeRecord:
    if spike_path.endswith(".npz"):
        return SpikeRecord.read_npz(spike_path)
    if not manifest_path:
        raise SystemExit("error: text spike files need --manifest for metadata")
    with open(manifest_path) as f:
        manifest = json.load(f)
    config = config_from_dict(manifest["config"])
    scaled, _ = apply_transform(config, manifest["scale"])
    sizes = scaled.sizes
    starts = np.concatenate(([0], np.cumsum(sizes)))
    meta = {
        "n_neurons": int(sizes.sum()),
        "labels": list(scaled.labels),
        "pop_slices": [[int(starts[i]), int(starts[i + 1])]
                       for i in range(len(sizes))],
        "duration_ms": manifest["duration_ms"],
        "dt_ms": manifest["dt_ms"],
        "transient_ms": manifest["transient_ms"],
    }
    return SpikeRecord.read_text(spike_path, meta)


def cmd_stats(args) -> int:
    record = _load_record(args.spikes, args.manifest)
    plan = args.sampling or SamplingPlan.fraction_total(8000)
    stats = report(record, plan, sync_window_ms=args.sync_window)
    if args.json_out:
        with open(args.json_out, "w") as f:
            json.dump(stats.to_dict(), f, indent=2)
        print(f"wrote {args.json_out}")
    print(stats.to_csv(), end="")
    return 0


def cmd_raster(args) -> int:
    record = _load_record(args.spikes, args.manifest)
    plan = SamplingPlan.fraction_total(args.count, seed=args.seed or 0)
    sizes = np.array([stop - start for start, stop in record.pop_slices])
    starts = np.array([start for start, _ in record.pop_slices])
    from .stats import resolve_sampling
    ids = np.concatenate(resolve_sampling(plan, sizes, starts, record.labels))
    member = np.zeros(record.n_neurons, dtype=bool)
    member[ids] = True
    keep = member[record.ids]
    sampled = SpikeRecord(
        times_ms=record.times_ms[keep], ids=record.ids[keep],
        n_neurons=record.n_neurons, labels=record.labels,
        pop_slices=record.pop_slices, duration_ms=record.duration_ms,
        dt_ms=record.dt_ms, transient_ms=record.transient_ms)
    sampled.write_text(args.out)
    print(f"wrote {sampled.n_events} events from {ids.size} sampled neurons "
          f"to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microcircuit",
        description="Layered cortical microcircuit simulator with "
                    "statistics-preserving rescaling.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_experiment_flags(p):
        p.add_argument("--config", help="config JSON path (default: shipped "
                                        "full-scale parameter set)")
        p.add_argument("--scale", default="1",
                       help="scale factor k, e.g. 0.1 or 3/10 (default 1)")
        p.add_argument("--duration", type=float, default=None,
                       help="simulated time in ms")
        p.add_argument("--dt", type=float, default=None, help="time step in ms")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for all randomness")
        p.add_argument("--transient", type=float, default=None,
                       help="initial ms excluded from statistics (default 100)")
        p.add_argument("--sampling", type=_parse_sampling, default=None,
                       help="all | fraction-total:N | per-population:N[:clamp]")
        p.add_argument("--sync-window", type=float, default=None,
                       help="synchrony window in ms after the transient "
                            "(default: whole record)")
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads (default: env MICROCIRCUIT_WORKERS "
                            "or 1; does not affect results)")

    p_run = sub.add_parser("run", help="run one experiment end to end")
    add_experiment_flags(p_run)
    p_run.add_argument("--input-mode", choices=sorted(_MODE_FLAGS),
                       default="poisson-balanced")
    p_run.add_argument("--outdir", default="out", help="artifact directory")
    p_run.add_argument("--spike-format", choices=("text", "npz", "auto"),
                       default="auto")
    p_run.add_argument("--dump-network", default=None, metavar="PATH",
                       help="also write a binary adjacency dump")
    p_run.add_argument("--manifest", default=None,
                       help="rerun a saved manifest.json (overrides all "
                            "experiment flags)")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of scales x input modes")
    add_experiment_flags(p_sweep)
    p_sweep.add_argument("--scales", required=True,
                         help="comma-separated scale factors, e.g. 1,0.5,0.1")
    p_sweep.add_argument("--modes", default="poisson-balanced",
                         help="comma-separated input modes")
    p_sweep.add_argument("--outdir", default="sweep", help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)

    p_resc = sub.add_parser("rescale-report",
                            help="emit the full scale transform as JSON")
    p_resc.add_argument("--config", default=None)
    p_resc.add_argument("--scale", required=True)
    p_resc.add_argument("--out", default=None)
    p_resc.set_defaults(func=cmd_rescale_report)

    p_stats = sub.add_parser("stats",
                             help="recompute statistics from a spike file")
    p_stats.add_argument("--spikes", required=True)
    p_stats.add_argument("--manifest", default=None,
                         help="manifest.json of the run (required for .txt)")
    p_stats.add_argument("--sampling", type=_parse_sampling, default=None)
    p_stats.add_argument("--sync-window", type=float, default=None)
    p_stats.add_argument("--json-out", default=None)
    p_stats.set_defaults(func=cmd_stats)

    p_raster = sub.add_parser("raster",
                              help="export a sampled raster as time/id pairs")
    p_raster.add_argument("--spikes", required=True)
    p_raster.add_argument("--manifest", default=None)
    p_raster.add_argument("--count", type=int, default=1862,
                          help="total neurons to sample (default 1862)")
    p_raster.add_argument("--seed", type=int, default=0)
    p_raster.add_argument("--out", required=True)
    p_raster.set_defaults(func=cmd_raster)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
