"""Command-line pipeline: simulate, train, grid, scatter, report.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .dataio import apply_norm, chronological_split, load_csv, make_windows, prepare, save_csv, trim_prefix
from .evaluator import export_scatter, format_table, read_grid_csv, run_grid, write_curves, write_grid_csv
from .models import FAMILIES, ModelSpec
from .nn_core import DivergenceError
from .plate_sim import SimulationError, assemble_modal_system, synthesize
from .trainer import Checkpoint, score, train, write_trace

log = logging.getLogger("plate_surrogates")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, command: str, artifacts, extra: dict | None = None) -> Path:
    """``manifest_<command>.json``: resolved config, seeds, artifact hashes (no timestamps)."""
    doc = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": {"excitation": cfg.excitation.seed, "train": cfg.train.seed,
                  "runs": [cfg.train.seed + i for i in range(int(cfg.grid["n_runs"]))]},
        "artifacts": {Path(p).name: sha256(p) for p in sorted(artifacts, key=lambda p: Path(p).name)},
    }
    if extra:
        doc.update(extra)
    path = cfg.out / f"manifest_{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _load_series(cfg: RunConfig):
    path = cfg.dataset_path
    if not path.exists():
        raise UsageError(f"dataset not found: {path} (run 'simulate' or set data.dataset)")
    return load_csv(path)


def _prepare(cfg: RunConfig, series, s: int):
    d = cfg.data
    return prepare(series, s, d["fractions"], d["split_rule"], d["standardize"], d["trim"], d["threshold"])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    system = assemble_modal_system(cfg.plate)
    series = synthesize(cfg.plate, cfg.excitation, system)
    path = cfg.dataset_path
    path.parent.mkdir(parents=True, exist_ok=True)
    save_csv(series, path)
    meta = dict(series.meta, samples=len(series), frequencies_hz=system.frequencies_hz.tolist())
    write_manifest(cfg, "simulate", [path], {"simulation": meta})
    print(f"wrote {path}: {len(series)} samples, {system.num_modes} modes "
          f"({system.num_rigid} rigid), f1 = {system.frequencies_hz[system.num_rigid]:.2f} Hz")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    family = args.family.upper()
    h = 0 if family == "LR" else args.h
    try:
        widths = (cfg.grid["gru_width"],) * h if family == "GRU" else ()
        spec = ModelSpec(family, args.s, h, widths)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    series = _load_series(cfg)
    ds = _prepare(cfg, series, spec.s)
    tcfg = replace(cfg.train, **cfg.grid["family_overrides"].get(family, {}))
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ckpt = train(spec, ds, tcfg)
    elapsed = time.perf_counter() - t0
    stem = f"{spec.label}_seed{tcfg.seed}"
    ckpt_path = cfg.out / f"checkpoint_{stem}.json"
    trace_path = cfg.out / f"trace_{stem}.csv"
    ckpt.save(ckpt_path)
    write_trace(ckpt.trace, trace_path)
    scatter = export_scatter(ckpt, ds, "test", cfg.out)
    tr2, te2 = score(ckpt, ds, "train"), score(ckpt, ds, "test")
    write_manifest(replace(cfg, train=tcfg), f"train_{stem}", [ckpt_path, trace_path, scatter],
                   {"model": spec.to_dict(), "r2": {"train": tr2, "test": te2}})
    print(f"{spec.label} seed {tcfg.seed}: best epoch {ckpt.best_epoch} ({ckpt.stop_reason}), "
          f"train R2 {tr2:.4f}, test R2 {te2:.4f}, {elapsed:.1f} s")
    return EXIT_OK


def cmd_grid(cfg: RunConfig, args) -> int:
    series = _load_series(cfg)
    g, d = cfg.grid, cfg.data
    cfg.out.mkdir(parents=True, exist_ok=True)

    def progress(key, rec):
        state = f"train {rec.train_r2:.4f} test {rec.test_r2:.4f}" if rec.ok else rec.error
        log.info("%s s=%d h=%d run %d: %s (%.1f s)", *key, state, rec.wall_seconds)

    t0 = time.perf_counter()
    results = run_grid(series, g["families"], g["s_values"], g["h_values"], int(g["n_runs"]),
                       cfg.train, d["fractions"], d["split_rule"], d["standardize"], d["trim"],
                       int(g["gru_width"]), g["family_overrides"], jobs=args.jobs, progress=progress)
    elapsed = time.perf_counter() - t0
    grid_csv = cfg.out / "grid_results.csv"
    write_grid_csv(results, grid_csv)
    curves = write_curves(results, cfg.out)
    ckpt_dir = cfg.out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    artifacts = [grid_csv, *curves]
    for res in results:
        if not res.ns:
            p = ckpt_dir / f"checkpoint_{res.family}_{res.s}_{res.h}.json"
            res.best.checkpoint.save(p)
            artifacts.append(p)
    timing = cfg.out / "grid_timing.csv"
    with timing.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("family", "s", "h", "run", "cpu_seconds", "wall_seconds"))
        for res in results:
            for r in res.runs:
                w.writerow([res.family, res.s, res.h, r.run, f"{r.cpu_seconds:.3f}", f"{r.wall_seconds:.3f}"])
    write_manifest(cfg, "grid", artifacts, {"jobs": args.jobs})
    print(format_table(results))
    n_ns = sum(res.ns for res in results)
    print(f"{len(results)} cells, {n_ns} NS, {elapsed:.1f} s wall with {args.jobs} job(s)")
    return EXIT_RUNTIME if n_ns == len(results) else EXIT_OK


def cmd_scatter(cfg: RunConfig, args) -> int:
    path = Path(args.checkpoint)
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    try:
        ckpt = Checkpoint.load(path)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{path}: {exc}") from exc
    series = _load_series(cfg)
    d = cfg.data
    if d["trim"]:
        series = trim_prefix(series, d["threshold"])
    ds = chronological_split(make_windows(series, ckpt.spec.s), d["fractions"], d["split_rule"])
    if ckpt.norm_stats is not None:
        ds = apply_norm(ds, ckpt.norm_stats)
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = export_scatter(ckpt, ds, args.split, cfg.out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    grid_csv = cfg.out / "grid_results.csv"
    if not grid_csv.exists():
        raise UsageError(f"no grid results at {grid_csv}; run 'grid' first")
    results = read_grid_csv(grid_csv)
    write_curves(results, cfg.out)
    print(format_table(results))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "grid": cmd_grid,
            "scatter": cmd_scatter, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", "-c", help="JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. train.max_epochs=50 (repeatable)")
    common.add_argument("--output-dir", "-o", help="shortcut for --set output_dir=...")
    common.add_argument("--verbose", "-v", action="count", default=0)

    parser = _Parser(prog="plate-surrogates", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="synthesize dataset.csv from the plate model")
    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--family", required=True, type=str.upper, choices=FAMILIES)
    p.add_argument("--s", type=int, required=True, help="window length")
    p.add_argument("--h", type=int, default=0, help="hidden layers (ignored for LR)")
    p.add_argument("--seed", type=int, help="overrides train.seed")
    p = sub.add_parser("grid", parents=[common], help="run the (family, s, h) grid")
    p.add_argument("--jobs", "-j", type=int, default=1, help="parallel worker processes")
    p = sub.add_parser("scatter", parents=[common], help="export y_ref,y_pred for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    sub.add_parser("report", parents=[common], help="table and curves from grid_results.csv")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.overrides)
        if args.output_dir:
            overrides.append(f"output_dir={json.dumps(args.output_dir)}")
        cfg = load_config(args.config, overrides)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, DivergenceError, ValueError, OSError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
