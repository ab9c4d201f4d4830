"""R² scoring, the (family, s, h) experiment grid with best-of-n selection,
mean/std aggregation and CSV exports."""

from __future__ import annotations

import csv
import json
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataio import DEFAULT_FRACTIONS, WindowedDataset, prepare
from .metrics import r2_score
from .models import DEFAULT_GRU_WIDTH, FAMILIES, ModelSpec
from .plate_sim import TimeSeries
from .trainer import Checkpoint, RunRecord, TrainConfig, train_one

__all__ = [
    "GRID_HEADER", "GridResult", "aggregate_stats", "default_grid", "export_scatter",
    "format_table", "grid_cells", "r2_score", "read_grid_csv", "run_grid", "select_best",
    "write_curves", "write_grid_csv",
]

GRID_HEADER = ("family", "s", "h", "run", "seed", "train_r2", "test_r2", "best_flag")
NS = "NS"
STD_CONVENTION = "population (divisor n)"


def default_grid() -> dict:
    return dict(families=list(FAMILIES), s_values=[10, 50, 100, 200], h_values=[1, 2, 4, 6])


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class GridResult:
    family: str
    s: int
    h: int
    runs: list

    @property
    def key(self) -> tuple:
        return (self.family, self.s, self.h)

    @property
    def ok_runs(self) -> list:
        return [r for r in self.runs if r.ok]

    @property
    def ns(self) -> bool:
        """Not scored: every run failed."""
        return not self.ok_runs

    @property
    def best_run(self) -> int | None:
        return select_best(self.runs)

    @property
    def best(self) -> RunRecord | None:
        i = self.best_run
        return None if i is None else self.runs[i]

    def stats(self, split: str = "test") -> tuple[float, float, int]:
        """``(mu, sigma, n)`` of R² over the successful runs (population std)."""
        vals = np.array([getattr(r, f"{split}_r2") for r in self.ok_runs])
        if vals.size == 0:
            return math.nan, math.nan, 0
        return float(vals.mean()), float(vals.std()), int(vals.size)


def select_best(runs) -> int | None:
    """Index of the successful run with the highest training R², ties to the lowest seed."""
    ok = [(i, r) for i, r in enumerate(runs) if r.ok]
    if not ok:
        return None
    return min(ok, key=lambda ir: (-ir[1].train_r2, ir[1].seed))[0]


def grid_cells(families, s_values, h_values) -> list[tuple[str, int, int]]:
    """Cells in deterministic (family, s, h) order; LR only takes h = 0."""
    families = [f.upper() for f in families]
    s_values, h_values = list(s_values), list(h_values)
    if not families or not s_values:
        raise ValueError("grid needs at least one family and one window length")
    bad = [f for f in families if f not in FAMILIES]
    if bad:
        raise ValueError(f"unknown families {bad}")
    if any(f != "LR" for f in families) and not h_values:
        raise ValueError("h_values is empty")
    cells = []
    for fam in families:
        for s in sorted(set(s_values)):
            for h in ([0] if fam == "LR" else sorted(set(h_values))):
                cells.append((fam, int(s), int(h)))
    return cells


# ---------------------------------------------------------------------------
# Grid execution
# ---------------------------------------------------------------------------

_WORKER = {}


def _init_worker(series: TimeSeries, prep: dict) -> None:
    _WORKER.clear()
    _WORKER.update(series=series, prep=prep, cache={})


def _dataset(s: int) -> WindowedDataset:
    cache = _WORKER["cache"]
    if s not in cache:
        cache.clear()  # jobs arrive grouped by s; keep one window set alive
        cache[s] = prepare(_WORKER["series"], s, **_WORKER["prep"])
    return cache[s]


def _job(spec: ModelSpec, cfg: TrainConfig, run: int) -> RunRecord:
    t_cpu, t_wall = time.process_time(), time.perf_counter()
    try:
        ds = _dataset(spec.s)
    except ValueError as exc:
        rec = RunRecord(run=run, seed=cfg.seed + run, error=f"dataset: {exc}")
    else:
        rec = train_one(spec, ds, cfg, run)
    rec.cpu_seconds = time.process_time() - t_cpu
    rec.wall_seconds = time.perf_counter() - t_wall
    return rec


def run_grid(series: TimeSeries, families, s_values, h_values, n_runs: int = 3,
             train_cfg: TrainConfig = TrainConfig(), fractions=DEFAULT_FRACTIONS,
             split_rule: str = "floor", standardize: bool = True, trim: bool = True,
             gru_width: int = DEFAULT_GRU_WIDTH, family_overrides: dict | None = None,
             jobs: int = 1, progress=None) -> list[GridResult]:
    """Train ``n_runs`` seeded repeats of every grid cell.

    Windows are rebuilt per ``s`` from the same series. ``family_overrides``
    maps a family to ``TrainConfig`` fields replacing those of ``train_cfg``
    for that family. Runs are independent jobs; with ``jobs > 1`` they execute
    in a process pool and are merged back by (family, s, h, run), so output
    never depends on completion order. Failed runs carry their error and a
    cell whose runs all failed is reported NS.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    cells = grid_cells(families, s_values, h_values)
    overrides = {k.upper(): dict(v) for k, v in (family_overrides or {}).items()}
    prep = dict(fractions=fractions, rule=split_rule, standardize=standardize, trim=trim)
    jobs_list = []
    for fam, s, h in cells:
        widths = (gru_width,) * h if fam == "GRU" else ()
        spec = ModelSpec(fam, s, h, widths)
        cfg = replace(train_cfg, **overrides.get(fam, {}))
        for run in range(n_runs):
            jobs_list.append(((fam, s, h, run), spec, cfg))
    # group by s so each worker rebuilds windows rarely
    jobs_list.sort(key=lambda j: (j[1].s, j[0]))
    done = {}
    if jobs <= 1:
        _init_worker(series, prep)
        for key, spec, cfg in jobs_list:
            done[key] = _job(spec, cfg, key[3])
            if progress:
                progress(key, done[key])
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(series, prep)) as pool:
            futures = {key: pool.submit(_job, spec, cfg, key[3]) for key, spec, cfg in jobs_list}
            for key, fut in futures.items():
                done[key] = fut.result()
                if progress:
                    progress(key, done[key])
    return [GridResult(fam, s, h, [done[(fam, s, h, r)] for r in range(n_runs)])
            for fam, s, h in cells]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def write_grid_csv(results, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for res in results:
            best = res.best_run
            for i, r in enumerate(res.runs):
                tr, te = (_fmt(r.train_r2), _fmt(r.test_r2)) if r.ok else (NS, NS)
                w.writerow([res.family, res.s, res.h, r.run, r.seed, tr, te, int(i == best)])


def read_grid_csv(path) -> list[GridResult]:
    """Rebuild checkpoint-free :class:`GridResult` objects from ``grid_results.csv``."""
    cells = defaultdict(list)
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != GRID_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            key = (row["family"], int(row["s"]), int(row["h"]))
            ns = row["train_r2"] == NS
            cells[key].append(RunRecord(
                run=int(row["run"]), seed=int(row["seed"]),
                train_r2=math.nan if ns else float(row["train_r2"]),
                test_r2=math.nan if ns else float(row["test_r2"]),
                error="NS" if ns else None))
    return [GridResult(*key, runs) for key, runs in cells.items()]


def aggregate_stats(results) -> list[dict]:
    """Per-cell mean and population std of R² over runs, for both splits."""
    rows = []
    for res in results:
        for split in ("train", "test"):
            mu, sigma, n = res.stats(split)
            rows.append(dict(family=res.family, s=res.s, h=res.h, split=split, n_runs=n,
                             mu=mu, sigma=sigma, lower=mu - sigma, upper=mu + sigma,
                             single_run=int(n == 1)))
    return rows


CURVE_FIELDS = ("split", "n_runs", "mu", "sigma", "lower", "upper", "single_run")


def write_curves(results, out_dir) -> tuple[Path, Path]:
    """``curves_vs_s.csv`` (rows grouped by family, h) and ``curves_vs_h.csv``
    (grouped by family, s), plus ``curves_meta.json`` naming the std convention."""
    out_dir = Path(out_dir)
    rows = aggregate_stats(results)
    order = {f: i for i, f in enumerate(FAMILIES)}
    paths = []
    for name, fixed, axis in (("curves_vs_s.csv", "h", "s"), ("curves_vs_h.csv", "s", "h")):
        path = out_dir / name
        ranked = sorted(rows, key=lambda r: (order[r["family"]], r[fixed], r["split"], r[axis]))
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("family", fixed, axis) + CURVE_FIELDS)
            for r in ranked:
                w.writerow([r["family"], r[fixed], r[axis], r["split"], r["n_runs"]]
                           + [_fmt(r[k]) for k in ("mu", "sigma", "lower", "upper")]
                           + [r["single_run"]])
        paths.append(path)
    (out_dir / "curves_meta.json").write_text(json.dumps(
        {"std": STD_CONVENTION, "metric": "R2 on de-normalized outputs",
         "single_run": "sigma is 0 when only one run succeeded"}, indent=2) + "\n")
    return paths[0], paths[1]


def export_scatter(ckpt: Checkpoint, ds: WindowedDataset, split: str, out_dir) -> Path:
    """Write ``scatter_<family>_<s>_<h>_<split>.csv`` with columns ``y_ref,y_pred``
    in signal units, and a sibling ``.json`` with the identity-line endpoints."""
    spec = ckpt.spec
    if spec.s != ds.s:
        raise ValueError(f"checkpoint expects s={spec.s}, dataset has s={ds.s}")
    X, y = ds.split_arrays(split)
    pred = ckpt.model.predict(X)
    stats = ds.norm_stats
    if stats is not None:
        y, pred = stats.denormalize_y(y), stats.denormalize_y(pred)
    out_dir = Path(out_dir)
    path = out_dir / f"scatter_{spec.family}_{spec.s}_{spec.h}_{split}.csv"
    np.savetxt(path, np.column_stack([y, pred]), fmt="%.17g", delimiter=",",
               header="y_ref,y_pred", comments="")
    lo = float(min(y.min(), pred.min()))
    hi = float(max(y.max(), pred.max()))
    meta = dict(family=spec.family, s=spec.s, h=spec.h, split=split, rows=int(len(y)),
                identity_line=[[lo, lo], [hi, hi]],
                r2=r2_score(y, pred) if len(y) > 1 and np.ptp(y) > 0 else None)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def format_table(results) -> str:
    """Best-run ``train / test`` R² per family, rows s, columns h."""
    lines = []
    by_fam = defaultdict(dict)
    for res in results:
        by_fam[res.family][(res.s, res.h)] = res
    for fam in [f for f in FAMILIES if f in by_fam]:
        cells = by_fam[fam]
        hs = sorted({h for _, h in cells})
        ss = sorted({s for s, _ in cells})
        lines.append(f"{fam}  (best of runs by training R2; entries train / test)")
        lines.append("  s \\ h " + "".join(f"{h:>18d}" for h in hs))
        for s in ss:
            row = f"  {s:>6d}"
            for h in hs:
                res = cells.get((s, h))
                if res is None:
                    row += f"{'':>18}"
                elif res.ns:
                    row += f"{'NS / NS':>18}"
                else:
                    b = res.best
                    row += f"{b.train_r2:>8.3f} / {b.test_r2:<7.3f}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines)
