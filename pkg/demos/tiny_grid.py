"""A two-window grid with best-of-3 selection, written to ./demo_grid.

Same code path as ``plate-surrogates grid``, kept small enough to finish in
about half a minute.

    python3 demos/tiny_grid.py
"""

from pathlib import Path

from plate_surrogates import Excitation, PlateConfig, TrainConfig, run_grid, synthesize
from plate_surrogates.evaluator import format_table, write_curves, write_grid_csv

out = Path("demo_grid")
out.mkdir(exist_ok=True)
series = synthesize(PlateConfig(alpha=200.0, dt=1 / 3000),
                    Excitation(duration_s=20.0, amplitude_decades=2.0, nonlinearity="saturation"))
results = run_grid(series, ["LR", "MLP"], [10, 50], [1, 2], n_runs=3,
                   train_cfg=TrainConfig(max_epochs=30, patience=5))
write_grid_csv(results, out / "grid_results.csv")
write_curves(results, out)
print(format_table(results))
for res in results:
    mu, sigma, n = res.stats("test")
    print(f"{res.family} s={res.s} h={res.h}: best run {res.best_run}, test mean {mu:.3f} +/- {sigma:.3f} over {n}")
