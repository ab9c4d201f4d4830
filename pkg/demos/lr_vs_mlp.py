"""Train a linear model and an ELU network on the same simulated record.

A 20 s record is enough to see the gap the saturation opens between the two
families at window length 100.

    python3 demos/lr_vs_mlp.py
"""

from plate_surrogates import Excitation, ModelSpec, PlateConfig, TrainConfig, prepare, synthesize
from plate_surrogates.trainer import score, train

series = synthesize(PlateConfig(alpha=200.0, dt=1 / 3000),
                    Excitation(duration_s=20.0, amplitude_decades=2.0, nonlinearity="saturation"))
ds = prepare(series, 100)
print(f"{len(series)} samples, {ds.num_pairs} windows")

cfg = TrainConfig(max_epochs=30, patience=5)
for spec in (ModelSpec("LR", 100), ModelSpec("MLP", 100, 2)):
    ckpt = train(spec, ds, cfg)
    print(f"{spec.label:10s} best epoch {ckpt.best_epoch:3d} ({ckpt.stop_reason}): "
          f"train R2 {score(ckpt, ds, 'train'):.3f}, test R2 {score(ckpt, ds, 'test'):.3f}")
