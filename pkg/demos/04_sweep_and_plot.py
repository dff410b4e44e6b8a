"""Run a reduced generalization sweep and emit its CSV and SVG artifacts.

Uses the rect -> ellipse preset with a shrunken grid so the whole demo
finishes in a couple of minutes; the full-size sweeps behind the package's
acceptance thresholds use the default grid (10..500 images per class,
10 repeats, 1000 iterations).
"""

from abstractnet.experiment import preset_experiment, run_sweep
from abstractnet.optim import TrainConfig

cfg = preset_experiment(
    "fig4",
    train_sizes=(10, 25, 50),
    repeats=3,
    test_per_class=100,
    train=TrainConfig(iterations=250, batch_size=32),
)

print(f"sweep {cfg.name}: train on "
      f"{'+'.join(f.value for f in cfg.train_families)}, "
      f"test on {cfg.test_family.value}")
sweep = run_sweep(cfg, out_dir="demo_output/sweep")

for size, mean, lo, hi in sweep.aggregate():
    print(f"  {size:3d} images/class: mean accuracy {mean:.3f} "
        f"(90% band {lo:.3f}..{hi:.3f})")
print("wrote demo_output/sweep/fig4.csv and fig4.svg")
