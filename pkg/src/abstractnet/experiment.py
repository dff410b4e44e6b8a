"""Cross-family generalization sweeps: train/test grids, aggregation, output.

One sweep trains `repeats` fresh networks per training-set size, always
evaluating on a single shared test set, and reports per-size mean accuracy
with a 90% band (5th..95th percentile of the repeat accuracies, linear
interpolation between order statistics).
"""

from __future__ import annotations

import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import network, shapes
from .layers import softmax_xent
from .optim import OptimConfig, TrainConfig, train as train_network
from .shapes import RenderParams, ShapeFamily
from .tensor import SeededRng

DEFAULT_TRAIN_SIZES = (10, 25, 50, 100, 250, 500)
DEFAULT_MASTER_SEED = 20150731

# seed-split channels under the master seed
_SPLIT_TEST = 0
_SPLIT_DATA = 1
_SPLIT_NET = 2
_SPLIT_TRAIN = 3


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    train_families: tuple[ShapeFamily, ...]
    test_family: ShapeFamily
    train_sizes: tuple[int, ...] = DEFAULT_TRAIN_SIZES
    repeats: int = 10
    test_per_class: int = 250
    net_preset: str = "mini"
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    render: RenderParams = field(default_factory=RenderParams)
    master_seed: int = DEFAULT_MASTER_SEED

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.train_families:
            raise ValueError("need at least one training family")


@dataclass(frozen=True)
class RunResult:
    train_size: int
    repeat: int
    seed: int  # data-stream identifier of this run
    accuracy: float
    final_loss: float
    seconds: float


@dataclass(frozen=True)
class SweepResult:
    config: ExperimentConfig
    runs: tuple[RunResult, ...]  # ordered by (size asc, repeat asc)

    def by_size(self) -> dict[int, list[RunResult]]:
        out: dict[int, list[RunResult]] = {s: [] for s in self.config.train_sizes}
        for r in self.runs:
            out[r.train_size].append(r)
        return out

    def aggregate(self) -> list[tuple[int, float, float, float]]:
        """[(size, mean, band_low, band_high)] per training-set size."""
        rows = []
        for size, runs in self.by_size().items():
            accs = [r.accuracy for r in runs]
            mean, lo, hi = aggregate_accuracies(accs)
            rows.append((size, mean, lo, hi))
        return rows


def aggregate_accuracies(accs) -> tuple[float, float, float]:
    """(mean, 5th percentile, 95th percentile) with linear interpolation."""
    if len(accs) == 0:
        raise ValueError("empty accuracy group")
    a = np.asarray(accs, dtype=np.float64)
    lo, hi = np.percentile(a, [5.0, 95.0])
    return float(a.mean()), float(lo), float(hi)


def evaluate_accuracy(net, images: np.ndarray, labels: np.ndarray,
                      batch: int = 100) -> float:
    """Fraction of argmax-correct predictions; argmax ties go to class 0."""
    if len(labels) == 0:
        raise ValueError("empty test set")
    correct = 0
    for i in range(0, len(labels), batch):
        logits, _, _ = net.forward(_to_net_input(images[i:i + batch]), mode="eval")
        pred = np.argmax(logits[:, :, 0, 0], axis=1)
        correct += int((pred == labels[i:i + batch]).sum())
    return correct / len(labels)


def dataset_loss(net, images: np.ndarray, labels: np.ndarray,
                 batch: int = 100) -> float:
    """Mean cross-entropy over a whole dataset, eval mode (no dropout)."""
    if len(labels) == 0:
        raise ValueError("empty dataset")
    total = 0.0
    for i in range(0, len(labels), batch):
        logits, _, _ = net.forward(_to_net_input(images[i:i + batch]), mode="eval")
        loss, _ = softmax_xent(logits, labels[i:i + batch])
        total += loss * len(labels[i:i + batch])
    return total / len(labels)


def _to_net_input(images: np.ndarray) -> np.ndarray:
    # shapes are dark-on-light; feed shape-active inputs (0 background)
    return 1.0 - images


def _run_one(cfg: ExperimentConfig, size: int, repeat: int,
             test_images: np.ndarray, test_labels: np.ndarray,
             ckpt_path=None) -> RunResult:
    master = SeededRng(cfg.master_seed)
    data_rng = master.split(_SPLIT_DATA, size, repeat)
    t0 = time.perf_counter()
    train_ds = shapes.generate_dataset(list(cfg.train_families), size,
                                       data_rng.key, cfg.render)
    spec = network.preset(cfg.net_preset, input_hw=cfg.render.image_size[0])
    net = network.build_network(spec, master.split(_SPLIT_NET, size, repeat))
    net, _ = train_network(net, _to_net_input(train_ds.images), train_ds.labels,
                           cfg.optim, cfg.train,
                           master.split(_SPLIT_TRAIN, size, repeat))
    acc = evaluate_accuracy(net, test_images, test_labels)
    # final loss over the whole training set, not the (noisy) last mini-batch
    final_loss = dataset_loss(net, train_ds.images, train_ds.labels)
    if ckpt_path is not None:
        network.save_checkpoint(net, ckpt_path)
    seconds = time.perf_counter() - t0
    return RunResult(size, repeat, data_rng.key, acc, final_loss, seconds)


def generate_test_set(cfg: ExperimentConfig) -> shapes.Dataset:
    seed = SeededRng(cfg.master_seed).split(_SPLIT_TEST).key
    return shapes.generate_dataset(cfg.test_family, cfg.test_per_class, seed,
                                   cfg.render)


def _worker(args):
    return _run_one(*args)


def run_sweep(cfg: ExperimentConfig, out_dir=None,
              save_checkpoints: bool = False) -> SweepResult:
    """Full grid of train_sizes x repeats; one shared test set per sweep.

    Parallelism is capped by the ABSTRACTNET_THREADS env var (default 1);
    results are keyed by (size, repeat) so worker scheduling never affects
    the output.  A failed run aborts the sweep with its (size, repeat, seed).
    """
    test_ds = generate_test_set(cfg)
    ckpt_dir = None
    if save_checkpoints and out_dir is not None:
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)
    jobs = [(cfg, size, repeat, test_ds.images, test_ds.labels,
             None if ckpt_dir is None else
             os.path.join(ckpt_dir, f"{cfg.name}_s{size}_r{repeat}.ckpt"))
            for size in cfg.train_sizes for repeat in range(cfg.repeats)]
    workers = int(os.environ.get("ABSTRACTNET_THREADS", "1"))
    results: dict[tuple[int, int], RunResult] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for job, res in zip(jobs, pool.map(_worker, jobs)):
                results[(job[1], job[2])] = res
    else:
        for job in jobs:
            try:
                results[(job[1], job[2])] = _run_one(*job)
            except Exception as e:
                raise RuntimeError(
                    f"run failed at size={job[1]} repeat={job[2]} "
                    f"(master_seed={cfg.master_seed}): {e}") from e
    runs = tuple(results[(size, repeat)]
                 for size in cfg.train_sizes for repeat in range(cfg.repeats))
    sweep = SweepResult(cfg, runs)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        emit_csv(sweep, os.path.join(out_dir, f"{cfg.name}.csv"))
        emit_timings_csv(sweep, os.path.join(out_dir, f"{cfg.name}_timings.csv"))
        emit_svg_plot(sweep, os.path.join(out_dir, f"{cfg.name}.svg"))
    return sweep


# -- artifact emission -----------------------------------------------------

def emit_csv(sweep: SweepResult, path) -> None:
    """Deterministic per-run results; wall-clock timing lives in a separate
    timings file so reruns with the same seed are byte-identical."""
    buf = io.StringIO()
    buf.write("experiment,train_size,repeat,seed,accuracy,final_loss\n")
    for r in sweep.runs:
        buf.write(f"{sweep.config.name},{r.train_size},{r.repeat},{r.seed},"
                  f"{r.accuracy:.6f},{r.final_loss:.17g}\n")
    _write_text(path, buf.getvalue())


def emit_timings_csv(sweep: SweepResult, path) -> None:
    buf = io.StringIO()
    buf.write("experiment,train_size,repeat,seconds\n")
    for r in sweep.runs:
        buf.write(f"{sweep.config.name},{r.train_size},{r.repeat},{r.seconds:.3f}\n")
    _write_text(path, buf.getvalue())


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", newline="") as f:
            f.write(text)
    except OSError as e:
        raise OSError(f"could not write {path}: {e}") from e


_SVG_W, _SVG_H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 40, 50  # plot margins


def _xpos(size: int, sizes) -> float:
    lo = math.log10(min(sizes))
    hi = math.log10(max(sizes))
    frac = 0.5 if hi == lo else (math.log10(size) - lo) / (hi - lo)
    return _ML + frac * (_SVG_W - _ML - _MR)


def _ypos(acc: float) -> float:
    return _MT + (1.0 - acc) * (_SVG_H - _MT - _MB)


def emit_svg_plot(sweep: SweepResult, path) -> None:
    """Standalone SVG: log-x training size, accuracy in [0,1], mean dots,
    shaded 90% band."""
    agg = sweep.aggregate()
    sizes = [row[0] for row in agg]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{sweep.config.name}: '
        f'{"+".join(f.value for f in sweep.config.train_families)} &#8594; '
        f'{sweep.config.test_family.value}</text>',
    ]
    band = " ".join(f"{_xpos(s, sizes):.2f},{_ypos(hi):.2f}" for s, _, _, hi in agg)
    band += " " + " ".join(f"{_xpos(s, sizes):.2f},{_ypos(lo):.2f}"
                           for s, _, lo, _ in reversed(agg))
    parts.append(f'<polygon points="{band}" fill="#9ecae1" fill-opacity="0.6"/>')
    line = " ".join(f"{_xpos(s, sizes):.2f},{_ypos(m):.2f}" for s, m, _, _ in agg)
    parts.append(f'<polyline points="{line}" fill="none" stroke="#3182bd" '
                 f'stroke-width="1.5"/>')
    for s, m, _, _ in agg:
        parts.append(f'<circle cx="{_xpos(s, sizes):.2f}" cy="{_ypos(m):.2f}" '
                     f'r="4" fill="#08519c"/>')
    # axes
    x0, x1 = _ML, _SVG_W - _MR
    y0, y1 = _SVG_H - _MB, _MT
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for s in sizes:
        xp = _xpos(s, sizes)
        parts.append(f'<line x1="{xp:.2f}" y1="{y0}" x2="{xp:.2f}" y2="{y0 + 5}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{xp:.2f}" y="{y0 + 20}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12">{s}</text>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        yp = _ypos(tick)
        parts.append(f'<line x1="{x0 - 5}" y1="{yp:.2f}" x2="{x0}" y2="{yp:.2f}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{x0 - 10}" y="{yp + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="12">{tick:.2f}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{_SVG_H - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" font-size="13">'
                 f'training images per class</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">accuracy</text>')
    parts.append("</svg>")
    _write_text(path, "\n".join(parts) + "\n")


# -- named experiment presets ----------------------------------------------

def preset_experiments(**overrides) -> list[ExperimentConfig]:
    """The seven standard transfer sweeps."""
    F = ShapeFamily
    table = [
        ("fig4", (F.FILLED_RECT,), F.FILLED_ELLIPSE),
        ("fig6", (F.RECT_OUTLINE,), F.FILLED_RECT),
        ("fig7", (F.RECT_OUTLINE, F.ELLIPSE_OUTLINE), F.FILLED_RECT),
        ("fig8", (F.RANDOM_OUTLINE,), F.RANDOM_OUTLINE),
        ("fig9", (F.RANDOM_OUTLINE,), F.RANDOM_FILLED),
        ("fig11", (F.RANDOM_OUTLINE,), F.FILLED_RECT),
        ("fig13", (F.RANDOM_OUTLINE,), F.RANDOM_TEXTURED),
    ]
    return [ExperimentConfig(name, fams, test, **overrides)
            for name, fams, test in table]


def preset_experiment(name: str, **overrides) -> ExperimentConfig:
    for cfg in preset_experiments(**overrides):
        if cfg.name == name:
            return cfg
    raise ValueError(f"unknown experiment preset {name!r}")
