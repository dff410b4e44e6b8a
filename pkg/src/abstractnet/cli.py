"""Command-line interface: gen / train / eval / selftest.

Options may also come from a key-value config file (`key = value`, one per
line, keys named like the long flags); explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import sys

from . import experiment, network, optim, shapes
from .shapes import RenderParams, ShapeClass, ShapeFamily


def parse_config_file(path) -> dict[str, str]:
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
    return values


def _parse_size(text: str) -> tuple[int, int]:
    h, _, w = text.partition("x")
    return int(h), int(w)


def _merge(cli_value, config: dict, key: str, default, cast):
    if cli_value is not None:
        return cli_value
    if key in config:
        return cast(config[key])
    return default


def cmd_gen(args) -> int:
    params = RenderParams(image_size=_parse_size(args.size))
    ds = shapes.generate_dataset(ShapeFamily(args.family), args.n, args.seed, params)
    if args.shape_class is not None:
        want = ShapeClass(args.shape_class)
        keep = [i for i, s in enumerate(ds.scenes) if s.shape_class is want]
        ds = shapes.Dataset(ds.images[keep], ds.labels[keep],
                            [ds.scenes[i] for i in keep], ds.params)
    shapes.export_dataset(ds, args.out)
    print(f"wrote {len(ds.labels)} images to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = parse_config_file(args.config) if args.config else {}
    preset_name = _merge(args.preset, config, "preset", None, str)
    if preset_name is None:
        print("error: --preset is required (fig4, fig6, fig7, fig8, fig9, "
              "fig11, fig13)", file=sys.stderr)
        return 2
    seed = _merge(args.seed, config, "seed", experiment.DEFAULT_MASTER_SEED, int)
    net = _merge(args.net, config, "net", "mini", str)
    method = _merge(args.optim, config, "optim", "adagrad", str)
    lr = _merge(args.lr, config, "lr", 0.01, float)
    iters = _merge(args.iters, config, "iters", 1000, int)
    batch = _merge(args.batch_size, config, "batch-size", 32, int)
    repeats = _merge(args.repeats, config, "repeats", 10, int)
    sizes = _merge(args.sizes, config, "sizes",
                   ",".join(str(s) for s in experiment.DEFAULT_TRAIN_SIZES), str)
    test_per_class = _merge(args.test_per_class, config, "test-per-class", 250, int)
    out = _merge(args.out, config, "out", None, str)
    if out is None:
        print("error: --out is required", file=sys.stderr)
        return 2
    method = {"sgd": "sgd_momentum"}.get(method, method)
    cfg = experiment.preset_experiment(
        preset_name,
        master_seed=seed,
        net_preset=net,
        repeats=repeats,
        test_per_class=test_per_class,
        train_sizes=tuple(int(s) for s in sizes.split(",")),
        optim=optim.OptimConfig(method=method, base_lr=lr),
        train=optim.TrainConfig(iterations=iters, batch_size=batch),
    )
    sweep = experiment.run_sweep(cfg, out_dir=out, save_checkpoints=True)
    for size, mean, lo, hi in sweep.aggregate():
        print(f"{cfg.name} size={size}: mean accuracy {mean:.4f} "
              f"(90% band {lo:.4f}..{hi:.4f})")
    print(f"artifacts written to {out}")
    return 0


def cmd_eval(args) -> int:
    net = network.load_checkpoint(args.ckpt)
    images, labels = shapes.load_dataset(args.data)
    acc = experiment.evaluate_accuracy(net, images, labels)
    print(f"accuracy {acc:.6f} ({len(labels)} images)")
    return 0


def cmd_selftest(_args) -> int:
    from .selftest import run_selftest
    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abstractnet",
                                description="oriented-shape CNN experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="export a generated dataset (PGM + manifest)")
    g.add_argument("--family", required=True,
                   choices=[f.value for f in ShapeFamily])
    g.add_argument("--class", dest="shape_class", default=None,
                   choices=[c.value for c in ShapeClass],
                   help="restrict to one class (default: both)")
    g.add_argument("--n", type=int, required=True, help="images per class")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--size", default="64x64", help="image size HxW")
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="run one sweep, write CSV/SVG/checkpoints")
    t.add_argument("--preset", default=None,
                   help="fig4|fig6|fig7|fig8|fig9|fig11|fig13")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)
    t.add_argument("--net", choices=["mini", "faithful"], default=None)
    t.add_argument("--optim", choices=["adagrad", "sgd", "sgd_momentum"],
                   default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--iters", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--repeats", type=int, default=None)
    t.add_argument("--sizes", default=None, help="comma-separated per-class sizes")
    t.add_argument("--test-per-class", type=int, default=None)
    t.add_argument("--config", default=None, help="key=value config file")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="print accuracy of a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("selftest", help="gradient checks and oracle suites")
    s.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
