import numpy as np
import pytest

from abstractnet import experiment, network, shapes
from abstractnet.experiment import (DEFAULT_MASTER_SEED, DEFAULT_TRAIN_SIZES,
                                    ExperimentConfig, aggregate_accuracies,
                                    evaluate_accuracy, generate_test_set,
                                    preset_experiment, preset_experiments,
                                    run_sweep)
from abstractnet.optim import TrainConfig
from abstractnet.shapes import ShapeFamily
from abstractnet.tensor import SeededRng


def _tiny_cfg(name="fig4", **kw):
    defaults = dict(
        train_sizes=(4,),
        repeats=2,
        test_per_class=5,
        train=TrainConfig(iterations=5, batch_size=4),
    )
    defaults.update(kw)
    return preset_experiment(name, **defaults)


# -- aggregation -----------------------------------------------------------

def test_aggregate_matches_hand_percentiles():
    accs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    mean, lo, hi = aggregate_accuracies(accs)
    assert abs(mean - 0.55) < 1e-15
    # linear interpolation between order statistics
    assert abs(lo - 0.145) < 1e-15
    assert abs(hi - 0.955) < 1e-15


def test_aggregate_single_value():
    mean, lo, hi = aggregate_accuracies([0.7])
    assert mean == lo == hi == 0.7


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate_accuracies([])


# -- config ----------------------------------------------------------------

def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("x", (ShapeFamily.FILLED_RECT,),
                         ShapeFamily.FILLED_RECT, repeats=0)
    with pytest.raises(ValueError):
        ExperimentConfig("x", (), ShapeFamily.FILLED_RECT)


def test_preset_table():
    cfgs = {c.name: c for c in preset_experiments()}
    assert set(cfgs) == {"fig4", "fig6", "fig7", "fig8", "fig9", "fig11", "fig13"}
    assert cfgs["fig4"].train_families == (ShapeFamily.FILLED_RECT,)
    assert cfgs["fig4"].test_family is ShapeFamily.FILLED_ELLIPSE
    assert cfgs["fig7"].train_families == (ShapeFamily.RECT_OUTLINE,
                                           ShapeFamily.ELLIPSE_OUTLINE)
    assert cfgs["fig13"].test_family is ShapeFamily.RANDOM_TEXTURED
    assert cfgs["fig4"].train_sizes == DEFAULT_TRAIN_SIZES
    assert cfgs["fig4"].repeats == 10
    assert cfgs["fig4"].master_seed == DEFAULT_MASTER_SEED
    with pytest.raises(ValueError):
        preset_experiment("fig99")


# -- evaluation ------------------------------------------------------------

def test_evaluate_accuracy_counts_argmax():
    class Stub:
        def forward(self, x, mode="eval", rng=None):
            n = x.shape[0]
            logits = np.zeros((n, 2, 1, 1))
            logits[:, 1] = 1.0  # always predicts class 1
            return logits, [], None

    labels = np.array([1, 1, 0, 1])
    acc = evaluate_accuracy(Stub(), np.zeros((4, 1, 8, 8)), labels)
    assert acc == 0.75
    with pytest.raises(ValueError):
        evaluate_accuracy(Stub(), np.zeros((0, 1, 8, 8)), np.array([]))


def test_generate_test_set_is_shared_and_deterministic():
    cfg = _tiny_cfg()
    a = generate_test_set(cfg)
    b = generate_test_set(cfg)
    assert np.array_equal(a.images, b.images)
    assert len(a.labels) == 2 * cfg.test_per_class
    assert all(s.family is cfg.test_family for s in a.scenes)


# -- sweeps ----------------------------------------------------------------

def test_run_sweep_grid_and_artifacts(tmp_path):
    cfg = _tiny_cfg()
    sweep = run_sweep(cfg, out_dir=tmp_path, save_checkpoints=True)
    assert len(sweep.runs) == len(cfg.train_sizes) * cfg.repeats
    assert [(r.train_size, r.repeat) for r in sweep.runs] == [(4, 0), (4, 1)]
    for r in sweep.runs:
        assert 0.0 <= r.accuracy <= 1.0
        assert np.isfinite(r.final_loss)
        assert r.seconds > 0.0
    assert (tmp_path / "fig4.csv").exists()
    assert (tmp_path / "fig4_timings.csv").exists()
    assert (tmp_path / "fig4.svg").exists()
    assert (tmp_path / "checkpoints" / "fig4_s4_r0.ckpt").exists()
    # checkpoints reload into working networks
    net = network.load_checkpoint(tmp_path / "checkpoints" / "fig4_s4_r1.ckpt")
    test_ds = generate_test_set(cfg)
    acc = evaluate_accuracy(net, test_ds.images, test_ds.labels)
    assert abs(acc - sweep.runs[-1].accuracy) < 1e-12
    # final_loss is the whole-training-set loss of the trained network
    train_ds = shapes.generate_dataset(list(cfg.train_families), 4,
                                       sweep.runs[-1].seed, cfg.render)
    loss = experiment.dataset_loss(net, train_ds.images, train_ds.labels)
    assert abs(loss - sweep.runs[-1].final_loss) < 1e-12


def test_csv_format_and_determinism(tmp_path):
    cfg = _tiny_cfg()
    run_sweep(cfg, out_dir=tmp_path / "a")
    run_sweep(cfg, out_dir=tmp_path / "b")
    csv_a = (tmp_path / "a" / "fig4.csv").read_bytes()
    csv_b = (tmp_path / "b" / "fig4.csv").read_bytes()
    assert csv_a == csv_b
    lines = csv_a.decode().splitlines()
    assert lines[0] == "experiment,train_size,repeat,seed,accuracy,final_loss"
    assert len(lines) == 1 + 2
    first = lines[1].split(",")
    assert first[0] == "fig4" and first[1] == "4" and first[2] == "0"
    int(first[3])  # seed is an integer stream id
    float(first[4]), float(first[5])
    # SVG identical across reruns too
    assert (tmp_path / "a" / "fig4.svg").read_bytes() == \
        (tmp_path / "b" / "fig4.svg").read_bytes()


def test_csv_seed_column_matches_data_stream():
    cfg = _tiny_cfg()
    sweep = run_sweep(cfg)
    want = SeededRng(cfg.master_seed).split(experiment._SPLIT_DATA, 4, 0).key
    assert sweep.runs[0].seed == want


def test_master_seed_changes_results():
    a = run_sweep(_tiny_cfg())
    b = run_sweep(_tiny_cfg(master_seed=7))
    assert [r.seed for r in a.runs] != [r.seed for r in b.runs]


def test_svg_plot_structure(tmp_path):
    cfg = _tiny_cfg(train_sizes=(4, 8))
    sweep = run_sweep(cfg, out_dir=tmp_path)
    svg = (tmp_path / "fig4.svg").read_text()
    assert svg.startswith("<svg ")
    assert svg.count("<circle") == 2  # one mean dot per size
    assert "<polygon" in svg  # the 90% band
    assert "filled_rect" in svg and "filled_ellipse" in svg


def test_parallel_sweep_matches_sequential(tmp_path, monkeypatch):
    cfg = _tiny_cfg()
    seq = run_sweep(cfg)
    monkeypatch.setenv("ABSTRACTNET_THREADS", "2")
    par = run_sweep(cfg)
    assert [(r.train_size, r.repeat, r.seed, r.accuracy, r.final_loss)
            for r in seq.runs] == \
           [(r.train_size, r.repeat, r.seed, r.accuracy, r.final_loss)
            for r in par.runs]
