"""abstractnet: an inception-style CNN trained from scratch on procedurally
generated horizontal/vertical shape datasets, plus the sweep harness that
measures cross-family generalization."""

from .tensor import SeededRng, tensor_new, map_binary, rng_uniform
from .layers import ConvSpec, PoolSpec, LayerState
from .network import (InceptionSpec, NetworkSpec, Network, build_network,
                      preset, save_checkpoint, load_checkpoint)
from .optim import OptimConfig, TrainConfig, xavier_init, adagrad_step, \
    sgd_momentum_step, train
from .shapes import (ShapeClass, ShapeFamily, RenderParams, ShapeScene,
                     gen_scene, rasterize, generate_dataset, bbox_aspect_class)
from .experiment import (ExperimentConfig, RunResult, SweepResult,
                         evaluate_accuracy, dataset_loss, run_sweep,
                         aggregate_accuracies,
                         emit_csv, emit_svg_plot, preset_experiments,
                         preset_experiment)

__version__ = "0.1.0"
