"""Weight initialization, ADAGRAD and SGD-momentum updates, training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .layers import LayerState
from .tensor import SeededRng, check_finite


@dataclass(frozen=True)
class OptimConfig:
    method: str = "adagrad"  # "adagrad" | "sgd_momentum"
    base_lr: float = 0.01
    momentum: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.method not in ("adagrad", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.method!r}")
        # lr 0 is allowed as an explicit null-update mode (useful in tests)
        if self.base_lr < 0:
            raise ValueError("base_lr must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 32
    loss_report_every: int = 25

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")


def xavier_init(shape, fan_in: int, rng: SeededRng, fan_out: int | None = None,
                mode: str = "fan_in") -> np.ndarray:
    """Uniform Xavier initialization.

    Default is the fan-in variant: bound a = sqrt(3 / fan_in), i.e.
    variance 1 / fan_in.  mode="fan_avg" uses a = sqrt(6 / (fan_in + fan_out)).
    """
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    if mode == "fan_in":
        a = math.sqrt(3.0 / fan_in)
    elif mode == "fan_avg":
        if fan_out is None or fan_out < 1:
            raise ValueError("fan_avg mode needs fan_out >= 1")
        a = math.sqrt(6.0 / (fan_in + fan_out))
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return rng.uniform(shape, -a, a)


def _pairs(state: LayerState):
    return (
        (state.weights, state.grad_weights, state.accum_weights, state.vel_weights),
        (state.bias, state.grad_bias, state.accum_bias, state.vel_bias),
    )


def adagrad_step(state: LayerState, lr: float, epsilon: float) -> None:
    """accum += g^2;  w -= lr * g / (sqrt(accum) + epsilon);  grads cleared."""
    for w, g, acc, _ in _pairs(state):
        acc += g * g
        w -= lr * g / (np.sqrt(acc) + epsilon)
    state.zero_grad()


def sgd_momentum_step(state: LayerState, lr: float, momentum: float) -> None:
    """v = momentum*v - lr*g;  w += v;  grads cleared."""
    for w, g, _, v in _pairs(state):
        v *= momentum
        v -= lr * g
        w += v
    state.zero_grad()


def apply_update(states, cfg: OptimConfig) -> None:
    for st in states:
        if cfg.method == "adagrad":
            adagrad_step(st, cfg.base_lr, cfg.epsilon)
        else:
            sgd_momentum_step(st, cfg.base_lr, cfg.momentum)


def train(net, images: np.ndarray, labels: np.ndarray, optim: OptimConfig,
          tc: TrainConfig, rng: SeededRng):
    """Run exactly tc.iterations mini-batch updates on net.

    An iteration is one mini-batch gradient update; batches are drawn from
    shuffled epochs over the training set, reshuffled each epoch.  Returns
    (net, trace) where trace is a list of (iteration, loss) recorded every
    loss_report_every iterations plus the final one.
    """
    n = len(labels)
    if n == 0:
        raise ValueError("empty training set")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() > 1:
        raise ValueError("labels must be in {0, 1}")
    shuffle_rng = rng.split(0)
    dropout_rng = rng.split(1)
    states = net.parameter_states()
    trace = []
    order = shuffle_rng.permutation(n)
    cursor = 0
    for it in range(1, tc.iterations + 1):
        take = min(tc.batch_size, n)
        if cursor + take > n:
            order = shuffle_rng.permutation(n)
            cursor = 0
        batch = order[cursor:cursor + take]
        cursor += take
        xb = images[batch]
        yb = labels[batch]
        _, _, cache = net.forward(xb, mode="train", rng=dropout_rng.split(it))
        loss = net.backward(cache, yb)
        check_finite(np.array([loss]), "training loss")
        apply_update(states, optim)
        if it % tc.loss_report_every == 0 or it == tc.iterations:
            trace.append((it, loss))
    return net, trace
