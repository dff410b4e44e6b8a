"""Inception modules composed into full networks, with auxiliary heads.

Two presets are provided: "mini" (desk-scale, 3 modules, no aux heads)
and "faithful" (nine modules with auxiliary classifiers after modules 3
and 6).  Because this artifact requires exact spatial divisibility for
every conv/pool, downsampling is done with even pooling windows rather
than strided odd kernels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .layers import (ConvSpec, LayerState, PoolSpec, SpecError, concat_channels,
                     conv_backward, conv_forward, dense_backward, dense_forward,
                     dropout, dropout_backward, pool_backward, pool_forward,
                     relu, relu_backward, softmax_xent, split_channels)
from .optim import xavier_init
from .tensor import SeededRng, ShapeError

CHECKPOINT_MAGIC = b"ANCK"
CHECKPOINT_VERSION = 1

_BRANCHES = ("b1", "b3r", "b3", "b5r", "b5", "pp")


@dataclass(frozen=True)
class InceptionSpec:
    """Branch widths of one module: 1x1, (reduce, 3x3), (reduce, 5x5), pool-proj."""
    b1: int
    b3r: int
    b3: int
    b5r: int
    b5: int
    pp: int

    def __post_init__(self):
        if min(self.b1, self.b3r, self.b3, self.b5r, self.b5, self.pp) < 1:
            raise SpecError(f"all branch widths must be >= 1: {self}")

    @property
    def out_channels(self) -> int:
        return self.b1 + self.b3 + self.b5 + self.pp


@dataclass(frozen=True)
class NetworkSpec:
    input: tuple[int, int, int]  # (channels, h, w)
    stem: tuple  # ConvSpec / PoolSpec items; ReLU is implied after each conv
    modules: tuple[InceptionSpec, ...]
    downsample_after: tuple[int, ...] = ()  # 1-based module indices, 2x2/s2 maxpool
    aux_after: tuple[int, ...] = ()  # 1-based module indices carrying aux heads
    aux_weight: float = 0.3
    aux_channels: int = 16
    head_dropout: float = 0.4
    classes: int = 2

    def __post_init__(self):
        if not self.modules:
            raise SpecError("need at least one inception module")
        if list(self.aux_after) != sorted(set(self.aux_after)):
            raise SpecError(f"aux_after must be strictly increasing: {self.aux_after}")
        for i in self.aux_after:
            if not 1 <= i < len(self.modules):
                raise SpecError(
                    f"aux_after index {i} out of range for {len(self.modules)} modules")
        for i in self.downsample_after:
            if not 1 <= i <= len(self.modules):
                raise SpecError(f"downsample_after index {i} out of range")


def _branch_convs(in_ch: int, m: InceptionSpec) -> dict[str, ConvSpec]:
    return {
        "b1": ConvSpec(in_ch, m.b1, (1, 1)),
        "b3r": ConvSpec(in_ch, m.b3r, (1, 1)),
        "b3": ConvSpec(m.b3r, m.b3, (3, 3), (1, 1), (1, 1)),
        "b5r": ConvSpec(in_ch, m.b5r, (1, 1)),
        "b5": ConvSpec(m.b5r, m.b5, (5, 5), (1, 1), (2, 2)),
        "pp": ConvSpec(in_ch, m.pp, (1, 1)),
    }


_MODULE_POOL = PoolSpec("max", (3, 3), (1, 1), (1, 1))
_DOWNSAMPLE = PoolSpec("max", (2, 2), (2, 2))


def _new_state(spec: ConvSpec, rng: SeededRng) -> LayerState:
    kh, kw = spec.kernel
    fan_in = spec.in_channels * kh * kw
    w = xavier_init((spec.out_channels, spec.in_channels, kh, kw), fan_in, rng)
    b = np.zeros((1, spec.out_channels, 1, 1))
    return LayerState(w, b)


class Network:
    """A built network: spec plus one LayerState per parameterized layer."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.stem_states: list[LayerState | None] = []
        self.module_states: list[dict[str, LayerState]] = []
        self.aux_states: list[tuple[LayerState, LayerState]] = []
        self.head_dense: LayerState | None = None
        # resolved per-module input channels and head geometry, set by _plan
        self._module_in: list[int] = []
        self._head_hw: tuple[int, int] = (0, 0)
        self._plan()

    def _plan(self):
        """Walk the spec once, validating channel/spatial bookkeeping."""
        from .layers import out_size
        c, h, w = self.spec.input
        for item in self.spec.stem:
            if isinstance(item, ConvSpec):
                if item.in_channels != c:
                    raise SpecError(
                        f"stem conv expects {item.in_channels} channels, stream has {c}")
                h = out_size(h, item.kernel[0], item.stride[0], item.pad[0])
                w = out_size(w, item.kernel[1], item.stride[1], item.pad[1])
                c = item.out_channels
            elif isinstance(item, PoolSpec):
                h = out_size(h, item.window[0], item.stride[0], item.pad[0])
                w = out_size(w, item.window[1], item.stride[1], item.pad[1])
            else:
                raise SpecError(f"stem items must be ConvSpec or PoolSpec, got {item!r}")
        for i, m in enumerate(self.spec.modules, start=1):
            self._module_in.append(c)
            for name, cs in _branch_convs(c, m).items():
                try:
                    out_size(h, cs.kernel[0], cs.stride[0], cs.pad[0])
                except SpecError as e:
                    raise SpecError(f"module {i} branch {name}: {e}") from e
            c = m.out_channels
            if i in self.spec.downsample_after:
                h = out_size(h, 2, 2, 0)
                w = out_size(w, 2, 2, 0)
        self._head_hw = (h, w)
        self._out_channels = c

    def parameter_states(self) -> list[LayerState]:
        """All LayerStates in fixed declaration order (checkpoint order)."""
        states = [s for s in self.stem_states if s is not None]
        for d in self.module_states:
            states.extend(d[name] for name in _BRANCHES)
        for conv_st, dense_st in self.aux_states:
            states.append(conv_st)
            states.append(dense_st)
        states.append(self.head_dense)
        return states

    # -- forward / backward ------------------------------------------------

    def forward(self, x: np.ndarray, mode: str = "eval", rng: SeededRng | None = None):
        """Returns (main_logits, aux_logits, cache).

        Aux heads are evaluated in train mode only; eval mode also
        disables dropout, making the pass deterministic and pure.
        """
        spec = self.spec
        if x.shape[1:] != spec.input:
            raise ShapeError(f"input shape {x.shape[1:]} != spec input {spec.input}")
        if mode == "train" and rng is None:
            raise ValueError("train-mode forward needs an rng for dropout")
        cache = {"mode": mode, "stem": [], "modules": [], "aux": []}
        cur = x
        for item, st in zip(spec.stem, self.stem_states):
            if isinstance(item, ConvSpec):
                pre = conv_forward(cur, item, st)
                cache["stem"].append(("conv", cur, pre))
                cur = relu(pre)
            else:
                out, pc = pool_forward(cur, item)
                cache["stem"].append(("pool", cur.shape, pc))
                cur = out
        aux_logits = []
        for i, m in enumerate(self.spec.modules, start=1):
            states = self.module_states[i - 1]
            convs = _branch_convs(self._module_in[i - 1], m)
            mc = {"x": cur}
            y1 = conv_forward(cur, convs["b1"], states["b1"])
            mc["b1_pre"] = y1
            r3 = conv_forward(cur, convs["b3r"], states["b3r"])
            mc["b3r_pre"] = r3
            r3a = relu(r3)
            mc["b3r_act"] = r3a
            y3 = conv_forward(r3a, convs["b3"], states["b3"])
            mc["b3_pre"] = y3
            r5 = conv_forward(cur, convs["b5r"], states["b5r"])
            mc["b5r_pre"] = r5
            r5a = relu(r5)
            mc["b5r_act"] = r5a
            y5 = conv_forward(r5a, convs["b5"], states["b5"])
            mc["b5_pre"] = y5
            pooled, pc = pool_forward(cur, _MODULE_POOL)
            mc["pool_cache"] = pc
            mc["pool_out"] = pooled
            yp = conv_forward(pooled, convs["pp"], states["pp"])
            mc["pp_pre"] = yp
            cur = concat_channels([relu(y1), relu(y3), relu(y5), relu(yp)])
            mc["out"] = cur
            if i in spec.downsample_after:
                out, dpc = pool_forward(cur, _DOWNSAMPLE)
                mc["down_cache"] = (cur.shape, dpc)
                cur = out
            if mode == "train" and i in spec.aux_after:
                k = spec.aux_after.index(i)
                logits, ac = self._aux_forward(mc["out"], k)
                ac["module"] = i
                aux_logits.append(logits)
                cache["aux"].append(ac)
            cache["modules"].append(mc)
        # head: global average pool -> dropout -> dense
        hp = PoolSpec("average", self._head_hw, (1, 1))
        pooled, pc = pool_forward(cur, hp)
        dropped, mask = dropout(pooled, spec.head_dropout, rng, mode)
        logits = dense_forward(dropped, self.head_dense)
        cache["head"] = {"in_shape": cur.shape, "pool_cache": pc, "pool_spec": hp,
                         "pooled": pooled, "mask": mask, "dropped": dropped,
                         "logits": logits}
        cache["aux_logits"] = aux_logits
        return logits, aux_logits, cache

    def _aux_forward(self, x: np.ndarray, k: int):
        conv_st, dense_st = self.aux_states[k]
        cs = ConvSpec(x.shape[1], self.spec.aux_channels, (1, 1))
        pre = conv_forward(x, cs, conv_st)
        act = relu(pre)
        hp = PoolSpec("average", act.shape[2:], (1, 1))
        pooled, pc = pool_forward(act, hp)
        logits = dense_forward(pooled, dense_st)
        return logits, {"x": x, "conv_spec": cs, "pre": pre, "act": act,
                        "pool_spec": hp, "pool_cache": pc, "pooled": pooled,
                        "logits": logits, "k": k}

    def _aux_backward(self, ac, dlogits):
        conv_st, dense_st = self.aux_states[ac["k"]]
        dpooled = dense_backward(ac["pooled"], dlogits, dense_st)
        dact = pool_backward(dpooled, ac["pool_spec"], ac["pool_cache"])
        dpre = relu_backward(ac["pre"], dact)
        return conv_backward(ac["x"], dpre, ac["conv_spec"], conv_st)

    def backward(self, cache, labels) -> float:
        """Populate all gradient slots; return main + aux_weight * sum(aux) loss."""
        if cache.get("mode") != "train":
            raise RuntimeError("backward requires a matching train-mode forward")
        spec = self.spec
        hc = cache["head"]
        loss, dlogits = softmax_xent(hc["logits"], labels)
        total = loss
        aux_dx = {}  # module index -> gradient at that module's output
        for ac, logits in zip(cache["aux"], cache["aux_logits"]):
            aux_loss, daux = softmax_xent(logits, labels)
            total += spec.aux_weight * aux_loss
            aux_dx[ac["module"]] = self._aux_backward(ac, spec.aux_weight * daux)
        ddropped = dense_backward(hc["dropped"], dlogits, self.head_dense)
        dpooled = dropout_backward(ddropped, hc["mask"])
        dcur = pool_backward(dpooled, hc["pool_spec"], hc["pool_cache"])
        for i in range(len(spec.modules), 0, -1):
            m = spec.modules[i - 1]
            states = self.module_states[i - 1]
            convs = _branch_convs(self._module_in[i - 1], m)
            mc = cache["modules"][i - 1]
            if i in spec.downsample_after:
                shape, dpc = mc["down_cache"]
                dcur = pool_backward(dcur, _DOWNSAMPLE, dpc)
            if i in aux_dx:
                dcur = dcur + aux_dx[i]
            d1, d3, d5, dp = split_channels(dcur, [m.b1, m.b3, m.b5, m.pp])
            x = mc["x"]
            dx = conv_backward(x, relu_backward(mc["b1_pre"], d1), convs["b1"], states["b1"])
            dr3a = conv_backward(mc["b3r_act"], relu_backward(mc["b3_pre"], d3),
                                 convs["b3"], states["b3"])
            dx += conv_backward(x, relu_backward(mc["b3r_pre"], dr3a),
                                convs["b3r"], states["b3r"])
            dr5a = conv_backward(mc["b5r_act"], relu_backward(mc["b5_pre"], d5),
                                 convs["b5"], states["b5"])
            dx += conv_backward(x, relu_backward(mc["b5r_pre"], dr5a),
                                convs["b5r"], states["b5r"])
            dpooled_b = conv_backward(mc["pool_out"], relu_backward(mc["pp_pre"], dp),
                                      convs["pp"], states["pp"])
            dx += pool_backward(dpooled_b, _MODULE_POOL, mc["pool_cache"])
            dcur = dx
        for (item, st), entry in zip(reversed(list(zip(self.spec.stem, self.stem_states))),
                                     reversed(cache["stem"])):
            if entry[0] == "conv":
                _, x, pre = entry
                dcur = conv_backward(x, relu_backward(pre, dcur), item, st)
            else:
                _, _, pc = entry
                dcur = pool_backward(dcur, item, pc)
        return total


def build_network(spec: NetworkSpec, rng: SeededRng) -> Network:
    """Instantiate spec with Xavier weights, zero biases, zero optimizer slots."""
    net = Network(spec)  # validates all bookkeeping before any allocation
    layer = 0
    for item in spec.stem:
        if isinstance(item, ConvSpec):
            net.stem_states.append(_new_state(item, rng.split(layer)))
            layer += 1
        else:
            net.stem_states.append(None)
    for i, m in enumerate(spec.modules):
        states = {}
        for name, cs in _branch_convs(net._module_in[i], m).items():
            states[name] = _new_state(cs, rng.split(layer))
            layer += 1
        net.module_states.append(states)
    for idx in spec.aux_after:
        in_ch = spec.modules[idx - 1].out_channels
        conv_st = _new_state(ConvSpec(in_ch, spec.aux_channels, (1, 1)), rng.split(layer))
        layer += 1
        dense_w = xavier_init((spec.classes, spec.aux_channels, 1, 1),
                              spec.aux_channels, rng.split(layer))
        layer += 1
        net.aux_states.append((conv_st, LayerState(dense_w, np.zeros((1, spec.classes, 1, 1)))))
    dense_w = xavier_init((spec.classes, net._out_channels, 1, 1),
                          net._out_channels, rng.split(layer))
    net.head_dense = LayerState(dense_w, np.zeros((1, spec.classes, 1, 1)))
    return net


# -- presets ---------------------------------------------------------------

def preset(name: str, input_hw: int | None = None) -> NetworkSpec:
    """Named architectures.

    mini: 1x64x64 input, light stem, 3 modules (16-24 output channels),
    no aux heads.  faithful: 1x224x224, nine modules, aux heads after
    modules 3 and 6 (weight 0.3); widths are a scaled-down configuration,
    not the original GoogLeNet table.
    """
    if name == "mini":
        hw = 64 if input_hw is None else input_hw
        return NetworkSpec(
            input=(1, hw, hw),
            stem=(PoolSpec("average", (4, 4), (4, 4)),
                  ConvSpec(1, 8, (3, 3), (1, 1), (1, 1)),
                  PoolSpec("max", (2, 2), (2, 2))),
            modules=(InceptionSpec(4, 2, 4, 2, 4, 4),
                     InceptionSpec(4, 2, 4, 2, 4, 4),
                     InceptionSpec(8, 4, 8, 2, 4, 4)),
            downsample_after=(1,),
            aux_after=(),
            head_dropout=0.4,
        )
    if name == "faithful":
        hw = 224 if input_hw is None else input_hw
        return NetworkSpec(
            input=(1, hw, hw),
            stem=(ConvSpec(1, 16, (7, 7), (1, 1), (3, 3)),
                  PoolSpec("max", (2, 2), (2, 2)),
                  ConvSpec(16, 16, (1, 1)),
                  ConvSpec(16, 48, (3, 3), (1, 1), (1, 1)),
                  PoolSpec("max", (2, 2), (2, 2)),
                  PoolSpec("max", (2, 2), (2, 2))),
            modules=(InceptionSpec(16, 24, 32, 4, 8, 8),
                     InceptionSpec(32, 32, 48, 8, 24, 16),
                     InceptionSpec(48, 24, 52, 4, 12, 16),
                     InceptionSpec(40, 28, 56, 6, 16, 16),
                     InceptionSpec(32, 32, 64, 6, 16, 16),
                     InceptionSpec(28, 36, 72, 8, 16, 16),
                     InceptionSpec(64, 40, 80, 8, 32, 32),
                     InceptionSpec(64, 40, 80, 8, 32, 32),
                     InceptionSpec(96, 48, 96, 12, 32, 32)),
            downsample_after=(2, 7),
            aux_after=(3, 6),
            aux_weight=0.3,
            head_dropout=0.4,
        )
    raise ValueError(f"unknown preset {name!r}")


# -- checkpoint serialization ---------------------------------------------

def _spec_to_jsonable(spec: NetworkSpec) -> dict:
    def stem_item(it):
        if isinstance(it, ConvSpec):
            return {"kind": "conv", "in": it.in_channels, "out": it.out_channels,
                    "kernel": list(it.kernel), "stride": list(it.stride),
                    "pad": list(it.pad)}
        return {"kind": "pool", "pool": it.kind, "window": list(it.window),
                "stride": list(it.stride), "pad": list(it.pad)}

    return {
        "input": list(spec.input),
        "stem": [stem_item(it) for it in spec.stem],
        "modules": [[m.b1, m.b3r, m.b3, m.b5r, m.b5, m.pp] for m in spec.modules],
        "downsample_after": list(spec.downsample_after),
        "aux_after": list(spec.aux_after),
        "aux_weight": spec.aux_weight,
        "aux_channels": spec.aux_channels,
        "head_dropout": spec.head_dropout,
        "classes": spec.classes,
    }


def _spec_from_jsonable(d: dict) -> NetworkSpec:
    def stem_item(it):
        if it["kind"] == "conv":
            return ConvSpec(it["in"], it["out"], tuple(it["kernel"]),
                            tuple(it["stride"]), tuple(it["pad"]))
        return PoolSpec(it["pool"], tuple(it["window"]), tuple(it["stride"]),
                        tuple(it["pad"]))

    return NetworkSpec(
        input=tuple(d["input"]),
        stem=tuple(stem_item(it) for it in d["stem"]),
        modules=tuple(InceptionSpec(*m) for m in d["modules"]),
        downsample_after=tuple(d["downsample_after"]),
        aux_after=tuple(d["aux_after"]),
        aux_weight=d["aux_weight"],
        aux_channels=d["aux_channels"],
        head_dropout=d["head_dropout"],
        classes=d["classes"],
    )


def save_checkpoint(net: Network, path) -> None:
    """Header (magic, version, canonical spec JSON) + float64 LE parameter buffers."""
    blob = json.dumps(_spec_to_jsonable(net.spec), sort_keys=True,
                      separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for st in net.parameter_states():
            f.write(np.ascontiguousarray(st.weights, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(st.bias, dtype="<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not an abstractnet checkpoint")
        version, blob_len = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        spec = _spec_from_jsonable(json.loads(f.read(blob_len).decode()))
        net = build_network(spec, SeededRng(0))
        for st in net.parameter_states():
            for arr in (st.weights, st.bias):
                raw = f.read(arr.size * 8)
                if len(raw) != arr.size * 8:
                    raise ValueError(f"{path}: truncated parameter buffer")
                arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
    return net
