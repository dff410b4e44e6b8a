import numpy as np
import pytest

from abstractnet import network
from abstractnet.layers import ConvSpec, SpecError
from abstractnet.network import (InceptionSpec, NetworkSpec, build_network,
                                 load_checkpoint, preset, save_checkpoint)
from abstractnet.tensor import SeededRng, ShapeError

from _oracles import fd_grad, rel_err


def _mini16():
    return build_network(preset("mini", input_hw=16), SeededRng(5))


# -- specs -----------------------------------------------------------------

def test_inception_spec_channels():
    m = InceptionSpec(4, 2, 4, 2, 4, 4)
    assert m.out_channels == 4 + 4 + 4 + 4
    with pytest.raises(SpecError):
        InceptionSpec(0, 1, 1, 1, 1, 1)


def test_network_spec_validates_indices():
    mods = (InceptionSpec(1, 1, 1, 1, 1, 1),) * 3
    with pytest.raises(SpecError):
        NetworkSpec((1, 8, 8), (), mods, aux_after=(3,))  # aux after last module
    with pytest.raises(SpecError):
        NetworkSpec((1, 8, 8), (), mods, downsample_after=(4,))
    with pytest.raises(SpecError):
        NetworkSpec((1, 8, 8), (), ())


def test_plan_rejects_stem_channel_mismatch():
    spec = NetworkSpec((1, 8, 8), (ConvSpec(3, 4, (3, 3), (1, 1), (1, 1)),),
                       (InceptionSpec(1, 1, 1, 1, 1, 1),))
    with pytest.raises(SpecError):
        network.Network(spec)


def test_plan_rejects_inexact_downsample():
    # 7x7 stream cannot be halved by a 2x2/s2 pool
    spec = NetworkSpec((1, 7, 7), (), (InceptionSpec(1, 1, 1, 1, 1, 1),),
                       downsample_after=(1,))
    with pytest.raises(SpecError):
        network.Network(spec)


# -- presets and building --------------------------------------------------

def test_mini_preset_builds_and_has_expected_layer_count():
    net = _mini16()
    # 1 stem conv + 3 modules x 6 branch convs + head dense
    assert len(net.parameter_states()) == 1 + 18 + 1
    for st in net.parameter_states():
        assert np.all(st.bias == 0.0)
        assert np.all(st.grad_weights == 0.0)


def test_faithful_preset_plans():
    net = build_network(preset("faithful", input_hw=32), SeededRng(1))
    # 3 stem convs + 9 x 6 branches + 2 aux heads x 2 + head dense
    assert len(net.parameter_states()) == 3 + 54 + 4 + 1


def test_unknown_preset_rejected():
    with pytest.raises(ValueError):
        preset("midi")


def test_build_is_deterministic():
    a, b = _mini16(), _mini16()
    for sa, sb in zip(a.parameter_states(), b.parameter_states()):
        assert np.array_equal(sa.weights, sb.weights)


# -- forward / backward ----------------------------------------------------

def test_forward_output_shapes_and_determinism():
    net = _mini16()
    x = SeededRng(6).uniform((3, 1, 16, 16), 0.0, 1.0)
    logits, aux, _ = net.forward(x, mode="eval")
    assert logits.shape == (3, 2, 1, 1)
    assert aux == []  # mini has no aux heads
    logits2, _, _ = net.forward(x, mode="eval")
    assert np.array_equal(logits, logits2)


def test_forward_rejects_wrong_input_shape():
    net = _mini16()
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 1, 8, 8)), mode="eval")


def test_train_forward_requires_rng():
    net = _mini16()
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 1, 16, 16)), mode="train")


def test_backward_requires_train_cache():
    net = _mini16()
    _, _, cache = net.forward(np.zeros((1, 1, 16, 16)), mode="eval")
    with pytest.raises(RuntimeError):
        net.backward(cache, np.array([0]))


def test_aux_heads_fire_in_train_mode_only():
    spec = NetworkSpec((1, 8, 8), (),
                       (InceptionSpec(2, 1, 2, 1, 2, 2),
                        InceptionSpec(2, 1, 2, 1, 2, 2)),
                       aux_after=(1,), head_dropout=0.0)
    net = build_network(spec, SeededRng(2))
    x = SeededRng(3).uniform((2, 1, 8, 8))
    _, aux_eval, _ = net.forward(x, mode="eval")
    assert aux_eval == []
    _, aux_train, cache = net.forward(x, mode="train", rng=SeededRng(4))
    assert len(aux_train) == 1 and aux_train[0].shape == (2, 2, 1, 1)
    # total loss includes the weighted aux term
    labels = np.array([0, 1])
    total = net.backward(cache, labels)
    from abstractnet.layers import softmax_xent
    main = softmax_xent(cache["head"]["logits"], labels)[0]
    aux = softmax_xent(aux_train[0], labels)[0]
    assert abs(total - (main + spec.aux_weight * aux)) < 1e-12


def test_small_network_gradients_match_finite_differences():
    # one-module net with aux-free head; biases jittered off the ReLU kink
    spec = NetworkSpec((1, 8, 8), (ConvSpec(1, 2, (3, 3), (1, 1), (1, 1)),),
                       (InceptionSpec(2, 1, 2, 1, 2, 2),), head_dropout=0.0)
    net = build_network(spec, SeededRng(7))
    jit = SeededRng(8)
    for li, st in enumerate(net.parameter_states()):
        st.bias += jit.split(li).uniform(st.bias.shape, 0.05, 0.3)
    x = SeededRng(9).uniform((2, 1, 8, 8), -1.0, 1.0)
    labels = np.array([0, 1])

    def loss():
        _, _, cache = net.forward(x, mode="train", rng=SeededRng(1))
        return net.backward(cache, labels)

    for st in net.parameter_states():
        st.zero_grad()
    loss()
    # snapshot every analytic gradient before any FD evaluation: loss()
    # itself runs backward and would keep accumulating into the slots
    analytic = [(st.grad_weights.copy(), st.grad_bias.copy())
                for st in net.parameter_states()]
    worst = 0.0
    for st, (gw, gb) in zip(net.parameter_states(), analytic):
        worst = max(worst, rel_err(gw, fd_grad(loss, st.weights)))
        worst = max(worst, rel_err(gb, fd_grad(loss, st.bias)))
    assert worst <= 1e-4


# -- checkpoints -----------------------------------------------------------

def test_checkpoint_roundtrip_preserves_weights_and_outputs(tmp_path):
    net = _mini16()
    # make parameters non-trivial
    jit = SeededRng(10)
    for li, st in enumerate(net.parameter_states()):
        st.bias += jit.split(li).uniform(st.bias.shape, -0.1, 0.1)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.spec == net.spec
    for sa, sb in zip(net.parameter_states(), back.parameter_states()):
        assert np.array_equal(sa.weights, sb.weights)
        assert np.array_equal(sa.bias, sb.bias)
    x = SeededRng(11).uniform((2, 1, 16, 16))
    assert np.array_equal(net.forward(x)[0], back.forward(x)[0])


def test_checkpoint_bytes_are_deterministic(tmp_path):
    net = _mini16()
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(net, p1)
    save_checkpoint(net, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes()[:4] == b"ANCK"


def test_checkpoint_rejects_garbage_and_truncation(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        load_checkpoint(bad)
    net = _mini16()
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ValueError):
        load_checkpoint(path)
