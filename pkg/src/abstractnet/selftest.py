"""Built-in verification: gradient checks and oracle suites.

Run via `abstractnet selftest`; exits nonzero on any failure.  Everything
here is independent of the fast implementations it checks: convolution is
compared against a six-nested-loop direct computation, optimizers against
hand-computed update traces, and every backward pass against central
finite differences.
"""

from __future__ import annotations

import numpy as np

from . import layers, network, optim, shapes
from .gradcheck import finite_difference, max_rel_error
from .layers import ConvSpec, LayerState, PoolSpec
from .tensor import SeededRng


def direct_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                stride, pad) -> np.ndarray:
    """Reference cross-correlation: six nested loops, no vectorization."""
    n, c, h, wid = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = pad
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wid + 2 * pw - kw) // sw + 1
    xp = np.zeros((n, c, h + 2 * ph, wid + 2 * pw))
    xp[:, :, ph:ph + h, pw:pw + wid] = x
    y = np.zeros((n, o, oh, ow))
    for ni in range(n):
        for oi in range(o):
            for r in range(oh):
                for cc in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[ni, ci, r * sh + i, cc * sw + j] \
                                    * w[oi, ci, i, j]
                    y[ni, oi, r, cc] = acc + b[0, oi, 0, 0]
    return y


def _report(name: str, ok: bool, detail: str = "") -> bool:
    tag = "ok  " if ok else "FAIL"
    print(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
    return ok


def check_conv_oracle_grid(tol: float = 1e-12) -> bool:
    rng = SeededRng(7)
    worst = 0.0
    case = 0
    for k in (1, 3, 5):
        for s in (1, 2):
            for p in (0, 1, 2):
                for c in (1, 3):
                    # pick the smallest input size >= k that tiles exactly
                    h = next(sz for sz in range(max(k - 2 * p, 1), 24)
                             if sz + 2 * p >= k and (sz + 2 * p - k) % s == 0)
                    x = rng.split(case, 0).uniform((2, c, h, h), -1.0, 1.0)
                    spec = ConvSpec(c, 2, (k, k), (s, s), (p, p))
                    w = rng.split(case, 1).uniform((2, c, k, k), -1.0, 1.0)
                    b = rng.split(case, 2).uniform((1, 2, 1, 1), -1.0, 1.0)
                    st = LayerState(w, b)
                    got = layers.conv_forward(x, spec, st)
                    want = direct_conv(x, w, b, (s, s), (p, p))
                    worst = max(worst, float(np.abs(got - want).max()))
                    case += 1
    return _report("conv forward vs direct-loop oracle grid", worst <= tol,
                   f"max abs err {worst:.3e} over {case} cases (tol {tol})")


def _loss_grad_check(name: str, forward, backward, params: list[np.ndarray],
                     tol: float = 1e-4) -> bool:
    """forward() -> scalar; backward() -> analytic grads matching params."""
    analytic = backward()
    ok = True
    worst = 0.0
    for p, g in zip(params, analytic):
        num = finite_difference(forward, p)
        err = max_rel_error(g, num)
        worst = max(worst, err)
        ok = ok and err <= tol
    return _report(f"gradient check: {name}", ok, f"max rel err {worst:.3e} (tol {tol})")


def check_layer_gradients() -> bool:
    rng = SeededRng(99)
    ok = True

    # conv: weights, bias, input
    x = rng.split(0).uniform((1, 2, 5, 5), -1.0, 1.0)
    spec = ConvSpec(2, 3, (3, 3), (1, 1), (1, 1))
    st = LayerState(rng.split(1).uniform((3, 2, 3, 3), -1.0, 1.0),
                    rng.split(2).uniform((1, 3, 1, 1), -0.5, 0.5))
    dy = rng.split(3).uniform((1, 3, 5, 5), -1.0, 1.0)

    def conv_loss():
        return float((layers.conv_forward(x, spec, st) * dy).sum())

    def conv_grads():
        st.zero_grad()
        dx = layers.conv_backward(x, dy, spec, st)
        return [st.grad_weights.copy(), st.grad_bias.copy(), dx]

    ok &= _loss_grad_check("conv (w, b, x)", conv_loss, conv_grads,
                           [st.weights, st.bias, x])

    # max pool (jittered, distinct values) and average pool
    for ki, kind in enumerate(("max", "average")):
        px = rng.split(10, ki).uniform((1, 2, 6, 6), -1.0, 1.0)
        px += np.arange(px.size).reshape(px.shape) * 1e-3  # break ties
        pspec = PoolSpec(kind, (2, 2), (2, 2))
        pdy = rng.split(11, ki).uniform((1, 2, 3, 3), -1.0, 1.0)

        def pool_loss(px=px, pspec=pspec, pdy=pdy):
            y, _ = layers.pool_forward(px, pspec)
            return float((y * pdy).sum())

        def pool_grads(px=px, pspec=pspec, pdy=pdy):
            _, cache = layers.pool_forward(px, pspec)
            return [layers.pool_backward(pdy, pspec, cache)]

        ok &= _loss_grad_check(f"{kind} pool (x)", pool_loss, pool_grads, [px])

    # relu, jittered away from 0
    rx = rng.split(20).uniform((1, 1, 4, 4), -1.0, 1.0)
    rx[np.abs(rx) < 1e-3] += 0.01
    rdy = rng.split(21).uniform((1, 1, 4, 4), -1.0, 1.0)
    ok &= _loss_grad_check(
        "relu (x)",
        lambda: float((layers.relu(rx) * rdy).sum()),
        lambda: [layers.relu_backward(rx, rdy)],
        [rx])

    # dense
    dx_in = rng.split(30).uniform((2, 6, 1, 1), -1.0, 1.0)
    dst = LayerState(rng.split(31).uniform((3, 6, 1, 1), -1.0, 1.0),
                     rng.split(32).uniform((1, 3, 1, 1), -0.5, 0.5))
    ddy = rng.split(33).uniform((2, 3, 1, 1), -1.0, 1.0)

    def dense_loss():
        return float((layers.dense_forward(dx_in, dst) * ddy).sum())

    def dense_grads():
        dst.zero_grad()
        dxx = layers.dense_backward(dx_in, ddy, dst)
        return [dst.grad_weights.copy(), dst.grad_bias.copy(), dxx]

    ok &= _loss_grad_check("dense (w, b, x)", dense_loss, dense_grads,
                           [dst.weights, dst.bias, dx_in])

    # softmax cross-entropy (tighter tolerance; it is nearly linear)
    logits = rng.split(40).uniform((3, 2, 1, 1), -1.0, 1.0)
    labels = np.array([0, 1, 1])

    def xent_loss():
        return layers.softmax_xent(logits, labels)[0]

    def xent_grads():
        return [layers.softmax_xent(logits, labels)[1]]

    ok &= _loss_grad_check("softmax cross-entropy (logits)", xent_loss,
                           xent_grads, [logits], tol=1e-6)
    return bool(ok)


def check_full_network(tol: float = 1e-3) -> bool:
    """FD check of every parameter of the mini preset on a 16x16 input."""
    spec = network.preset("mini", input_hw=16)
    net = network.build_network(spec, SeededRng(5))
    # jitter biases off zero: fresh-init biases put ReLU pre-activations
    # exactly at the kink where finite differences are undefined
    jit = SeededRng(8)
    for li, st in enumerate(net.parameter_states()):
        st.bias += jit.split(li).uniform(st.bias.shape, 0.05, 0.3)
    rng_x = SeededRng(6)
    x = rng_x.uniform((2, 1, 16, 16), -1.0, 1.0)
    labels = np.array([0, 1])

    def loss():
        # fixed rng per call keeps the dropout masks identical across evals
        _, _, cache = net.forward(x, mode="train", rng=SeededRng(77))
        return net.backward(cache, labels)

    def grads():
        for st in net.parameter_states():
            st.zero_grad()
        loss()
        out = []
        for st in net.parameter_states():
            out.append(st.grad_weights.copy())
            out.append(st.grad_bias.copy())
        return out

    params = []
    for st in net.parameter_states():
        params.append(st.weights)
        params.append(st.bias)
    analytic = grads()
    worst = 0.0
    for p, g in zip(params, analytic):
        num = finite_difference(loss, p)
        worst = max(worst, max_rel_error(g, num))
    n_params = sum(p.size for p in params)
    return _report("full mini-network gradient check", worst <= tol,
                   f"max rel err {worst:.3e} over {n_params} parameters (tol {tol})")


def check_optimizer_oracles(tol: float = 1e-12) -> bool:
    ok = True
    # ADAGRAD, two identical unit-gradient steps at lr 0.01
    st = LayerState(np.zeros((1, 1, 1, 1)), np.zeros((1, 1, 1, 1)))
    st.grad_weights[...] = 1.0
    optim.adagrad_step(st, 0.01, 1e-8)
    d1 = float(st.weights[0, 0, 0, 0])
    st.grad_weights[...] = 1.0
    optim.adagrad_step(st, 0.01, 1e-8)
    d2 = float(st.weights[0, 0, 0, 0]) - d1
    want1 = -0.01 / (1.0 + 1e-8)
    want2 = -0.01 / (np.sqrt(2.0) + 1e-8)
    ok &= abs(d1 - want1) <= tol and abs(d2 - want2) <= tol
    # SGD momentum, mu 0.9 lr 0.1 unit gradient twice: w shifts -0.1, -0.19
    st = LayerState(np.zeros((1, 1, 1, 1)), np.zeros((1, 1, 1, 1)))
    st.grad_weights[...] = 1.0
    optim.sgd_momentum_step(st, 0.1, 0.9)
    ok &= abs(float(st.weights[0, 0, 0, 0]) + 0.1) <= tol
    st.grad_weights[...] = 1.0
    optim.sgd_momentum_step(st, 0.1, 0.9)
    ok &= abs(float(st.weights[0, 0, 0, 0]) + 0.29) <= tol
    return _report("optimizer two-step hand oracles", bool(ok), f"tol {tol}")


def check_generator_separability(n_per_class: int = 100) -> bool:
    """Reduced-count spot check; the full 1000/class gate lives in the
    acceptance test suite."""
    params = shapes.RenderParams()
    ok = True
    for fam in shapes.ShapeFamily:
        for ci, cls in enumerate(shapes.CLASS_ORDER):
            for i in range(n_per_class):
                seed = shapes.image_seed(1234, ci, i)
                img = shapes.rasterize(shapes.gen_scene(fam, cls, seed, params))
                if shapes.bbox_aspect_class(img, params) is not cls:
                    ok = False
    return _report(f"generator bbox-aspect separability ({n_per_class}/class)",
                   bool(ok))


def run_selftest() -> int:
    checks = [
        check_conv_oracle_grid,
        check_layer_gradients,
        check_full_network,
        check_optimizer_oracles,
        check_generator_separability,
    ]
    failed = sum(0 if c() else 1 for c in checks)
    print("selftest:", "PASS" if failed == 0 else f"{failed} check(s) FAILED")
    return 0 if failed == 0 else 1
