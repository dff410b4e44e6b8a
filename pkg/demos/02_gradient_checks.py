"""Verify the backpropagation machinery with finite differences.

Builds a small inception network, runs one train-mode forward/backward,
then compares every analytic gradient against central finite differences
of the loss.  This is the same idea the built-in `abstractnet selftest`
command runs at larger scale.
"""

import numpy as np

from abstractnet import network
from abstractnet.gradcheck import finite_difference, max_rel_error
from abstractnet.layers import ConvSpec
from abstractnet.network import InceptionSpec, NetworkSpec
from abstractnet.tensor import SeededRng

spec = NetworkSpec(
    input=(1, 8, 8),
    stem=(ConvSpec(1, 2, (3, 3), (1, 1), (1, 1)),),
    modules=(InceptionSpec(2, 1, 2, 1, 2, 2),),
    head_dropout=0.0,  # deterministic loss makes the check cleaner
)
net = network.build_network(spec, SeededRng(7))

# nudge biases off zero so no ReLU sits exactly at its kink, where the
# analytic derivative and the symmetric difference quotient disagree
jitter = SeededRng(8)
for i, st in enumerate(net.parameter_states()):
    st.bias += jitter.split(i).uniform(st.bias.shape, 0.05, 0.3)

x = SeededRng(9).uniform((2, 1, 8, 8), -1.0, 1.0)
labels = np.array([0, 1])


def loss():
    _, _, cache = net.forward(x, mode="train", rng=SeededRng(1))
    return net.backward(cache, labels)


for st in net.parameter_states():
    st.zero_grad()
loss()
analytic = [(st.grad_weights.copy(), st.grad_bias.copy())
            for st in net.parameter_states()]

worst = 0.0
for st, (gw, gb) in zip(net.parameter_states(), analytic):
    for g, p in ((gw, st.weights), (gb, st.bias)):
        err = max_rel_error(g, finite_difference(loss, p))
        worst = max(worst, err)

print(f"checked {sum(p.weights.size + p.bias.size for p in net.parameter_states())} "
      f"parameters, max relative error {worst:.3e}")
assert worst < 1e-4, "gradient check failed"
print("all gradients match finite differences")
