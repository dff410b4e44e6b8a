"""Train the mini network on one family and test it on another.

A single short run of the rect -> ellipse transfer task: train on filled
rectangles, evaluate on filled ellipses, save a checkpoint, reload it and
confirm the reloaded network scores identically.
"""

from abstractnet import experiment, network, optim, shapes
from abstractnet.optim import OptimConfig, TrainConfig
from abstractnet.shapes import ShapeFamily
from abstractnet.tensor import SeededRng

rng = SeededRng(2023)

train_ds = shapes.generate_dataset(ShapeFamily.FILLED_RECT, n_per_class=50,
                                   base_seed=rng.split(0).key)
test_ds = shapes.generate_dataset(ShapeFamily.FILLED_ELLIPSE, n_per_class=100,
                                  base_seed=rng.split(1).key)
print(f"train: {len(train_ds.labels)} filled rectangles, "
      f"test: {len(test_ds.labels)} filled ellipses")

net = network.build_network(network.preset("mini"), rng.split(2))
net, trace = optim.train(net, 1.0 - train_ds.images, train_ds.labels,
                         OptimConfig(method="adagrad", base_lr=0.01),
                         TrainConfig(iterations=300, loss_report_every=50),
                         rng.split(3))
for it, loss in trace:
    print(f"iteration {it:4d}: loss {loss:.5f}")

acc = experiment.evaluate_accuracy(net, test_ds.images, test_ds.labels)
print(f"cross-family accuracy: {acc:.3f}")

network.save_checkpoint(net, "demo_output_net.ckpt")
reloaded = network.load_checkpoint("demo_output_net.ckpt")
acc2 = experiment.evaluate_accuracy(reloaded, test_ds.images, test_ds.labels)
print(f"reloaded checkpoint accuracy: {acc2:.3f} "
      f"({'identical' if acc2 == acc else 'MISMATCH'})")
