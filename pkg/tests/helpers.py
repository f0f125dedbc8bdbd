"""Shared generators and independent oracles for the test suite."""

import numpy as np

import attackbench as ab


def make_net(seed: int, sizes=None) -> ab.DenseNetwork:
    g = np.random.default_rng(seed)
    if sizes is None:
        d = int(g.integers(2, 7))
        h = int(g.integers(3, 9))
        c = int(g.integers(2, 5))
        sizes = [d, h, c]
    return ab.init_network(sizes, seed=seed)


def make_batch(seed: int, n: int, d: int) -> ab.ExampleBatch:
    g = np.random.default_rng(seed + 1000)
    return ab.ExampleBatch(g.uniform(0.0, 1.0, (n, d)).astype(np.float32))


def make_labels(seed: int, n: int, c: int) -> ab.LabelBatch:
    g = np.random.default_rng(seed + 2000)
    return ab.LabelBatch(g.integers(0, c, n))


def perceptron_separates(x: np.ndarray, y: np.ndarray, epochs: int = 500) -> bool:
    """Run the perceptron rule to convergence; True if the data separates."""
    w = np.zeros(x.shape[1] + 1)
    t = np.where(y == 0, -1.0, 1.0)
    for _ in range(epochs):
        mistakes = 0
        for i in range(x.shape[0]):
            s = w[0] + x[i] @ w[1:]
            if s * t[i] <= 0:
                w[0] += t[i]
                w[1:] += t[i] * x[i]
                mistakes += 1
        if mistakes == 0:
            return True
    return False


def boundary_distances(net: ab.DenseNetwork, x: np.ndarray) -> np.ndarray:
    """Distance to the decision boundary of a linear 2-class network."""
    assert len(net.layers) == 1 and net.num_classes == 2
    w = (net.layers[0].weight[0] - net.layers[0].weight[1]).astype(np.float64)
    b = float(net.layers[0].bias[0] - net.layers[0].bias[1])
    return np.abs(x.astype(np.float64) @ w + b) / np.linalg.norm(w)


def margins(net, x: np.ndarray, labels: np.ndarray, targeted: bool = False) -> np.ndarray:
    """Adversarial margin per example from one forward pass."""
    obj = ab.CWObjective(labels, kappa=0.0, targeted=targeted)
    return obj.margins(ab.forward(net, x))
