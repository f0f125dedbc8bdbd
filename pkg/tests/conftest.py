import numpy as np
import pytest

import attackbench as ab


@pytest.fixture(scope="session")
def linear_net():
    """1-D input, 2 classes, logits (2x, -2x): the hand-traceable victim."""
    return ab.DenseNetwork((ab.Layer(np.array([[2.0], [-2.0]]), np.zeros(2)),))


@pytest.fixture(scope="session")
def blob_data():
    return ab.generate_blobs(2, 100, 2, 0.05, 0)


@pytest.fixture(scope="session")
def blob_victim(blob_data):
    """Linear 2-class victim trained on the blobs; fits them perfectly."""
    net = ab.init_network([2, 2], seed=0)
    net, acc = ab.train_sgd(net, blob_data.examples, blob_data.labels,
                            epochs=20, lr=0.5, batch_size=32, seed=0)
    assert acc >= 0.95
    return net
