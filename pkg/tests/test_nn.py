import numpy as np
import pytest

from tlfwi.errors import MissingForwardState, ShapeMismatch
from tlfwi.nn import (AdaptiveSigmoid, BatchNorm2d, Conv2d, MaxPool2d, Network, Node, PReLU,
                      ReplicationPad, Sigmoid, Upsample, generator, init_weights, unet)
from tlfwi.nn.networks import glorot_uniform

from helpers import fd_check_network, rel_err


def single(layer, shape):
    return Network([Node("layer", [layer])], shape)


def randomize(net, rng):
    net.theta[:] = rng.normal(0.0, 0.5, net.theta.size)


LAYER_CASES = [
    ("conv", lambda: Conv2d(2, 3), (2, 5, 4)),
    ("conv-valid", lambda: Conv2d(2, 2, padding=0), (2, 5, 6)),
    ("batchnorm", lambda: BatchNorm2d(3), (3, 4, 4)),
    ("prelu", PReLU, (2, 4, 3)),
    ("sigmoid", Sigmoid, (2, 3, 3)),
    ("adaptive-sigmoid", AdaptiveSigmoid, (2, 3, 3)),
    ("maxpool", MaxPool2d, (2, 4, 6)),
    ("upsample", Upsample, (2, 3, 2)),
    ("replication-pad", ReplicationPad, (2, 3, 4)),
]


@pytest.mark.parametrize("name,make,shape", LAYER_CASES, ids=[c[0] for c in LAYER_CASES])
def test_layer_gradients_match_finite_differences(name, make, shape):
    rng = np.random.default_rng(7)
    net = single(make(), shape)
    randomize(net, rng)
    x = rng.normal(size=(2,) + shape)
    ex, et = fd_check_network(net, x, rng)
    assert ex <= 1e-6
    assert et <= 1e-6


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_modes(train):
    rng = np.random.default_rng(3)
    net = single(BatchNorm2d(2), (2, 3, 3))
    randomize(net, rng)
    bn = net.layers[0]
    bn.running_mean[:] = rng.normal(size=2)
    bn.running_var[:] = rng.uniform(0.5, 2.0, size=2)
    x = rng.normal(size=(3, 2, 3, 3))
    ex, et = fd_check_network(net, x, rng, train=train)
    assert ex <= 1e-6 and et <= 1e-6


def test_miniature_composite():
    rng = np.random.default_rng(11)
    nodes = [
        Node("c1", [Conv2d(1, 3), BatchNorm2d(3), PReLU()]),
        Node("pool", [MaxPool2d()]),
        Node("up", [Upsample(), Conv2d(3, 2)]),
        Node("out", [Conv2d(3, 1), AdaptiveSigmoid()], inputs=(2, -1)),
    ]
    net = Network(nodes, (1, 6, 4))
    randomize(net, rng)
    x = rng.normal(size=(2, 1, 6, 4))
    ex, et = fd_check_network(net, x, rng)
    assert ex <= 1e-6 and et <= 1e-6


def test_small_unet_and_generator():
    rng = np.random.default_rng(5)
    for net, x in ((unet((8, 8), widths=(2, 3)), rng.normal(size=(2, 1, 8, 8))),
                   (generator((8, 8), latent_channels=2, widths=(2, 2)), rng.normal(size=(1, 2, 2, 2)))):
        randomize(net, rng)
        ex, et = fd_check_network(net, x, rng)
        assert ex <= 1e-6 and et <= 1e-6


def test_maxpool_routes_gradient_to_argmax():
    x = np.array([[1.0, 5.0], [3.0, 2.0]]).reshape(1, 1, 2, 2)
    pool = MaxPool2d()
    assert pool.forward(x).item() == 5.0
    dx = pool.backward(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(dx[0, 0], [[0, 1], [0, 0]])


def test_maxpool_ties_pick_first():
    pool = MaxPool2d()
    pool.forward(np.ones((1, 1, 2, 2)))
    dx = pool.backward(np.full((1, 1, 1, 1), 2.0))
    np.testing.assert_array_equal(dx[0, 0], [[2, 0], [0, 0]])


def test_prelu_values():
    p = PReLU()
    p.params[0][0] = 0.25
    np.testing.assert_allclose(p.forward(np.array([-2.0, 0.0, 3.0])), [-0.5, 0.0, 3.0])


def test_backward_without_forward_raises():
    with pytest.raises(MissingForwardState):
        Conv2d(1, 1).backward(np.zeros((1, 1, 3, 3)))
    net = single(Sigmoid(), (1, 2, 2))
    with pytest.raises(MissingForwardState):
        net.backward(np.zeros((1, 1, 2, 2)))


def test_input_shape_checked():
    net = unet((16, 16), widths=(2, 2))
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((1, 1, 16, 8)))
    with pytest.raises(ShapeMismatch):
        unet((20, 16))


def test_glorot_variance():
    rng = np.random.default_rng(0)
    w = glorot_uniform(rng, (64, 32, 3, 3))
    expected = 2.0 / (32 * 9 + 64 * 9)
    assert abs(w.var() / expected - 1.0) < 0.2


def test_init_sets_last_layer_and_defaults():
    net = generator((32, 32), widths=(4, 4, 4, 4, 4))
    init_weights(net, seed=1)
    convs = [l for l in net.layers if isinstance(l, Conv2d)]
    assert np.all(convs[-1].params[1] == 3.0)
    assert abs(convs[-1].params[0].std() - 0.01) < 0.004
    assert all(l.params[0][0] == 0.25 for l in net.layers if isinstance(l, PReLU))
    assert [l.params[0][0] for l in net.layers if isinstance(l, AdaptiveSigmoid)] == [1.0]


def test_init_is_seeded():
    a, b = unet((16, 16), widths=(2, 2)), unet((16, 16), widths=(2, 2))
    np.testing.assert_array_equal(init_weights(a, 4), init_weights(b, 4))
    assert not np.array_equal(init_weights(a, 4), init_weights(b, 5))


def test_flat_parameter_views_share_memory():
    net = unet((16, 16), widths=(2, 2))
    net.theta[:] = 0.5
    assert all(np.all(p == 0.5) for l in net.layers for p in l.params)
    assert rel_err(np.ones(3), np.ones(3)) == 0.0
