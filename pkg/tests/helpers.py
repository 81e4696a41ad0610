"""Shared builders for test networks and datasets."""

import numpy as np

from snnconv.network import LayerParams, NetworkSpec


def random_dense_net(rng, quant_steps, sizes=None, weight_scale=0.6, bias_scale=0.2):
    """Small random fully-connected net; last layer is the readout."""
    if sizes is None:
        depth = int(rng.integers(3, 6))  # 2..4 weighted layers plus input
        sizes = [int(rng.integers(3, 9)) for _ in range(depth)]
    layers = []
    for i in range(len(sizes) - 1):
        lam = float(rng.uniform(0.5, 2.0)) if i < len(sizes) - 2 else None
        layers.append(LayerParams(
            kind="dense",
            weights=rng.normal(0.0, weight_scale, (sizes[i + 1], sizes[i])),
            bias=rng.normal(0.0, bias_scale, sizes[i + 1]),
            lam=lam,
        ))
    return NetworkSpec(layers=layers, quant_steps=quant_steps,
                       input_shape=(sizes[0],))


def positive_dense_net(rng, quant_steps, sizes=(4, 5, 3)):
    """Net with non-negative weights and biases: residuals never go negative."""
    layers = []
    for i in range(len(sizes) - 1):
        lam = 1.0 if i < len(sizes) - 2 else None
        layers.append(LayerParams(
            kind="dense",
            weights=rng.uniform(0.0, 0.4, (sizes[i + 1], sizes[i])),
            bias=rng.uniform(0.0, 0.1, sizes[i + 1]),
            lam=lam,
        ))
    return NetworkSpec(layers=layers, quant_steps=quant_steps,
                       input_shape=(sizes[0],))


def dense(weights, bias=None, lam=None):
    weights = np.asarray(weights, dtype=np.float64)
    if bias is None:
        bias = np.zeros(weights.shape[0])
    return LayerParams(kind="dense", weights=weights,
                       bias=np.asarray(bias, dtype=np.float64), lam=lam)


def timing_fixture_net():
    """Three-presynaptic-phase fixture exhibiting Case2 and Case3 at stage 2.

    With input [0.6, 0.4, 0.15], L=T=4 and identity first layer, the
    presynaptic neurons fire at steps {1,3}, {2,4} and {4} respectively.
    Stage-2 neuron 0 sees positive current early (over-fires, Case2);
    neuron 1 sees a large positive kick only at the last step (under-fires,
    Case3).
    """
    layers = [
        dense(np.eye(3), lam=1.0),
        dense([[1.1, -0.6, 0.0], [-2.0, 0.0, 6.0]], lam=1.0),
        dense([[1.0, 1.0]]),
    ]
    net = NetworkSpec(layers=layers, quant_steps=4, input_shape=(3,))
    x = np.array([[0.6, 0.4, 0.15]])
    return net, x


def case1_repair_net():
    """Two-phase fixture whose stage-2 neuron over-fires from nothing.

    Input [0.6, 0.4] with L=T=2: presynaptic neuron A fires at step 1,
    B at step 2.  The stage-2 neuron receives +0.6 then -0.6, spikes once,
    and ends with residual -0.5 although its analog activation is 0.
    """
    layers = [
        dense(np.eye(2), lam=1.0),
        dense([[0.6, -0.6]], lam=1.0),
        dense([[1.0]]),
    ]
    net = NetworkSpec(layers=layers, quant_steps=2, input_shape=(2,))
    x = np.array([[0.6, 0.4]])
    return net, x
