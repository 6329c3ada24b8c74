import math

import numpy as np
import pytest

from dhne.hypergraph import Hypergraph, build_adjacency
from dhne.model import DhneDims, DhneParams


def random_instance(seed, max_per_type=4, max_dim=4, n_edges=None, scale=1.0):
    """Small random hypergraph with adjacency and randomized (non-init) parameters."""
    rng = np.random.default_rng(seed)
    counts = [int(rng.integers(2, max_per_type + 1)) for _ in range(3)]
    n_edges = n_edges or int(rng.integers(3, 9))
    edges = [tuple(int(rng.integers(c)) for c in counts) for _ in range(n_edges)]
    g = Hypergraph.from_indices(counts, edges)
    adj = build_adjacency(g)
    d = int(rng.integers(1, max_dim + 1))
    params = DhneParams.initialize(DhneDims(adj.global_size, d), seed)
    params.set_vector(rng.normal(0.0, scale, size=params.to_vector().size))
    return g, adj, params


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def oracle_affine(weight, bias, x, activate=True):
    """Pure-python W x + b (optionally through the logistic function)."""
    out = []
    for i in range(len(bias)):
        z = bias[i]
        for j in range(len(x)):
            z += weight[i][j] * x[j]
        out.append(_sig(z) if activate else z)
    return out


def oracle_item_loss(params, rows, label, alpha):
    """Loss of one batch item, written out scalar by scalar."""
    xs = [oracle_affine(params.encoders[t].weight, params.encoders[t].bias, rows[t]) for t in range(3)]
    l = len(params.second_bias)
    latent = []
    for i in range(l):
        z = params.second_bias[i]
        for t in range(3):
            for j in range(len(xs[t])):
                z += params.second[t][i][j] * xs[t][j]
        latent.append(_sig(z))
    s = oracle_affine(params.out.weight, params.out.bias, latent)[0]
    l1 = -math.log(s) if label == 1 else -math.log(1.0 - s)
    l2 = 0.0
    if label == 1:
        for t in range(3):
            rec = oracle_affine(params.decoders[t].weight, params.decoders[t].bias, xs[t])
            l2 += sum((a - r) ** 2 for a, r in zip(rows[t], rec) if a != 0)
    return l1 + alpha * l2


@pytest.fixture
def instance():
    return random_instance(0)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
