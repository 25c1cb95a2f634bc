import numpy as np
import pytest

import mtdcgrid as m

# four-terminal benchmark constants used by several test modules
RING_RESISTANCES = {(1, 2): 0.0154, (1, 3): 0.0015, (2, 4): 0.0015, (3, 4): 0.0154}
CAPACITANCE = 123.79e-6
DROOP_GAIN = 10.0
GAMMA = 0.005
VNOM = 1e5
PRE_INJECTIONS = (300.0, 200.0, -100.0, -400.0)
POST_INJECTIONS = (300.0, 200.0, -300.0, -400.0)


@pytest.fixture(scope="session")
def paper_doc():
    return m.preset("paper_4term")


@pytest.fixture(scope="session")
def ring_topology():
    return m.GridTopology(4, tuple((i, j, 1.0 / r) for (i, j), r in RING_RESISTANCES.items()))


@pytest.fixture(scope="session")
def ring_params():
    return m.ConverterParams(
        capacitance=np.full(4, CAPACITANCE),
        droop_gain=np.full(4, DROOP_GAIN),
        nominal_voltage=VNOM,
        regulator_node=1,
    )


def random_connected_topology(rng, n, extra_edge_prob=0.35, w_lo=0.1, w_hi=10.0):
    """Random spanning tree plus extra edges, log-uniform positive weights."""
    order = rng.permutation(n) + 1
    edges = [
        (int(a), int(b), float(np.exp(rng.uniform(np.log(w_lo), np.log(w_hi)))))
        for a, b in zip(order, order[1:])
    ]
    existing = {(min(i, j), max(i, j)) for i, j, _ in edges}
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if (i, j) not in existing and rng.random() < extra_edge_prob:
                edges.append((i, j, float(np.exp(rng.uniform(np.log(w_lo), np.log(w_hi))))))
    return m.GridTopology(n, tuple(edges))


def random_params(rng, n, uniform_gain=False):
    gain = rng.uniform(0.5, 50.0) if uniform_gain else rng.uniform(0.5, 50.0, n)
    return m.ConverterParams(
        capacitance=np.exp(rng.uniform(np.log(1e-5), np.log(1e-2), n)),
        droop_gain=np.broadcast_to(gain, (n,)).copy(),
        nominal_voltage=float(rng.uniform(1e3, 2e5)),
        regulator_node=int(rng.integers(1, n + 1)),
    )
