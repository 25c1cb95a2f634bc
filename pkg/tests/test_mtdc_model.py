import numpy as np
import pytest

from conftest import (
    CAPACITANCE,
    POST_INJECTIONS,
    VNOM,
    random_connected_topology,
    random_params,
)

from mtdcgrid import (
    ConverterParams,
    GridTopology,
    NetworkState,
    ValidationError,
    assemble_distributed_loop,
    assemble_droop_loop,
    assemble_open_loop,
    controlled_current,
    equilibrium_state,
    hurwitz_check,
)


def _params(n, cap=1.0, gain=1.0, vnom=100.0):
    return ConverterParams(
        capacitance=np.full(n, cap), droop_gain=np.full(n, gain), nominal_voltage=vnom
    )


def test_open_loop_single_capacitor():
    A, b = assemble_open_loop(GridTopology(1), _params(1), [1.0])
    assert A.shape == (1, 1) and A[0, 0] == 0.0
    assert b[0] == 1.0  # dV/dt = 1 V/s for C = 1 F, I = 1 A


def test_open_loop_constant_voltage_is_stationary(ring_topology, ring_params):
    A, b = assemble_open_loop(ring_topology, ring_params, np.zeros(4))
    assert np.abs(b).max() == 0.0
    assert np.abs(A @ (123.4 * np.ones(4))).max() < 1e-9 * np.abs(A).max()


def test_open_loop_paper_diagonal(ring_topology, ring_params):
    A, _ = assemble_open_loop(ring_topology, ring_params, np.zeros(4))
    expected = -(1.0 / 0.0154 + 1.0 / 0.0015) / CAPACITANCE  # about -5.91e6 1/s
    assert np.allclose(np.diag(A), expected, rtol=1e-12)
    assert expected == pytest.approx(-5.91e6, rel=1e-3)


def test_positive_gains_required():
    with pytest.raises(ValidationError):
        _params(2, gain=0.0)
    with pytest.raises(ValidationError):
        ConverterParams(
            capacitance=np.array([1.0, -1.0]),
            droop_gain=np.array([1.0, 1.0]),
            nominal_voltage=100.0,
        )


def test_droop_equilibrium_is_nominal_without_injections(ring_topology, ring_params):
    system = assemble_droop_loop(ring_topology, ring_params, np.zeros(4))
    V = equilibrium_state(system)
    assert np.abs(V - VNOM).max() < 1e-9 * VNOM


def test_droop_two_node_equilibrium():
    # R = 1 ohm, K^P = 1 S, Vnom = 100 V, Iinj = (1, -1) A:
    # (L + I) V = (101, 99) has the exact solution (301/3, 299/3)
    topology = GridTopology(2, ((1, 2, 1.0),))
    system = assemble_droop_loop(topology, _params(2), [1.0, -1.0])
    V = equilibrium_state(system)
    assert V == pytest.approx([301.0 / 3.0, 299.0 / 3.0], rel=1e-12)
    u = system.output_current(V)
    assert u == pytest.approx([-1.0 / 3.0, 1.0 / 3.0], rel=1e-12)


def test_droop_matrix_matches_definition():
    rng = np.random.default_rng(11)
    topology = random_connected_topology(rng, 5)
    params = random_params(rng, 5)
    injections = rng.uniform(-50, 50, 5)
    system = assemble_droop_loop(topology, params, injections)
    from mtdcgrid import build_laplacian

    cinv = np.diag(1.0 / params.capacitance)
    expected_A = -cinv @ (build_laplacian(topology) + np.diag(params.droop_gain))
    expected_b = cinv @ (params.droop_gain * params.nominal_voltage + injections)
    assert np.allclose(system.state_matrix, expected_A, rtol=1e-12)
    assert np.allclose(system.forcing, expected_b, rtol=1e-12)


def test_distributed_loop_shape_and_rank(ring_topology, ring_params):
    system = assemble_distributed_loop(
        ring_topology, ring_topology, ring_params, 0.005, np.array(POST_INJECTIONS)
    )
    assert system.state_matrix.shape == (8, 8)
    assert system.forcing.shape == (8,)
    smallest_singular = np.linalg.svd(system.state_matrix, compute_uv=False).min()
    assert smallest_singular > 0.0


def test_distributed_equilibrium_pins_regulator_voltage(ring_topology, ring_params):
    system = assemble_distributed_loop(
        ring_topology, ring_topology, ring_params, 0.005, np.array(POST_INJECTIONS)
    )
    x = equilibrium_state(system)
    _, V = system.split_state(x)
    assert abs(V[0] - VNOM) < 1e-6


def test_distributed_offset_and_sharing_identities():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        topology = random_connected_topology(rng, n)
        comm = random_connected_topology(rng, n)
        params = random_params(rng, n)
        injections = rng.uniform(-100, 100, n)
        system = assemble_distributed_loop(topology, comm, params, rng.uniform(0.01, 1.0), injections)
        x = equilibrium_state(system)
        Vhat, V = system.split_state(x)
        offset = Vhat - V
        k = -injections.sum() / params.droop_gain.sum()
        scale = max(1.0, abs(k))
        assert offset.max() - offset.min() < 1e-9 * scale  # constant offset vector
        assert np.abs(offset - k).max() < 1e-7 * scale
        u = system.output_current(x)
        assert np.abs(u - k * params.droop_gain).max() < 1e-7 * np.abs(u).max() + 1e-9


def test_distributed_loop_validation(ring_topology, ring_params):
    with pytest.raises(ValidationError):
        assemble_distributed_loop(ring_topology, ring_topology, ring_params, 0.0, np.zeros(4))
    with pytest.raises(ValidationError):
        assemble_distributed_loop(
            ring_topology, GridTopology(3, ((1, 2, 1.0), (2, 3, 1.0))), ring_params, 0.1, np.zeros(4)
        )
    with pytest.raises(ValidationError):
        assemble_droop_loop(ring_topology, ring_params, np.zeros(3))


def test_controlled_current_forms():
    params = _params(2, gain=10.0, vnom=100.0)
    at_nominal = NetworkState(V=np.full(2, 100.0))
    assert np.abs(controlled_current(params, at_nominal, "droop")).max() == 0.0
    matched = NetworkState(V=np.full(2, 90.0), Vhat=np.full(2, 90.0))
    assert np.abs(controlled_current(params, matched, "distributed")).max() == 0.0
    spread = NetworkState(V=np.full(2, 90.0), Vhat=np.full(2, 95.0))
    assert controlled_current(params, spread, "distributed") == pytest.approx([50.0, 50.0])
    with pytest.raises(ValidationError):
        controlled_current(params, at_nominal, "distributed")  # Vhat missing
    with pytest.raises(ValidationError):
        controlled_current(params, at_nominal, "bang-bang")


def test_droop_loop_always_hurwitz():
    rng = np.random.default_rng(23)
    for _ in range(25):
        n = int(rng.integers(2, 9))
        system = assemble_droop_loop(
            random_connected_topology(rng, n), random_params(rng, n), rng.uniform(-100, 100, n)
        )
        abscissa, hurwitz = hurwitz_check(system.state_matrix)
        assert hurwitz, f"droop loop not Hurwitz (abscissa {abscissa})"


def test_droop_current_balance_identity():
    rng = np.random.default_rng(29)
    for _ in range(25):
        n = int(rng.integers(2, 9))
        injections = rng.uniform(-100, 100, n)
        system = assemble_droop_loop(
            random_connected_topology(rng, n), random_params(rng, n), injections
        )
        V = equilibrium_state(system)
        u = system.output_current(V)
        assert abs((u + injections).sum()) < 1e-9 * np.abs(injections).sum()
