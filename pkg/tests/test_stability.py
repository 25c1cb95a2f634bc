import numpy as np
import pytest

from conftest import (
    POST_INJECTIONS,
    PRE_INJECTIONS,
    VNOM,
    random_connected_topology,
    random_params,
)

from mtdcgrid import (
    ConverterParams,
    GridTopology,
    SearchRangeError,
    Scenario,
    Trajectory,
    ValidationError,
    assemble_distributed_loop,
    assemble_droop_loop,
    check_condition_8,
    check_condition_9,
    classify_diverged,
    critical_delay_search,
    distributed_equilibrium,
    droop_equilibrium,
    droop_limits,
    hurwitz_check,
    stability_report,
    voltage_bound,
)


def test_hurwitz_check_analytic():
    assert hurwitz_check(-np.eye(3)) == (pytest.approx(-1.0), True)
    abscissa, hurwitz = hurwitz_check(np.zeros((2, 2)))
    assert abscissa == pytest.approx(0.0, abs=1e-14)
    assert not hurwitz
    with pytest.raises(ValidationError):
        hurwitz_check(np.zeros((2, 3)))


def test_droop_equilibrium_paper_case(ring_topology, ring_params):
    system = assemble_droop_loop(ring_topology, ring_params, np.array(POST_INJECTIONS))
    report = droop_equilibrium(system)
    # net injection deficit pulls every node below nominal
    assert np.all(report.V_eq < VNOM)
    assert abs((report.u_eq + system.injections).sum()) < 1e-9 * np.abs(system.injections).sum()
    assert np.allclose(report.I_tot, system.injections + report.u_eq)


def test_droop_equilibrium_no_injections(ring_topology, ring_params):
    system = assemble_droop_loop(ring_topology, ring_params, np.zeros(4))
    report = droop_equilibrium(system)
    assert np.abs(report.V_eq - VNOM).max() < 1e-9 * VNOM
    assert np.abs(report.u_eq).max() < 1e-9


def _paper_distributed(ring_topology, ring_params, injections):
    return assemble_distributed_loop(
        ring_topology, ring_topology, ring_params, 0.005, np.asarray(injections, float)
    )


def test_distributed_equilibrium_zero_injections(ring_topology, ring_params):
    system = _paper_distributed(ring_topology, ring_params, np.zeros(4))
    report = distributed_equilibrium(system)
    assert report.k == 0.0
    assert np.abs(report.u_eq).max() < 1e-6
    assert np.abs(report.V_eq - VNOM).max() < 1e-6


def test_distributed_equilibrium_balanced_injections(ring_topology, ring_params):
    # pre-step injections sum to zero: currents are zero but voltages spread
    system = _paper_distributed(ring_topology, ring_params, PRE_INJECTIONS)
    report = distributed_equilibrium(system)
    assert np.abs(report.u_eq).max() < 1e-6
    assert abs(report.V_eq[0] - VNOM) < 1e-6
    assert np.abs(report.V_eq - VNOM).max() > 0.1  # lines carry current


def test_distributed_equilibrium_paper_step(ring_topology, ring_params):
    system = _paper_distributed(ring_topology, ring_params, POST_INJECTIONS)
    report = distributed_equilibrium(system)
    assert report.k == pytest.approx(5.0, rel=1e-12)  # -(-200 A)/(40 S)
    assert np.abs(report.u_eq - 50.0).max() < 1e-6
    assert abs(report.V_eq[0] - VNOM) < 1e-6


def test_distributed_equilibrium_heterogeneous_gains_with_simulation():
    topology = GridTopology(4, ((1, 2, 5.0), (1, 3, 5.0), (2, 4, 5.0), (3, 4, 5.0), (1, 4, 5.0)))
    params = ConverterParams(
        capacitance=np.full(4, 1e-4),
        droop_gain=np.array([1.0, 2.0, 3.0, 4.0]),
        nominal_voltage=1e4,
    )
    injections = np.array([100.0, -100.0, -100.0, -100.0])  # sums to -200 A

    def builder(i):
        return assemble_distributed_loop(topology, topology, params, 0.5, i, regulator_gain=5.0)

    report = distributed_equilibrium(builder(injections))
    assert report.u_eq == pytest.approx([20.0, 40.0, 60.0, 80.0], abs=1e-8)

    from mtdcgrid import DistributedController, run_scenario

    controller = DistributedController(
        droop_gain=params.droop_gain,
        regulator_flag=params.regulator_flag,
        gamma=0.5,
        comm_topology=topology,
        nominal_voltage=1e4,
        regulator_gain=5.0,
    )
    scenario = Scenario(
        pre_step_injections=np.zeros(4), post_step_injections=injections, horizon=15.0
    )
    trajectory = run_scenario(builder, controller, scenario)
    assert np.abs(trajectory.u[-1] - report.u_eq).max() < 1e-3


def test_condition_8_uniform_proportional_case(ring_topology, ring_params):
    value, holds = check_condition_8(ring_topology, ring_topology, ring_params, 0.005)
    assert holds
    assert value == pytest.approx(1.0, abs=1e-9)  # both eigenvalue terms vanish


def test_condition_8_violated_by_large_gamma_mismatch():
    rng = np.random.default_rng(77)
    for _ in range(50):
        n = int(rng.integers(3, 7))
        lines = random_connected_topology(rng, n)
        comm = random_connected_topology(rng, n, w_lo=10.0, w_hi=1000.0)
        params = random_params(rng, n)
        gamma = float(rng.uniform(1e2, 1e5))
        value, holds = check_condition_8(lines, comm, params, gamma)
        if not holds:
            assert value <= 0.0
            return
    pytest.fail("no violating instance found in 50 seeded trials")


def test_condition_9_proportional_topology(ring_topology, ring_params):
    value, holds = check_condition_9(ring_topology, ring_topology.scaled(3.7), ring_params)
    assert holds
    # uniform gains and proportional topologies give (2k/kp) L^2, PSD
    assert value > -1e-6


def test_condition_9_heterogeneous_counterexample():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        n = int(rng.integers(3, 7))
        lines = random_connected_topology(rng, n)
        comm = random_connected_topology(rng, n)
        params = random_params(rng, n)
        value, holds = check_condition_9(lines, comm, params)
        if not holds:
            assert value < 0.0
            return
    pytest.fail("no violating instance found in 50 seeded trials")


def test_stability_report_paper_case(ring_topology, ring_params):
    system = _paper_distributed(ring_topology, ring_params, POST_INJECTIONS)
    report = stability_report(system)
    assert report.condition8_holds and report.condition9_holds
    assert report.hurwitz and report.spectral_abscissa < 0.0


def test_voltage_bound_paper_case(ring_topology, ring_params):
    system = _paper_distributed(ring_topology, ring_params, POST_INJECTIONS)
    eq = distributed_equilibrium(system)
    lhs, rhs, holds = voltage_bound(system, eq)
    assert holds
    assert lhs == pytest.approx(1.22, abs=0.01)
    assert rhs == pytest.approx(6.3934, abs=1e-3)


def test_voltage_bound_two_node_analytic():
    # single line R: lambda_2 = 2/R, I_tot = Iinj (balanced), so
    # rhs = 2 * Imax * R/2 = Imax * R and lhs = |V1 - V2| = Imax * R
    R = 1.0
    topology = GridTopology(2, ((1, 2, 1.0 / R),))
    params = ConverterParams(
        capacitance=np.full(2, 1e-4), droop_gain=np.full(2, 1.0), nominal_voltage=100.0
    )
    system = assemble_distributed_loop(topology, topology, params, 0.1, [1.0, -1.0])
    eq = distributed_equilibrium(system)
    lhs, rhs, holds = voltage_bound(system, eq)
    assert holds
    assert rhs == pytest.approx(1.0, rel=1e-9)
    assert lhs == pytest.approx(1.0, rel=1e-6)


def test_voltage_bound_holds_when_conditions_hold():
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 15:
        n = int(rng.integers(2, 7))
        lines = random_connected_topology(rng, n)
        comm = lines.scaled(float(rng.uniform(0.5, 2.0)))
        params = random_params(rng, n, uniform_gain=True)
        gamma = float(rng.uniform(0.01, 0.5))
        _, holds8 = check_condition_8(lines, comm, params, gamma)
        _, holds9 = check_condition_9(lines, comm, params)
        if not (holds8 and holds9):
            continue
        system = assemble_distributed_loop(lines, comm, params, gamma, rng.uniform(-50, 50, n))
        lhs, rhs, holds = voltage_bound(system, distributed_equilibrium(system))
        assert holds, f"bound violated: lhs {lhs} rhs {rhs}"
        checked += 1


def test_droop_limits_trends(ring_topology, ring_params):
    rows = droop_limits(
        ring_topology, ring_params, np.array(POST_INJECTIONS), (1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6)
    )
    by_scale = sorted(rows, key=lambda r: r.scale)
    # high gain: voltages pinned to nominal, currents cancel the injections
    assert by_scale[-1].max_voltage_error < 1e-3
    assert by_scale[-1].max_current_mismatch < 1e-3 * 400.0
    # low gain: currents settle on the shared profile
    assert by_scale[0].small_gain_error < 1e-3
    # monotone trade-off in both directions
    voltage_errors = [r.max_voltage_error for r in by_scale]
    sharing_errors = [r.small_gain_error for r in by_scale]
    assert all(a > b for a, b in zip(voltage_errors, voltage_errors[1:]))
    assert all(a < b for a, b in zip(sharing_errors, sharing_errors[1:]))
    with pytest.raises(ValidationError):
        droop_limits(ring_topology, ring_params, np.array(POST_INJECTIONS), (0.0,))


def _flat_trajectory(V_eq, horizon=1.0, wiggle=0.0):
    times = np.arange(0.0, horizon, 1e-2)
    V = np.tile(V_eq, (times.size, 1)).astype(float)
    if wiggle:
        V += wiggle * np.linspace(0.0, 1.0, times.size)[:, None] ** 2
    u = np.zeros_like(V)
    return Trajectory(times=times, V=V, u=u)


def test_classify_diverged():
    V_eq = np.array([100.0, 100.0])
    assert not classify_diverged(_flat_trajectory(V_eq), V_eq)
    assert classify_diverged(_flat_trajectory(V_eq, wiggle=5.0), V_eq)
    diverged_flagged = Trajectory(
        times=np.array([0.0, 0.01]),
        V=np.full((2, 2), 100.0),
        u=np.zeros((2, 2)),
        diverged=True,
    )
    assert classify_diverged(diverged_flagged, V_eq)


def test_critical_delay_search_range_errors(paper_doc):
    builder = paper_doc.system_builder()
    controller = paper_doc.build_controller()
    scenario = paper_doc.build_scenario(horizon=6.0)
    with pytest.raises(SearchRangeError):
        # both endpoints comfortably stable
        critical_delay_search(builder, controller, scenario, 0.02, 0.05, bracket_width=0.01)
    with pytest.raises(SearchRangeError):
        # both endpoints deep in the unstable region
        critical_delay_search(builder, controller, scenario, 0.5, 0.9, bracket_width=0.1)
