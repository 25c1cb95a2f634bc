"""Equilibria, spectral stability conditions, limit behaviour and delay search.

Everything here is numerical: Hurwitz checks are dense eigensolves (reporting
the spectral abscissa as the margin), the gain-limit statements are verified
at finite scales, and the critical communication delay is bracketed by
bisection over simulate-and-classify runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, SearchRangeError, ValidationError
from .grid_graph import GridTopology, build_laplacian, spectral_decomposition
from .mtdc_model import ClosedLoopSystem, ConverterParams, equilibrium_state
from .simulator import Scenario, Trajectory, run_scenario

__all__ = [
    "StabilityReport",
    "EquilibriumReport",
    "GainScaleRow",
    "DelaySearchResult",
    "hurwitz_check",
    "droop_equilibrium",
    "distributed_equilibrium",
    "check_condition_8",
    "check_condition_9",
    "stability_report",
    "droop_limits",
    "voltage_bound",
    "classify_diverged",
    "critical_delay_search",
]

# Tolerances for the spectral conditions: the droop/consensus condition must
# be positive beyond rounding; the PSD product condition tolerates -1e-9 of
# the matrix scale.
_COND8_TOL = 1e-12
_COND9_REL_TOL = 1e-9


@dataclass(frozen=True)
class StabilityReport:
    hurwitz: bool
    spectral_abscissa: float
    condition8_value: float
    condition8_holds: bool
    condition9_value: float
    condition9_holds: bool


@dataclass(frozen=True)
class EquilibriumReport:
    """Stationary solution of a closed loop.

    For droop systems Vhat_eq, k and bound_rhs are None. I_tot is the net
    steady current entering the line network, Iinj + u_eq.
    """

    V_eq: np.ndarray
    u_eq: np.ndarray
    I_tot: np.ndarray
    Vhat_eq: np.ndarray | None = None
    k: float | None = None
    bound_rhs: float | None = None


@dataclass(frozen=True)
class GainScaleRow:
    """Droop equilibrium with all droop gains multiplied by `scale`."""

    scale: float
    V_eq: np.ndarray
    u_eq: np.ndarray
    max_voltage_error: float  # max_i |V_eq,i - Vnom|
    max_current_mismatch: float  # max_i |u_eq,i + Iinj_i|
    spread: float  # || V_eq - mean(V_eq) ||_2
    small_gain_error: float  # max_i |u_eq,i - u_shared,i|


@dataclass(frozen=True)
class DelaySearchResult:
    tau_star: float
    stable_tau: float
    unstable_tau: float
    evaluations: tuple

    @property
    def bracket_width(self) -> float:
        return self.unstable_tau - self.stable_tau


def hurwitz_check(A: np.ndarray) -> tuple[float, bool]:
    """Spectral abscissa (max real part) and whether A is Hurwitz."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    try:
        eigenvalues = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    abscissa = float(eigenvalues.real.max())
    return abscissa, abscissa < 0.0


def droop_equilibrium(system: ClosedLoopSystem) -> EquilibriumReport:
    """Stationary droop voltages (L_R + K^P)^-1 (K^P Vnom 1 + Iinj) and currents."""
    if system.layout != "droop":
        raise ValidationError("droop_equilibrium needs a droop-layout system")
    V = equilibrium_state(system)
    u = system.output_current(V)
    return EquilibriumReport(V_eq=V, u_eq=u, I_tot=system.injections + u)


def distributed_equilibrium(system: ClosedLoopSystem) -> EquilibriumReport:
    """Stationary solution of the distributed loop.

    Reports the shared-current scalar k = -(sum Iinj)/(sum K^P), for which
    u_eq = k K^P 1 and Vhat_eq - V_eq = k 1, and the steady-state voltage
    bound radius 2 max|I_tot| sum_{i>=2} 1/lambda_i(L_R).
    """
    if system.layout != "distributed":
        raise ValidationError("distributed_equilibrium needs a distributed-layout system")
    x = equilibrium_state(system)
    Vhat, V = system.split_state(x)
    u = system.output_current(x)
    I_tot = system.injections + u
    k = -float(system.injections.sum() / system.params.droop_gain.sum())
    pairs = spectral_decomposition(build_laplacian(system.topology))
    rhs = 2.0 * np.abs(I_tot).max() * sum(1.0 / lam for lam, _ in pairs[1:])
    return EquilibriumReport(V_eq=V, u_eq=u, I_tot=I_tot, Vhat_eq=Vhat, k=k, bound_rhs=float(rhs))


def _symmetrized_min_eig(M: np.ndarray) -> float:
    S = M + M.T
    return float(np.linalg.eigvalsh(S).min())


def check_condition_8(
    topology_R: GridTopology,
    topology_C: GridTopology,
    params: ConverterParams,
    gamma: float,
) -> tuple[float, bool]:
    """First sufficient stability condition for the distributed loop.

    value = 1/2 lambda_min((K^P)^-1 L_R + L_R (K^P)^-1) + 1
          + gamma/2 lambda_min(L_C (K^P)^-1 C + C (K^P)^-1 L_C)
    with C the diagonal matrix of physical capacitances (the inverse of the
    inverse-capacitance matrix appearing in the vector dynamics). Holds iff
    value is positive beyond rounding.
    """
    if not gamma > 0.0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    L_R = build_laplacian(topology_R)
    L_C = build_laplacian(topology_C)
    kp_inv = np.diag(1.0 / params.droop_gain)
    cap = np.diag(params.capacitance)
    term_lines = 0.5 * _symmetrized_min_eig(L_R @ kp_inv)
    term_comm = 0.5 * gamma * _symmetrized_min_eig(L_C @ kp_inv @ cap)
    value = term_lines + 1.0 + term_comm
    return value, value > _COND8_TOL


def check_condition_9(
    topology_R: GridTopology,
    topology_C: GridTopology,
    params: ConverterParams,
) -> tuple[float, bool]:
    """Second sufficient condition: L_C (K^P)^-1 L_R + L_R (K^P)^-1 L_C is PSD."""
    L_R = build_laplacian(topology_R)
    L_C = build_laplacian(topology_C)
    kp_inv = np.diag(1.0 / params.droop_gain)
    M = L_C @ kp_inv @ L_R
    S = M + M.T
    value = float(np.linalg.eigvalsh(S).min())
    scale = max(1.0, float(np.abs(S).max()))
    return value, value >= -_COND9_REL_TOL * scale


def stability_report(system: ClosedLoopSystem) -> StabilityReport:
    """Hurwitz check plus both spectral conditions for a distributed loop."""
    if system.layout != "distributed":
        raise ValidationError("stability_report needs a distributed-layout system")
    abscissa, hurwitz = hurwitz_check(system.state_matrix)
    c8_value, c8_holds = check_condition_8(
        system.topology, system.comm_topology, system.params, system.gamma
    )
    c9_value, c9_holds = check_condition_9(system.topology, system.comm_topology, system.params)
    return StabilityReport(
        hurwitz=hurwitz,
        spectral_abscissa=abscissa,
        condition8_value=c8_value,
        condition8_holds=c8_holds,
        condition9_value=c9_value,
        condition9_holds=c9_holds,
    )


def droop_limits(
    topology: GridTopology,
    params: ConverterParams,
    injections,
    scales,
) -> list[GainScaleRow]:
    """Droop equilibria across multiplicative gain scales.

    Large scales drive V_eq to Vnom 1 and u_eq to -Iinj; small scales drive
    u_eq to the shared vector -(sum Iinj)/(sum K^P) K^P 1 while the voltage
    level runs away with the sign of sum Iinj (the deviation-from-mean norm
    grows as the scale shrinks whenever sum Iinj is nonzero).
    """
    from .mtdc_model import assemble_droop_loop

    injections = np.asarray(injections, dtype=float)
    shared = -(injections.sum() / params.droop_gain.sum()) * params.droop_gain
    rows = []
    for scale in scales:
        if not scale > 0.0:
            raise ValidationError(f"gain scales must be positive, got {scale}")
        scaled = ConverterParams(
            capacitance=params.capacitance,
            droop_gain=params.droop_gain * scale,
            nominal_voltage=params.nominal_voltage,
            regulator_node=params.regulator_node,
        )
        report = droop_equilibrium(assemble_droop_loop(topology, scaled, injections))
        V, u = report.V_eq, report.u_eq
        rows.append(
            GainScaleRow(
                scale=float(scale),
                V_eq=V,
                u_eq=u,
                max_voltage_error=float(np.abs(V - params.nominal_voltage).max()),
                max_current_mismatch=float(np.abs(u + injections).max()),
                spread=float(np.linalg.norm(V - V.mean())),
                small_gain_error=float(np.abs(u - shared).max()),
            )
        )
    return rows


def voltage_bound(
    system: ClosedLoopSystem, equilibrium: EquilibriumReport
) -> tuple[float, float, bool]:
    """Steady-state voltage deviation bound for the distributed loop.

    lhs = max_i |V_eq,i - Vnom|, rhs = 2 max|I_tot| sum_{i>=2} 1/lambda_i(L_R).
    """
    if system.layout != "distributed":
        raise ValidationError("voltage_bound applies to distributed-layout systems")
    lhs = float(np.abs(equilibrium.V_eq - system.params.nominal_voltage).max())
    if equilibrium.bound_rhs is not None:
        rhs = float(equilibrium.bound_rhs)
    else:
        pairs = spectral_decomposition(build_laplacian(system.topology))
        rhs = float(2.0 * np.abs(equilibrium.I_tot).max() * sum(1.0 / lam for lam, _ in pairs[1:]))
    return lhs, rhs, lhs <= rhs + 1e-9


def classify_diverged(trajectory: Trajectory, V_eq, step_time: float = 0.0) -> bool:
    """Divergence classifier for delay sweeps.

    A run is diverged if the integrator hit the hard voltage cutoff, or if the
    peak deviation from equilibrium over the last 10% of the horizon exceeds
    ten times the peak over the first 10% after the step.
    """
    if trajectory.diverged:
        return True
    V_eq = np.asarray(V_eq, dtype=float)
    deviation = np.abs(trajectory.V - V_eq).max(axis=1)
    t = trajectory.times
    mask_post = t >= step_time - 1e-12
    if not mask_post.any():
        raise ValidationError("trajectory contains no samples after the step")
    t_post = t[mask_post]
    dev_post = deviation[mask_post]
    window = 0.10 * (t_post[-1] - t_post[0])
    head = dev_post[t_post <= t_post[0] + window]
    tail = dev_post[t_post >= t_post[-1] - window]
    return bool(tail.max() > 10.0 * head.max())


def critical_delay_search(
    builder,
    controller,
    scenario: Scenario,
    tau_lo: float = 0.1,
    tau_hi: float = 1.0,
    bracket_width: float = 1e-3,
) -> DelaySearchResult:
    """Bisection bracket of the destabilizing communication delay.

    `builder` maps injections to the distributed ClosedLoopSystem; each probe
    runs the scenario at a candidate delay and classifies the result. The
    endpoints must straddle the boundary (stable at tau_lo, diverged at
    tau_hi), otherwise SearchRangeError is raised.
    """
    if not 0.0 <= tau_lo < tau_hi:
        raise ValidationError(f"need 0 <= tau_lo < tau_hi, got {tau_lo} / {tau_hi}")
    if not bracket_width > 0.0:
        raise ValidationError("bracket width must be positive")

    system_post = builder(scenario.post_step_injections)
    V_eq = distributed_equilibrium(system_post).V_eq

    evaluations = []

    def probe(tau: float) -> bool:
        from dataclasses import replace as _replace

        ctl = _replace(controller, delay=tau) if controller is not None else None
        traj = run_scenario(builder, ctl, scenario.with_delay(tau))
        diverged = classify_diverged(traj, V_eq, scenario.step_time)
        evaluations.append((tau, diverged))
        return diverged

    if probe(tau_lo):
        raise SearchRangeError(f"system already diverges at tau = {tau_lo} s")
    if not probe(tau_hi):
        raise SearchRangeError(f"system still converges at tau = {tau_hi} s")

    lo, hi = tau_lo, tau_hi
    while hi - lo > bracket_width:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return DelaySearchResult(
        tau_star=0.5 * (lo + hi),
        stable_tau=lo,
        unstable_tau=hi,
        evaluations=tuple(evaluations),
    )
