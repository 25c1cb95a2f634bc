"""Converter parameters and assembly of the open- and closed-loop LTI systems.

The converter network obeys C_i dV_i/dt = -sum_j (V_i - V_j)/R_ij + Iinj_i + u_i.
All quantities are strict SI (volts, amperes, farads, siemens, seconds).
Capacitances are stored physically; the diagonal inverse-capacitance matrix is
formed at assembly time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .grid_graph import GridTopology, build_laplacian

__all__ = [
    "DEFAULT_REGULATOR_GAIN",
    "ConverterParams",
    "NetworkState",
    "ClosedLoopSystem",
    "assemble_open_loop",
    "assemble_droop_loop",
    "assemble_distributed_loop",
    "controlled_current",
    "equilibrium_state",
]

# Integral gain (1/s) applied at the single voltage-regulator node. The control
# law only fixes which node regulates; the rate constant is a tuning choice.
# 10 s^-1 reproduces the reference four-terminal behaviour: the regulated
# voltage excursion vanishes within ~2 s and the controlled currents reach
# their shared value within ~8 s.
DEFAULT_REGULATOR_GAIN = 10.0


def _as_node_vector(values, n, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValidationError(f"{name} must have length {n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ConverterParams:
    """Per-node converter data plus the system-wide nominal voltage.

    capacitance : (n,) farads, all > 0
    droop_gain : (n,) siemens, all > 0
    nominal_voltage : volts, > 0
    regulator_node : 1-based index of the single voltage-regulating converter
        (used by the distributed controller only; defaults to node 1)
    """

    capacitance: np.ndarray
    droop_gain: np.ndarray
    nominal_voltage: float
    regulator_node: int = 1

    def __post_init__(self):
        cap = np.atleast_1d(np.asarray(self.capacitance, dtype=float))
        n = cap.shape[0]
        gain = _as_node_vector(self.droop_gain, n, "droop_gain")
        if cap.ndim != 1 or not np.all(cap > 0.0):
            raise ValidationError("capacitances must be a 1-D vector of positive values")
        if not np.all(gain > 0.0):
            raise ValidationError("droop gains must all be strictly positive")
        if not float(self.nominal_voltage) > 0.0:
            raise ValidationError(f"nominal voltage must be positive, got {self.nominal_voltage}")
        if not 1 <= int(self.regulator_node) <= n:
            raise ValidationError(
                f"regulator node {self.regulator_node} outside 1..{n}"
            )
        cap.flags.writeable = False
        gain.flags.writeable = False
        object.__setattr__(self, "capacitance", cap)
        object.__setattr__(self, "droop_gain", gain)
        object.__setattr__(self, "nominal_voltage", float(self.nominal_voltage))
        object.__setattr__(self, "regulator_node", int(self.regulator_node))

    @property
    def n(self) -> int:
        return self.capacitance.shape[0]

    @property
    def regulator_flag(self) -> np.ndarray:
        """0/1 vector with a single 1 at the regulator node."""
        flag = np.zeros(self.n)
        flag[self.regulator_node - 1] = 1.0
        return flag


@dataclass(frozen=True)
class NetworkState:
    """Voltages and, for the distributed controller, internal references."""

    V: np.ndarray
    Vhat: np.ndarray | None = None

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.ndim != 1 or not np.all(np.isfinite(V)):
            raise ValidationError("V must be a finite 1-D vector")
        object.__setattr__(self, "V", V)
        if self.Vhat is not None:
            Vhat = np.asarray(self.Vhat, dtype=float)
            if Vhat.shape != V.shape or not np.all(np.isfinite(Vhat)):
                raise ValidationError("Vhat must be a finite vector matching V")
            object.__setattr__(self, "Vhat", Vhat)


@dataclass(frozen=True)
class ClosedLoopSystem:
    """Assembled LTI closed loop dx/dt = A x + b.

    layout is "droop" (x = V, m = n) or "distributed" (x = (Vhat, V), m = 2n).
    `delay_coupling` holds the m-by-m block acting on the delayed state for the
    distributed controller (zero rows elsewhere); None for droop.
    """

    state_matrix: np.ndarray
    forcing: np.ndarray
    layout: str
    injections: np.ndarray
    topology: GridTopology
    params: ConverterParams
    comm_topology: GridTopology | None = None
    gamma: float | None = None
    regulator_gain: float | None = None
    delay_coupling: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.state_matrix, dtype=float)
        b = np.asarray(self.forcing, dtype=float)
        n = self.params.n
        expected = {"droop": n, "distributed": 2 * n}.get(self.layout)
        if expected is None:
            raise ValidationError(f"unknown layout {self.layout!r}")
        if A.shape != (expected, expected) or b.shape != (expected,):
            raise ValidationError(
                f"layout {self.layout!r} needs A {expected}x{expected} and b ({expected},), "
                f"got {A.shape} and {b.shape}"
            )
        for arr in (A, b):
            arr.flags.writeable = False
        object.__setattr__(self, "state_matrix", A)
        object.__setattr__(self, "forcing", b)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def order(self) -> int:
        return self.state_matrix.shape[0]

    def split_state(self, x):
        """(Vhat, V) for distributed layout, (None, V) for droop."""
        x = np.asarray(x, dtype=float)
        if self.layout == "distributed":
            return x[..., : self.n], x[..., self.n :]
        return None, x

    def output_current(self, x):
        """Controlled injected current u for a state (or array of states)."""
        Vhat, V = self.split_state(x)
        kp = self.params.droop_gain
        if self.layout == "distributed":
            return kp * (Vhat - V)
        return kp * (self.params.nominal_voltage - V)


def assemble_open_loop(topology: GridTopology, params: ConverterParams, injections):
    """Open-loop vector dynamics dV/dt = A V + b with u = 0.

    A = -diag(1/C_i) @ L_R and b = diag(1/C_i) @ Iinj.
    """
    injections = _as_node_vector(injections, params.n, "injections")
    if topology.n != params.n:
        raise ValidationError(
            f"topology has {topology.n} nodes but params describe {params.n}"
        )
    cinv = 1.0 / params.capacitance
    L = build_laplacian(topology)
    A = -cinv[:, None] * L
    b = cinv * injections
    return A, b


def assemble_droop_loop(
    topology: GridTopology, params: ConverterParams, injections
) -> ClosedLoopSystem:
    """Closed loop under proportional droop: dV/dt = -C^-1 (L_R + K^P) V + b."""
    injections = _as_node_vector(injections, params.n, "injections")
    if topology.n != params.n:
        raise ValidationError(
            f"topology has {topology.n} nodes but params describe {params.n}"
        )
    cinv = 1.0 / params.capacitance
    L = build_laplacian(topology)
    kp = params.droop_gain
    A = -cinv[:, None] * (L + np.diag(kp))
    b = cinv * (kp * params.nominal_voltage + injections)
    return ClosedLoopSystem(
        state_matrix=A,
        forcing=b,
        layout="droop",
        injections=injections,
        topology=topology,
        params=params,
    )


def assemble_distributed_loop(
    topology: GridTopology,
    comm_topology: GridTopology,
    params: ConverterParams,
    gamma: float,
    injections,
    regulator_gain: float = DEFAULT_REGULATOR_GAIN,
) -> ClosedLoopSystem:
    """Closed loop under the distributed-averaging controller.

    State x = (Vhat, V) with
        d Vhat/dt = K^V (Vnom 1 - V) - gamma L_C (Vhat - V)
        d V/dt    = C^-1 K^P Vhat - C^-1 (L_R + K^P) V + C^-1 Iinj
    so A = [[-gamma L_C, gamma L_C - K^V], [C^-1 K^P, -C^-1 (L_R + K^P)]]
    and b = (K^V Vnom 1, C^-1 Iinj). K^V = regulator_gain at the single
    regulator node, zero elsewhere.
    """
    n = params.n
    injections = _as_node_vector(injections, n, "injections")
    if topology.n != n or comm_topology.n != n:
        raise ValidationError("line and communication graphs must cover all converters")
    if not gamma > 0.0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    if not regulator_gain > 0.0:
        raise ValidationError(f"regulator gain must be positive, got {regulator_gain}")
    flag = params.regulator_flag
    if flag.sum() != 1.0:
        raise ValidationError("exactly one converter must act as voltage regulator")

    cinv = 1.0 / params.capacitance
    L_R = build_laplacian(topology)
    L_C = build_laplacian(comm_topology)
    kp = params.droop_gain
    KV = np.diag(regulator_gain * flag)

    A = np.block(
        [
            [-gamma * L_C, gamma * L_C - KV],
            [cinv[:, None] * np.diag(kp), -cinv[:, None] * (L_R + np.diag(kp))],
        ]
    )
    b = np.concatenate([regulator_gain * flag * params.nominal_voltage, cinv * injections])

    delay_coupling = np.zeros((2 * n, 2 * n))
    delay_coupling[:n, :n] = -gamma * L_C
    delay_coupling[:n, n:] = gamma * L_C

    return ClosedLoopSystem(
        state_matrix=A,
        forcing=b,
        layout="distributed",
        injections=injections,
        topology=topology,
        params=params,
        comm_topology=comm_topology,
        gamma=float(gamma),
        regulator_gain=float(regulator_gain),
        delay_coupling=delay_coupling,
    )


def controlled_current(params: ConverterParams, state: NetworkState, kind: str):
    """Controller output u for a network state.

    droop:       u = K^P (Vnom 1 - V)
    distributed: u = K^P (Vhat - V)
    """
    V = state.V
    if V.shape != (params.n,):
        raise ValidationError(f"state has {V.shape[0]} nodes, params describe {params.n}")
    if kind == "droop":
        return params.droop_gain * (params.nominal_voltage - V)
    if kind == "distributed":
        if state.Vhat is None:
            raise ValidationError("distributed controller needs Vhat in the state")
        return params.droop_gain * (state.Vhat - V)
    raise ValidationError(f"unknown controller kind {kind!r}")


def equilibrium_state(system: ClosedLoopSystem) -> np.ndarray:
    """Stationary state solving A x = -b; raises NumericalError if A is singular."""
    A, b = system.state_matrix, system.forcing
    try:
        x = np.linalg.solve(A, -b)
        # one round of iterative refinement; the distributed loop mixes
        # microsecond and second time scales, so A is ill-conditioned
        x -= np.linalg.solve(A, A @ x + b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"closed-loop matrix is singular: {exc}") from exc
    residual = np.abs(A @ x + b).max()
    scale = max(np.abs(b).max(), 1.0)
    if not np.isfinite(residual) or residual > 1e-6 * scale:
        raise NumericalError(f"equilibrium solve residual {residual:.3e} exceeds tolerance")
    return x
