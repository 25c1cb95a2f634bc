"""The control laws as pure state-update rules.

These are the nodewise reference forms used by the simulator and by tests
that cross-check the assembled matrix dynamics. Delayed arguments refer to the
state at t - tau; with tau = 0 they must equal the current arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grid_graph import GridTopology, build_laplacian
from .mtdc_model import DEFAULT_REGULATOR_GAIN

__all__ = ["DroopController", "DistributedController", "droop_output", "distributed_rhs"]


@dataclass(frozen=True)
class DroopController:
    """Decentralized proportional law u = K^P (Vnom 1 - V)."""

    droop_gain: np.ndarray
    nominal_voltage: float

    def __post_init__(self):
        gain = np.atleast_1d(np.asarray(self.droop_gain, dtype=float))
        if gain.ndim != 1 or not np.all(gain > 0.0):
            raise ValidationError("droop gains must be a vector of positive values")
        gain.flags.writeable = False
        object.__setattr__(self, "droop_gain", gain)
        if not float(self.nominal_voltage) > 0.0:
            raise ValidationError("nominal voltage must be positive")

    @property
    def n(self) -> int:
        return self.droop_gain.shape[0]

    kind = "droop"


@dataclass(frozen=True)
class DistributedController:
    """Proportional loop u = K^P (Vhat - V) plus consensus integral loop on Vhat.

    regulator_flag marks the single node whose voltage is driven to Vnom;
    comm_topology carries the symmetric consensus gains c_ij; delay is the
    uniform communication delay tau >= 0 applied to the consensus term only.
    """

    droop_gain: np.ndarray
    regulator_flag: np.ndarray
    gamma: float
    comm_topology: GridTopology
    nominal_voltage: float
    delay: float = 0.0
    regulator_gain: float = DEFAULT_REGULATOR_GAIN

    def __post_init__(self):
        gain = np.atleast_1d(np.asarray(self.droop_gain, dtype=float))
        flag = np.atleast_1d(np.asarray(self.regulator_flag, dtype=float))
        if gain.ndim != 1 or not np.all(gain > 0.0):
            raise ValidationError("droop gains must be a vector of positive values")
        if flag.shape != gain.shape or sorted(set(flag.tolist())) not in ([0.0, 1.0], [1.0]):
            raise ValidationError("regulator flags must be 0/1 and match the gain vector")
        if flag.sum() != 1.0:
            raise ValidationError("exactly one node must have regulator flag 1")
        if not self.gamma > 0.0:
            raise ValidationError(f"gamma must be positive, got {self.gamma}")
        if self.comm_topology.n != gain.shape[0]:
            raise ValidationError("communication graph does not cover all converters")
        if self.delay < 0.0:
            raise ValidationError(f"delay must be >= 0, got {self.delay}")
        if not self.regulator_gain > 0.0:
            raise ValidationError("regulator gain must be positive")
        gain.flags.writeable = False
        flag.flags.writeable = False
        object.__setattr__(self, "droop_gain", gain)
        object.__setattr__(self, "regulator_flag", flag)
        # cached consensus Laplacian; derived, not part of identity
        object.__setattr__(self, "_laplacian", build_laplacian(self.comm_topology))

    @property
    def n(self) -> int:
        return self.droop_gain.shape[0]

    kind = "distributed"


def droop_output(controller: DroopController, V) -> np.ndarray:
    """u = K^P (Vnom 1 - V)."""
    V = np.asarray(V, dtype=float)
    if V.shape != (controller.n,):
        raise ValidationError(f"V must have shape ({controller.n},), got {V.shape}")
    return controller.droop_gain * (controller.nominal_voltage - V)


def distributed_rhs(controller: DistributedController, V_now, Vhat_now, V_delayed, Vhat_delayed):
    """Controller output and reference dynamics with delayed consensus.

    u(t)       = K^P (Vhat(t) - V(t))
    dVhat/dt   = K^V (Vnom - V(t)) - gamma L_C (Vhat - V)(t - tau)

    The local regulation term uses the current voltage; only the consensus
    term is evaluated at the delayed time.
    """
    n = controller.n
    vecs = []
    for name, vec in (
        ("V_now", V_now),
        ("Vhat_now", Vhat_now),
        ("V_delayed", V_delayed),
        ("Vhat_delayed", Vhat_delayed),
    ):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (n,):
            raise ValidationError(f"{name} must have shape ({n},), got {vec.shape}")
        vecs.append(vec)
    V_now, Vhat_now, V_delayed, Vhat_delayed = vecs

    u = controller.droop_gain * (Vhat_now - V_now)
    local = controller.regulator_gain * controller.regulator_flag * (
        controller.nominal_voltage - V_now
    )
    consensus = controller._laplacian @ (Vhat_delayed - V_delayed)
    vhat_dot = local - controller.gamma * consensus
    return u, vhat_dot
