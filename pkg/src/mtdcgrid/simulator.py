"""Time-domain integration of the closed-loop systems.

The electrical modes are several decades faster than the controller modes
(|lambda| up to ~1e7 1/s against ~1 1/s), so the instantaneous linear part is
advanced by its exact discretization (augmented-matrix exponential, never
inverting A). The delayed consensus coupling enters through the
variation-of-constants integral with an endpoint-linear model of the delayed
signal, which is read from the stored state history by cubic interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .mtdc_model import ClosedLoopSystem, equilibrium_state

__all__ = [
    "Scenario",
    "Trajectory",
    "ExactStepper",
    "lti_step_exact",
    "integrate_dde",
    "run_scenario",
    "DIVERGENCE_CUTOFF_FACTOR",
    "MAX_STEP",
    "DELAY_RESOLUTION",
]

# |V| beyond this multiple of the nominal voltage terminates a run as diverged.
DIVERGENCE_CUTOFF_FACTOR = 10.0
# Upper bound on the integration step; the exact stepper has no stability
# limit, this resolves the controller dynamics and the output sampling.
MAX_STEP = 1e-3
# With a delay, the step also keeps at least this many points per delay window
# so delayed lookups always hit fully computed history.
DELAY_RESOLUTION = 20


@dataclass(frozen=True)
class Scenario:
    """Injection step experiment: switch injections at step_time, run to horizon."""

    pre_step_injections: np.ndarray
    post_step_injections: np.ndarray
    step_time: float = 0.0
    horizon: float = 10.0
    delay: float = 0.0
    sample_interval: float = 1e-3

    def __post_init__(self):
        pre = np.atleast_1d(np.asarray(self.pre_step_injections, dtype=float))
        post = np.atleast_1d(np.asarray(self.post_step_injections, dtype=float))
        if pre.shape != post.shape or pre.ndim != 1:
            raise ValidationError("pre and post injection vectors must have matching shape")
        if not (np.all(np.isfinite(pre)) and np.all(np.isfinite(post))):
            raise ValidationError("injections must be finite")
        if not 0.0 <= self.step_time < self.horizon:
            raise ValidationError(
                f"need 0 <= step_time < horizon, got {self.step_time} / {self.horizon}"
            )
        if not self.sample_interval > 0.0:
            raise ValidationError("sample interval must be positive")
        if self.delay < 0.0:
            raise ValidationError("delay must be >= 0")
        ratio = self.step_time / self.sample_interval
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("step_time must be a multiple of the sample interval")
        pre.flags.writeable = False
        post.flags.writeable = False
        object.__setattr__(self, "pre_step_injections", pre)
        object.__setattr__(self, "post_step_injections", post)

    @property
    def n(self) -> int:
        return self.pre_step_injections.shape[0]

    def with_delay(self, tau: float) -> "Scenario":
        return replace(self, delay=float(tau))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled simulation output."""

    times: np.ndarray
    V: np.ndarray
    u: np.ndarray
    Vhat: np.ndarray | None = None
    diverged: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        V = np.asarray(self.V, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if times.ndim != 1:
            raise ValidationError("times must be 1-D")
        if V.shape != u.shape or V.ndim != 2 or V.shape[0] != times.shape[0]:
            raise ValidationError("V and u must be (samples, nodes) arrays matching times")
        if times.shape[0] > 1:
            dt = np.diff(times)
            if dt.min() <= 0 or (dt.max() - dt.min()) > 1e-9 * dt.max():
                raise ValidationError("times must be strictly increasing and uniform")
        if self.Vhat is not None and np.asarray(self.Vhat).shape != V.shape:
            raise ValidationError("Vhat must match the shape of V")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "u", u)
        if self.Vhat is not None:
            object.__setattr__(self, "Vhat", np.asarray(self.Vhat, dtype=float))

    @property
    def n(self) -> int:
        return self.V.shape[1]

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]


def _expm_blocks(A: np.ndarray, h: float, order: int):
    """Exact step operators from one augmented matrix exponential.

    Returns (E, P1[, P2]) with E = exp(Ah), P1 = integral_0^h exp(As) ds and
    P2 = integral_0^h exp(A(h-s)) s ds, so that the solution of
    x' = A x + c0 + s*c1 over the step is E x + P1 c0 + P2 c1.
    """
    m = A.shape[0]
    size = m * (order + 1)
    M = np.zeros((size, size))
    M[:m, :m] = A
    for k in range(order):
        M[k * m : (k + 1) * m, (k + 1) * m : (k + 2) * m] = np.eye(m)
    F = scipy.linalg.expm(M * h)
    if not np.all(np.isfinite(F)):
        raise NumericalError("matrix exponential produced non-finite entries")
    blocks = [F[:m, :m]] + [F[:m, (k + 1) * m : (k + 2) * m] for k in range(order)]
    return blocks


class ExactStepper:
    """Exact fixed-step propagator for dx/dt = A x + b."""

    def __init__(self, A: np.ndarray, b: np.ndarray, h: float):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValidationError("A must be square and b a matching vector")
        if not h > 0.0:
            raise ValidationError(f"step size must be positive, got {h}")
        self.h = float(h)
        self.E, P1 = _expm_blocks(A, self.h, order=1)
        self.forced = P1 @ b

    def step(self, x: np.ndarray) -> np.ndarray:
        return self.E @ x + self.forced


def lti_step_exact(system: ClosedLoopSystem, state, h: float) -> np.ndarray:
    """Advance a delay-free closed loop by h using the exact discretization."""
    x = np.asarray(state, dtype=float)
    if x.shape != (system.order,):
        raise ValidationError(f"state must have shape ({system.order},), got {x.shape}")
    return ExactStepper(system.state_matrix, system.forcing, h).step(x)


class _DelayStepper:
    """One step of x' = A0 x + b + g(t) with g linear over the step."""

    def __init__(self, A0, b, h):
        self.h = float(h)
        self.E, self.P1, self.P2 = _expm_blocks(np.asarray(A0, float), self.h, order=2)
        self.b = np.asarray(b, float)

    def step(self, x, g0, g1):
        return self.E @ x + self.P1 @ (self.b + g0) + self.P2 @ ((g1 - g0) / self.h)


def _lagrange_weights(p: float) -> np.ndarray:
    """Cubic Lagrange weights at fractional position p on nodes {0,1,2,3}."""
    w = np.empty(4)
    for m in range(4):
        num = 1.0
        den = 1.0
        for q in range(4):
            if q != m:
                num *= p - q
                den *= m - q
        w[m] = num / den
    return w


class _History:
    """Uniform-grid state history with constant pre-fill and cubic readout."""

    def __init__(self, t0, h, x0, capacity):
        self.t0 = float(t0)
        self.h = float(h)
        self.x0 = np.asarray(x0, dtype=float)
        self.rows = np.empty((capacity + 1, self.x0.shape[0]))
        self.rows[0] = self.x0
        self.filled = 0  # highest valid row index

    def append(self, x):
        self.filled += 1
        self.rows[self.filled] = x

    def value(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.h
        if s <= 1e-12:
            return self.x0
        base = min(max(int(math.floor(s)) - 1, 0), self.filled - 3)
        if base < 0:
            # fewer than 4 rows available this early; the delayed horizon is
            # >= DELAY_RESOLUTION steps behind, so this only happens while
            # t is still inside the constant pre-history
            return self.x0
        w = _lagrange_weights(s - base)
        return w @ self.rows[base : base + 4]


def _resolve_step(delta: float, tau: float) -> tuple[float, int]:
    """Integration step h dividing the sample interval, and substeps per sample."""
    h_raw = min(MAX_STEP, delta)
    if tau > 0.0:
        h_raw = min(h_raw, tau / DELAY_RESOLUTION)
    subs = max(1, int(math.ceil(delta / h_raw - 1e-12)))
    return delta / subs, subs


def _check_pairing(system: ClosedLoopSystem, controller) -> None:
    if controller is None:
        return
    kind = getattr(controller, "kind", None)
    if kind != system.layout:
        raise ValidationError(
            f"controller kind {kind!r} does not match system layout {system.layout!r}"
        )
    if getattr(controller, "n", system.n) != system.n:
        raise ValidationError("controller and system disagree on the node count")


def integrate_dde(
    system: ClosedLoopSystem,
    controller,
    scenario: Scenario,
    initial_state=None,
) -> Trajectory:
    """Integrate the closed loop from scenario.step_time to scenario.horizon.

    The initial history on [step_time - tau, step_time] is the constant
    `initial_state` (default: the system's own equilibrium, which gives a flat
    trajectory). The system's injections are in force for the whole window, so
    callers switch injections by passing the post-step system here and the
    pre-step equilibrium as `initial_state`. Terminates early with the
    diverged flag once any |V| exceeds DIVERGENCE_CUTOFF_FACTOR * Vnom.
    """
    _check_pairing(system, controller)
    if scenario.n != system.n:
        raise ValidationError("scenario injections do not match the system size")
    tau = scenario.delay
    if initial_state is None:
        initial_state = equilibrium_state(system)
    x0 = np.asarray(initial_state, dtype=float)
    if x0.shape != (system.order,):
        raise ValidationError(f"initial state must have shape ({system.order},)")

    n = system.n
    cutoff = DIVERGENCE_CUTOFF_FACTOR * system.params.nominal_voltage
    delta = scenario.sample_interval
    t_start = scenario.step_time
    n_samples = int(math.floor((scenario.horizon - t_start) / delta + 1e-9))
    h, subs = _resolve_step(delta, tau)
    total_steps = n_samples * subs

    delayed = tau > 0.0 and system.delay_coupling is not None
    if delayed:
        A1 = system.delay_coupling
        A0 = system.state_matrix - A1
        stepper = _DelayStepper(A0, system.forcing, h)
        history = _History(t_start, h, x0, total_steps)
    else:
        stepper = ExactStepper(system.state_matrix, system.forcing, h)

    samples = [x0]
    x = x0
    diverged = False
    g1 = None
    for k in range(total_steps):
        if delayed:
            t_k = t_start + k * h
            g0 = g1 if g1 is not None else A1 @ history.value(t_k - tau)
            g1 = A1 @ history.value(t_k + h - tau)
            x = stepper.step(x, g0, g1)
            history.append(x)
        else:
            x = stepper.step(x)
        vmax = np.abs(x[-n:]).max()
        if not np.isfinite(vmax):
            raise NumericalError(f"state became non-finite at t = {t_start + (k + 1) * h:.6g} s")
        if (k + 1) % subs == 0:
            samples.append(x)
        if vmax > cutoff:
            diverged = True
            break

    states = np.asarray(samples)
    times = t_start + np.arange(states.shape[0]) * delta
    Vhat, V = system.split_state(states)
    u = system.output_current(states)
    return Trajectory(times=times, V=V, u=u, Vhat=Vhat, diverged=diverged)


def run_scenario(builder, controller, scenario: Scenario) -> Trajectory:
    """Full step-response experiment.

    `builder` maps an injection vector to the assembled ClosedLoopSystem. The
    pre-step equilibrium is computed analytically, held as constant history,
    the injections switch at step_time, and the post-step system is integrated
    to the horizon. Samples before step_time sit exactly at the pre-step
    equilibrium.
    """
    system_pre = builder(scenario.pre_step_injections)
    system_post = builder(scenario.post_step_injections)
    if system_pre.layout != system_post.layout or system_pre.order != system_post.order:
        raise ValidationError("builder returned systems with inconsistent layouts")
    _check_pairing(system_post, controller)

    x_pre = equilibrium_state(system_pre)
    post = integrate_dde(system_post, controller, scenario, initial_state=x_pre)

    n_pre = int(round(scenario.step_time / scenario.sample_interval))
    if n_pre == 0:
        return post

    pre_states = np.tile(x_pre, (n_pre, 1))
    pre_times = np.arange(n_pre) * scenario.sample_interval
    Vhat_pre, V_pre = system_pre.split_state(pre_states)
    u_pre = system_pre.output_current(pre_states)

    Vhat = None
    if post.Vhat is not None:
        Vhat = np.vstack([Vhat_pre, post.Vhat])
    return Trajectory(
        times=np.concatenate([pre_times, post.times]),
        V=np.vstack([V_pre, post.V]),
        u=np.vstack([u_pre, post.u]),
        Vhat=Vhat,
        diverged=post.diverged,
    )
