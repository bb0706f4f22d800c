"""Continuous-time perturbed gradient flow xdot = -eta * grad V(x) + B(x) u(t).

The integrator is a guarded embedded Runge-Kutta 5(4) pair: every stage and
every trial state must stay inside the open domain, otherwise the step is
halved.  A trace therefore never contains points outside the domain; runs
that press against the boundary stop with an explicit termination kind
instead of silently emitting outside states.

On top of integration the module provides the dissipation check
    dV/dt <= -(eta/2) |grad V|^2 + (C / (2 eta)) |u|^2,
envelope construction from certified decrease and gain curves, pointwise
envelope verification of traces, and an empirical input-to-size gain sweep.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .comparison import (
    KLCurve,
    MonotoneCurve,
    kl_from_decrease,
    pw_from_samples,
    scale_curve,
)
from .domains import SizeFunction, norm_size
from .errors import ContractError, DomainError
from .problems import SmoothLoss

__all__ = [
    "InputSignal",
    "zero_input",
    "constant_input",
    "piecewise_constant_input",
    "sinusoidal_input",
    "decaying_input",
    "PerturbedGradientSystem",
    "make_flow_system",
    "FlowTrace",
    "integrate",
    "LissReport",
    "check_liss",
    "IssEnvelope",
    "iss_envelope",
    "quadratic_gain_curve",
    "flow_dissipation",
    "EnvelopeReport",
    "verify_iss_trace",
    "GainEstimate",
    "estimate_gain",
]


# ---------------------------------------------------------------------------
# input signals


@dataclass(frozen=True)
class InputSignal:
    """Piecewise-continuous disturbance t -> u(t) with a declared sup norm.

    The declared bound is rechecked by sampling over the actual horizon when
    the signal is handed to the integrator.
    """

    fn: Callable[[float], np.ndarray] = field(repr=False)
    dimension: int
    sup_norm: float
    name: str = ""

    def __post_init__(self):
        if self.dimension < 1:
            raise ContractError("input dimension must be at least 1")
        if not (self.sup_norm >= 0.0) or not math.isfinite(self.sup_norm):
            raise ContractError("sup_norm must be a finite nonnegative real")

    def at(self, t: float) -> np.ndarray:
        u = np.asarray(self.fn(float(t)), dtype=float).reshape(-1)
        if u.size != self.dimension:
            raise ContractError("signal returned a vector of the wrong dimension")
        return u

    def check_bound(self, horizon: float, n: int = 257) -> None:
        worst = max(float(np.linalg.norm(self.at(t))) for t in np.linspace(0.0, horizon, n))
        if worst > self.sup_norm * (1.0 + 1e-12) + 1e-15:
            raise ContractError(
                f"signal '{self.name}' exceeds its declared sup norm: "
                f"sampled {worst} > {self.sup_norm}"
            )


def zero_input(dimension: int) -> InputSignal:
    z = np.zeros(dimension)
    return InputSignal(lambda t: z, dimension, 0.0, name="zero")


def constant_input(value) -> InputSignal:
    v = np.asarray(value, dtype=float).reshape(-1)
    return InputSignal(lambda t: v, v.size, float(np.linalg.norm(v)), name="constant")


def piecewise_constant_input(switch_times, values) -> InputSignal:
    """Right-continuous steps: u(t) = values[i] on [times[i], times[i+1])."""
    ts = np.asarray(switch_times, dtype=float).reshape(-1)
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    if ts.size != vals.shape[0]:
        raise ContractError("one value row per switch time is required")
    if ts[0] != 0.0 or np.any(np.diff(ts) <= 0):
        raise ContractError("switch times must start at 0 and strictly increase")

    def fn(t):
        return vals[min(int(np.searchsorted(ts, t, side="right")) - 1, vals.shape[0] - 1)]

    sup = float(np.max(np.linalg.norm(vals, axis=1)))
    return InputSignal(fn, vals.shape[1], sup, name="piecewise-constant")


def sinusoidal_input(amplitude, frequency: float, phase: float = 0.0) -> InputSignal:
    amp = np.asarray(amplitude, dtype=float).reshape(-1)
    w = 2.0 * math.pi * float(frequency)

    def fn(t):
        return amp * math.sin(w * t + phase)

    return InputSignal(fn, amp.size, float(np.linalg.norm(amp)), name="sinusoidal")


def decaying_input(initial, rate: float) -> InputSignal:
    v = np.asarray(initial, dtype=float).reshape(-1)
    if rate < 0:
        raise ContractError("decay rate must be nonnegative")

    def fn(t):
        return v * math.exp(-rate * t)

    return InputSignal(fn, v.size, float(np.linalg.norm(v)), name="decaying")


# ---------------------------------------------------------------------------
# system and trace


@dataclass(frozen=True)
class PerturbedGradientSystem:
    """Gradient flow of a smooth loss with an additive matrix-weighted input.

    input_gain is a declared certificate: an upper bound on the operator norm
    of input_map(x) over the domain.  It is rechecked against every recorded
    state during integration.  The dissipation bound uses input_gain/(2 eta)
    as the input coefficient, so for maps with norm above 1 the certificate
    should also dominate the squared norm.
    """

    loss: SmoothLoss
    eta: float
    input_map: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    input_gain: float
    input_dim: int
    size: SizeFunction = field(repr=False)
    name: str = ""

    def __post_init__(self):
        if not (self.eta > 0):
            raise ContractError("eta must be positive")
        if not math.isfinite(self.input_gain) or self.input_gain < 0:
            raise ContractError("input_gain must be a finite nonnegative real")

    @property
    def domain(self):
        return self.loss.domain

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return -self.eta * self.loss.grad_at(x) + self.input_map(x) @ u

    def check_input_gain(self, x: np.ndarray) -> None:
        b = np.atleast_2d(np.asarray(self.input_map(x), dtype=float))
        norm = float(np.linalg.norm(b, 2))
        if norm > self.input_gain * (1.0 + 1e-12) + 1e-15:
            raise ContractError(
                f"declared input_gain {self.input_gain} is below the sampled "
                f"operator norm {norm} of the input map"
            )


def make_flow_system(
    loss: SmoothLoss,
    eta: float,
    input_map=None,
    input_gain: float | None = None,
    size: SizeFunction | None = None,
    name: str = "",
) -> PerturbedGradientSystem:
    """Assemble a system, defaulting to identity input map and norm size."""
    n = loss.domain.dimension
    if input_map is None:
        eye = np.eye(n)
        input_map = lambda x: eye
        input_dim = n
        if input_gain is None:
            input_gain = 1.0
    else:
        if input_gain is None:
            raise ContractError("a custom input map requires a declared input_gain")
        probe = np.atleast_2d(np.asarray(input_map(loss.domain.equilibrium), dtype=float))
        if probe.shape[0] != n:
            raise ContractError("input map rows must match the state dimension")
        input_dim = probe.shape[1]
    if size is None:
        size = norm_size(loss.domain)
    return PerturbedGradientSystem(loss, float(eta), input_map, float(input_gain), input_dim, size, name=name)


@dataclass(frozen=True)
class FlowTrace:
    times: np.ndarray
    states: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    gradnorm: np.ndarray
    inputs: np.ndarray
    termination: str

    def __post_init__(self):
        if self.termination not in ("completed", "domain-exit", "step-floor"):
            raise ContractError("unknown termination kind")
        if np.any(np.diff(self.times) <= 0):
            raise ContractError("trace times must strictly increase")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


# ---------------------------------------------------------------------------
# guarded Runge-Kutta 5(4) integration (Dormand-Prince coefficients)

_RK_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_RK_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_RK_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_RK_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_RK_E = _RK_B5 - _RK_B4


def integrate(
    sys: PerturbedGradientSystem,
    x0,
    u: InputSignal,
    horizon: float,
    tol: float = 1e-8,
    n_record: int = 201,
    step_floor_factor: float = 1e-12,
) -> FlowTrace:
    """Integrate the flow over [0, horizon], recording every accepted step.

    Steps are capped so the trace lands exactly on a uniform grid of
    n_record output times; accepted adaptive points between grid times are
    recorded as well.  Any stage or trial state outside the domain halves
    the step; once the step falls below step_floor_factor * horizon the run
    stops with termination "domain-exit" (the halving was driven by a
    membership failure) or "step-floor" (pure error control).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not sys.domain.contains(x0):
        raise DomainError("initial state lies outside the domain")
    if not (horizon > 0):
        raise ContractError("horizon must be positive")
    if u.dimension != sys.input_dim:
        raise ContractError("input signal dimension does not match the system")
    if n_record < 2:
        raise ContractError("n_record must be at least 2")
    u.check_bound(horizon)

    grid = np.linspace(0.0, horizon, n_record)
    floor = step_floor_factor * horizon
    atol = 1e-10 * (1.0 + float(np.max(np.abs(x0))))

    def f(t, x):
        return sys.rhs(x, u.at(t))

    t, x = 0.0, x0
    k1 = f(t, x)
    sys.check_input_gain(x)

    times, states, inputs = [0.0], [x0], [u.at(0.0)]
    termination = "completed"
    next_idx = 1
    h = min(grid[1] - grid[0], horizon / 100.0)
    exit_pressure = False

    while t < horizon:
        if h < floor:
            termination = "domain-exit" if exit_pressure else "step-floor"
            break
        h_step = min(h, grid[next_idx] - t)
        lands_on_grid = h_step >= grid[next_idx] - t - 1e-15 * horizon

        ks = [k1]
        rejected = False
        for i in range(1, 7):
            xs = x + h_step * sum(a * k for a, k in zip(_RK_A[i], ks))
            if not sys.domain.contains(xs):
                rejected = True
                break
            ks.append(f(t + _RK_C[i] * h_step, xs))
        if rejected:
            exit_pressure = True
            h = h_step / 2.0
            continue

        x_new = x + h_step * sum(b * k for b, k in zip(_RK_B5, ks))
        if not sys.domain.contains(x_new):
            exit_pressure = True
            h = h_step / 2.0
            continue

        err_vec = h_step * sum(e * k for e, k in zip(_RK_E, ks))
        scale = atol + tol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err > 1.0:
            h = h_step * max(0.2, 0.9 * err ** -0.2)
            continue

        t = grid[next_idx] if lands_on_grid else t + h_step
        x = x_new
        k1 = ks[6]  # first-same-as-last: stage 7 is the next step's stage 1
        exit_pressure = False
        times.append(t)
        states.append(x)
        inputs.append(u.at(t))
        sys.check_input_gain(x)
        if lands_on_grid:
            if next_idx == n_record - 1:
                break
            next_idx += 1
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        # a step shortened only to land on the grid says nothing about the
        # controller's natural step, so never let the cap shrink it
        h = max(h, h_step * factor) if h_step < h else h_step * factor

    times = np.asarray(times)
    states = np.asarray(states)
    inputs = np.asarray(inputs)
    v = np.array([sys.loss.value_at(s) for s in states])
    gradnorm = np.array([float(np.linalg.norm(sys.loss.grad_at(s))) for s in states])
    omega = np.array([sys.size.evaluate(s) for s in states])
    return FlowTrace(times, states, v, omega, gradnorm, inputs, termination)


# ---------------------------------------------------------------------------
# dissipation check along a trace


@dataclass(frozen=True)
class LissReport:
    times: np.ndarray
    dvdt: np.ndarray
    bound: np.ndarray
    margins: np.ndarray
    violation_indices: np.ndarray
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violation_indices.size == 0


def check_liss(sys: PerturbedGradientSystem, trace: FlowTrace) -> LissReport:
    """Verify dV/dt <= -(eta/2)|grad V|^2 + (C/(2 eta))|u|^2 along the trace.

    dV/dt is estimated by non-uniform three-point finite differences at the
    interior record times; the allowed slack is 1e-6 * (1 + |dV/dt|).
    """
    if trace.termination != "completed":
        raise ContractError("dissipation check requires a completed trace")
    t, v = trace.times, trace.v
    if t.size < 3:
        raise ContractError("trace too short for a three-point derivative")
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    dvdt = (
        -h2 / (h1 * (h1 + h2)) * v[:-2]
        + (h2 - h1) / (h1 * h2) * v[1:-1]
        + h1 / (h2 * (h1 + h2)) * v[2:]
    )
    unorm = np.linalg.norm(trace.inputs[1:-1], axis=1)
    bound = (
        -0.5 * sys.eta * trace.gradnorm[1:-1] ** 2
        + (sys.input_gain / (2.0 * sys.eta)) * unorm**2
    )
    slack = 1e-6 * (1.0 + np.abs(dvdt))
    margins = dvdt - bound - slack
    violations = np.flatnonzero(margins > 0)
    return LissReport(
        times=t[1:-1],
        dvdt=dvdt,
        bound=bound,
        margins=margins,
        violation_indices=violations,
        worst_margin=float(np.max(margins)),
    )


# ---------------------------------------------------------------------------
# ISS envelope construction and verification


def quadratic_gain_curve(coefficient: float, s_max: float, n_knots: int = 65) -> MonotoneCurve:
    """Chord overestimate of s -> coefficient * s^2 on [0, s_max].

    Chords over a convex function dominate it, so the curve is a certified
    upper bound on the quadratic gain for arguments up to s_max; beyond that
    the linear tail falls below the quadratic and must not be relied on.
    """
    if coefficient < 0 or s_max <= 0:
        raise ContractError("coefficient must be nonnegative and s_max positive")
    s = np.linspace(0.0, s_max, n_knots)
    return pw_from_samples(s, coefficient * s**2, tail_slope=2.0 * coefficient * s_max)


def flow_dissipation(
    sys: PerturbedGradientSystem, pl_curve: MonotoneCurve, s_max: float
) -> tuple[MonotoneCurve, MonotoneCurve]:
    """Decrease and gain curves certified by the dissipation inequality.

    pl_curve certifies pl_curve(V - vbar) <= |grad V|^2 on the region of
    interest; the flow then admits the decrease rate (eta/2) * pl_curve and
    the input gain (C/(2 eta)) * s^2 (overestimated up to sup norm s_max).
    """
    alpha_hat = scale_curve(pl_curve, sys.eta / 2.0)
    gamma = quadratic_gain_curve(sys.input_gain / (2.0 * sys.eta), s_max)
    return alpha_hat, gamma


@dataclass(frozen=True)
class IssEnvelope:
    """Evaluator (r0, t, usup) -> certified bound on the size along the flow.

    bound = max( a1^{-1}(beta(a2(r0), t)), a1^{-1}(ahat^{-1}(2 gamma(usup))) )
    where beta solves ydot = -ahat(y)/2 and a1, a2 sandwich the size between
    V-gap comparisons: a1(omega) <= V - vbar <= a2(omega).
    """

    alpha_hat: MonotoneCurve
    gamma: MonotoneCurve
    alpha1: MonotoneCurve
    alpha2: MonotoneCurve
    beta: KLCurve = field(repr=False)

    def bound(self, r0: float, t, usup: float) -> float | np.ndarray:
        asym = self.alpha1.invert(self.alpha_hat.invert(2.0 * self.gamma.evaluate(usup)))
        v0 = self.alpha2.evaluate(r0)
        if np.ndim(t) == 0:
            return max(self.alpha1.invert(self.beta.evaluate(v0, t)), asym)
        trans = np.array([self.alpha1.invert(self.beta.evaluate(v0, ti)) for ti in np.asarray(t, dtype=float)])
        return np.maximum(trans, asym)

    def __call__(self, r0, t, usup):
        return self.bound(r0, t, usup)


def iss_envelope(
    alpha_hat: MonotoneCurve,
    gamma: MonotoneCurve,
    alpha1: MonotoneCurve,
    alpha2: MonotoneCurve,
) -> IssEnvelope:
    if not alpha_hat.strict:
        raise ContractError("the decrease rate must be strictly increasing")
    if not alpha1.strict:
        raise ContractError("the lower comparison curve must be invertible")
    beta = kl_from_decrease(alpha_hat, "continuous")
    return IssEnvelope(alpha_hat, gamma, alpha1, alpha2, beta)


@dataclass(frozen=True)
class EnvelopeReport:
    times: np.ndarray
    omega: np.ndarray
    bound: np.ndarray
    margins: np.ndarray
    violation_indices: np.ndarray
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violation_indices.size == 0


def verify_iss_trace(trace: FlowTrace, envelope: IssEnvelope, usup: float) -> EnvelopeReport:
    """Check omega(t) <= bound(omega(0), t, usup) * (1 + 1e-6) + 1e-9 pointwise."""
    bound = np.asarray(envelope.bound(float(trace.omega[0]), trace.times, usup), dtype=float)
    allowed = bound * (1.0 + 1e-6) + 1e-9
    margins = trace.omega - allowed
    violations = np.flatnonzero(margins > 0)
    return EnvelopeReport(
        times=trace.times,
        omega=trace.omega,
        bound=bound,
        margins=margins,
        violation_indices=violations,
        worst_margin=float(np.max(margins)),
    )


# ---------------------------------------------------------------------------
# empirical input-to-size gain


@dataclass(frozen=True)
class GainEstimate:
    curve: MonotoneCurve
    magnitudes: np.ndarray
    sups: np.ndarray
    excluded: tuple
    exits: tuple

    @property
    def had_exits(self) -> bool:
        return len(self.exits) > 0


def estimate_gain(
    sys: PerturbedGradientSystem,
    x0,
    magnitudes: Sequence[float],
    burn_in: float,
    horizon: float,
    n_realizations: int = 3,
    rng: np.random.Generator | None = None,
    tol: float = 1e-8,
    n_record: int = 201,
) -> GainEstimate:
    """Empirical gain curve mu -> sup of the size after burn-in.

    For each magnitude the sweep runs one constant signal plus sinusoidal
    realizations with random frequency and phase, all at sup norm mu, and
    takes the largest post-burn-in size.  Realizations that terminate early
    are recorded as exits and excluded; a magnitude with no completed
    realization is dropped from the fitted curve.  The fitted ordinates are
    made nondecreasing by a running maximum, and the curve is pinned to 0
    at 0.
    """
    mus = np.asarray(list(magnitudes), dtype=float)
    if mus.size == 0 or np.any(mus <= 0) or np.any(np.diff(mus) <= 0):
        raise ContractError("magnitudes must be positive and strictly increasing")
    if not (0 <= burn_in < horizon):
        raise ContractError("burn_in must lie inside the horizon")
    rng = np.random.default_rng(0) if rng is None else rng
    m = sys.input_dim

    def direction():
        if m == 1:
            return np.ones(1)
        d = rng.standard_normal(m)
        return d / np.linalg.norm(d)

    sups, excluded, exits = [], [], []
    for mu in mus:
        signals = [constant_input(mu * direction())]
        for _ in range(max(0, n_realizations - 1)):
            freq = rng.uniform(0.05, 0.5)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            signals.append(sinusoidal_input(mu * direction(), freq, phase))
        best = -np.inf
        completed = 0
        for j, sig in enumerate(signals):
            trace = integrate(sys, x0, sig, horizon, tol=tol, n_record=n_record)
            if trace.termination != "completed":
                exits.append((float(mu), j, trace.termination))
                continue
            completed += 1
            tail = trace.omega[trace.times >= burn_in]
            best = max(best, float(np.max(tail)))
        if completed == 0:
            excluded.append(float(mu))
        else:
            sups.append((float(mu), best))

    if not sups:
        raise ContractError("every magnitude exited the domain; no curve to fit")
    kept_mu = np.array([s[0] for s in sups])
    kept_sup = np.maximum.accumulate(np.array([s[1] for s in sups]))
    kept_sup = np.maximum(kept_sup, 0.0)
    curve = pw_from_samples(
        np.concatenate(([0.0], kept_mu)),
        np.concatenate(([0.0], kept_sup)),
    )
    return GainEstimate(curve, kept_mu, kept_sup, tuple(excluded), tuple(exits))
