"""Noisy steepest descent x+ = x - lambda_bar (p + q) with exact line search.

p is the gradient of the loss at x and q = B(x) u is the injected
disturbance.  The step length is the smallest global minimizer of V along
the ray inside the admissible set

    Lambda(x, q) = { lam >= 0 : V(x - mu (p+q)) <= V(x) for all mu in [0, lam] },

which always contains 0, so V never increases: a direction that is no
descent direction simply leaves the iterate stuck.  The module also
verifies the quantitative decrease guarantees, builds sampled Lipschitz
and decrease certificates, constructs one-step input gains, and checks
discrete-time ISS estimates along traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .comparison import (
    KLCurve,
    MonotoneCurve,
    add_linear_term,
    monotone_minorant,
)
from .domains import SizeFunction, compare_sizes, norm_size
from .errors import ContractError, CoverageError, DomainError, NumericError
from .problems import SmoothLoss

__all__ = [
    "DescentSystem",
    "make_descent_system",
    "check_gradient_nonvanishing",
    "lambda_max",
    "line_search",
    "StepOutcome",
    "descent_step",
    "descent_step_detail",
    "NoiseModel",
    "zero_noise",
    "absolute_noise",
    "relative_noise",
    "decaying_noise",
    "DescentTrace",
    "run_descent",
    "LipschitzProfile",
    "lipschitz_profile",
    "DecreaseReport",
    "verify_decrease",
    "DtIssReport",
    "dt_iss_check",
    "dt_gamma_construction",
    "InvarianceReport",
    "check_pmu_invariance",
    "DtCertificate",
    "build_dt_lyapunov_certificate",
]

_GRID_CELLS = 64
_LEFT_SCAN_CAP = 1000


# ---------------------------------------------------------------------------
# system


@dataclass(frozen=True)
class DescentSystem:
    """Loss, disturbance map and line-search resolution for noisy descent.

    input_gain is a declared certificate K_B >= sup of the operator norm of
    input_map(x); it is rechecked against every iterate of a run.  The
    line-search tolerance at a point x along direction d is
    tol_scale * (1 + |x|) / |d|.
    """

    loss: SmoothLoss
    input_map: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    input_gain: float
    input_dim: int
    size: SizeFunction = field(repr=False)
    tol_scale: float = 1e-10
    name: str = ""

    def __post_init__(self):
        if not math.isfinite(self.input_gain) or self.input_gain < 0:
            raise ContractError("input_gain must be a finite nonnegative real")
        if not (self.tol_scale > 0):
            raise ContractError("tol_scale must be positive")

    @property
    def domain(self):
        return self.loss.domain

    def gap(self, x) -> float:
        """W(x) = V(x) - V at the equilibrium."""
        return self.loss.value_at(x) - self.loss.vbar

    def check_input_gain(self, x: np.ndarray) -> None:
        b = np.atleast_2d(np.asarray(self.input_map(x), dtype=float))
        norm = float(np.linalg.norm(b, 2))
        if norm > self.input_gain * (1.0 + 1e-12) + 1e-15:
            raise ContractError(
                f"declared input_gain {self.input_gain} is below the sampled "
                f"operator norm {norm} of the input map"
            )


def make_descent_system(
    loss: SmoothLoss,
    input_map=None,
    input_gain: float | None = None,
    size: SizeFunction | None = None,
    tol_scale: float = 1e-10,
    name: str = "",
) -> DescentSystem:
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
    return DescentSystem(loss, input_map, float(input_gain), input_dim, size, tol_scale, name)


def check_gradient_nonvanishing(
    sys: DescentSystem, sampler, n_samples: int = 512, exclusion_radius: float = 1e-6
) -> float:
    """Smallest sampled gradient norm away from the equilibrium.

    Raises when a sampled point off the equilibrium has a (numerically)
    vanishing gradient, which would break the steepest-descent certificates.
    """
    pts = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    xbar = sys.loss.xbar
    floor = math.inf
    for x in pts:
        if not sys.domain.contains(x) or np.linalg.norm(x - xbar) <= exclusion_radius:
            continue
        g = float(np.linalg.norm(sys.loss.grad_at(x)))
        if g <= 1e-12:
            raise ContractError("sampled gradient vanishes away from the equilibrium")
        floor = min(floor, g)
    if not math.isfinite(floor):
        raise CoverageError("no sample points away from the equilibrium")
    return floor


# ---------------------------------------------------------------------------
# admissible steps and exact line search


def _ray_tolerance(sys: DescentSystem, x: np.ndarray, dnorm: float) -> float:
    return sys.tol_scale * (1.0 + float(np.linalg.norm(x))) / dnorm


def lambda_max(sys: DescentSystem, x, d, tol: float | None = None) -> float:
    """Largest admissible step sup Lambda(x, d) along x - mu d, to tolerance.

    A doubling scan finds the first probe where V exceeds V(x) or the point
    leaves the domain; bisection then refines the boundary.  Returns 0 when
    already the smallest positive probe fails.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = np.asarray(d, dtype=float).reshape(-1)
    if not sys.domain.contains(x):
        raise DomainError("base point lies outside the domain")
    dnorm = float(np.linalg.norm(d))
    if dnorm == 0.0:
        raise ContractError("direction must be nonzero")
    if tol is None:
        tol = _ray_tolerance(sys, x, dnorm)
    v0 = sys.loss.value_at(x)
    vslack = 1e-12 * (1.0 + abs(v0))

    def admissible(mu: float) -> bool:
        pt = x - mu * d
        return sys.domain.contains(pt) and sys.loss.value_at(pt) <= v0 + vslack

    if not admissible(tol):
        return 0.0
    lo, hi = tol, 2.0 * tol
    while admissible(hi):
        lo = hi
        hi *= 2.0
        if hi > 1e15:
            raise NumericError("admissible step set appears unbounded")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _golden_refine(phi, a: float, b: float, tol: float) -> tuple[float, float]:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = phi(d)
    return (c, fc) if fc <= fd else (d, fd)


def line_search(sys: DescentSystem, x, d) -> tuple[float, np.ndarray]:
    """Smallest global minimizer of V along x - lam d over [0, sup Lambda].

    A 64-cell bracketing grid feeds golden-section refinement in every local
    bracket; the best value wins, ties resolve to the smaller step, and a
    final left-scan at the ray tolerance returns the smallest minimizer at
    the declared resolution.  The result never increases V because lam = 0
    is always a candidate.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = np.asarray(d, dtype=float).reshape(-1)
    lm = lambda_max(sys, x, d)
    if lm == 0.0:
        return 0.0, x.copy()
    dnorm = float(np.linalg.norm(d))
    tol = _ray_tolerance(sys, x, dnorm)

    def phi(lam: float) -> float:
        pt = x - lam * d
        if not sys.domain.contains(pt):
            return math.inf
        return sys.loss.value_at(pt)

    grid = np.linspace(0.0, lm, _GRID_CELLS + 1)
    vals = np.array([phi(g) for g in grid])
    candidates = list(zip(grid.tolist(), vals.tolist()))
    for i in range(_GRID_CELLS + 1):
        left_ok = i == 0 or vals[i] <= vals[i - 1]
        right_ok = i == _GRID_CELLS or vals[i] <= vals[i + 1]
        if left_ok and right_ok and np.isfinite(vals[i]):
            a = grid[max(i - 1, 0)]
            b = grid[min(i + 1, _GRID_CELLS)]
            if b - a > tol:
                candidates.append(_golden_refine(phi, a, b, tol))

    best_val = min(v for _, v in candidates)
    # the tie window must scale with the values themselves, not with an
    # absolute floor, or tiny-V tails would tie with lam = 0 and stall
    tie_eps = 1e-12 * max(abs(best_val), abs(vals[0]))
    # ties resolve to the smallest step, but never above the value at 0:
    # the result must keep V nonincreasing bitwise
    best_lam = min(lam for lam, v in candidates if v <= best_val + tie_eps and v <= vals[0])
    best_val = phi(best_lam)

    for _ in range(_LEFT_SCAN_CAP):
        if best_lam <= 0.0:
            break
        probe = max(0.0, best_lam - tol)
        pv = phi(probe)
        if pv <= best_val:
            best_lam, best_val = probe, pv
        else:
            break

    if best_lam == 0.0:
        return 0.0, x.copy()
    return best_lam, x - best_lam * d


@dataclass(frozen=True)
class StepOutcome:
    x_plus: np.ndarray
    lambda_bar: float
    stuck: bool
    p: np.ndarray
    q: np.ndarray


def descent_step_detail(sys: DescentSystem, x, u) -> StepOutcome:
    """One noisy steepest-descent step with diagnostics.

    The step is the identity when the perturbed direction p + q vanishes;
    "stuck" marks a nonvanishing direction along which no positive step
    keeps V below its current value.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    p = sys.loss.grad_at(x)
    b = np.atleast_2d(np.asarray(sys.input_map(x), dtype=float))
    q = b @ u
    dvec = p + q
    if float(np.linalg.norm(dvec)) <= 1e-14 * (1.0 + float(np.linalg.norm(p))):
        return StepOutcome(x.copy(), 0.0, False, p, q)
    lam, x_plus = line_search(sys, x, dvec)
    return StepOutcome(x_plus, lam, lam == 0.0, p, q)


def descent_step(sys: DescentSystem, x, u) -> np.ndarray:
    return descent_step_detail(sys, x, u).x_plus


# ---------------------------------------------------------------------------
# noise models


@dataclass(frozen=True)
class NoiseModel:
    """Disturbance generator for descent runs.

    kinds:
      zero       u = 0
      constant   u = vector at every step (deterministic, e.g. adversarial)
      absolute   |u| = magnitude, uniformly random direction
      relative   u scaled so |B(x) u| = magnitude * |grad V(x)|
      decaying   relative with schedule magnitude * rate^t
    """

    kind: str
    magnitude: float = 0.0
    rate: float = 1.0
    vector: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "absolute", "relative", "decaying"):
            raise ContractError("unknown noise kind")
        if self.magnitude < 0:
            raise ContractError("magnitude must be nonnegative")
        if self.kind == "decaying" and not (0 <= self.rate < 1):
            raise ContractError("decaying noise needs a rate in [0, 1)")
        if self.kind == "constant" and len(self.vector) == 0:
            raise ContractError("constant noise needs a vector")

    def draw(self, rng: np.random.Generator, t: int, p: np.ndarray, bmap: np.ndarray) -> np.ndarray:
        m = bmap.shape[1]
        if self.kind == "constant":
            u = np.asarray(self.vector, dtype=float)
            if u.size != m:
                raise ContractError("constant noise vector has the wrong dimension")
            return u
        if self.kind == "zero" or self.magnitude == 0.0:
            return np.zeros(m)
        v = rng.standard_normal(m)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return np.zeros(m)
        v /= nv
        if self.kind == "absolute":
            return self.magnitude * v
        coeff = self.magnitude * (self.rate**t if self.kind == "decaying" else 1.0)
        target = coeff * float(np.linalg.norm(p))
        reach = float(np.linalg.norm(bmap @ v))
        if reach <= 1e-14:
            return np.zeros(m)
        return (target / reach) * v


def zero_noise() -> NoiseModel:
    return NoiseModel("zero")


def constant_noise(vector) -> NoiseModel:
    return NoiseModel("constant", vector=tuple(float(v) for v in np.asarray(vector).reshape(-1)))


def absolute_noise(magnitude: float) -> NoiseModel:
    return NoiseModel("absolute", magnitude)


def relative_noise(magnitude: float) -> NoiseModel:
    return NoiseModel("relative", magnitude)


def decaying_noise(magnitude: float, rate: float) -> NoiseModel:
    return NoiseModel("decaying", magnitude, rate)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class DescentTrace:
    iterates: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    gradnorm: np.ndarray
    lambda_bars: np.ndarray
    stuck: np.ndarray
    inputs: np.ndarray
    input_sup: float

    def __post_init__(self):
        if np.any(np.diff(self.v) > 0):
            raise ContractError("V increased along a descent trace")

    @property
    def steps(self) -> int:
        return self.lambda_bars.size

    @property
    def final_state(self) -> np.ndarray:
        return self.iterates[-1]


def run_descent(
    sys: DescentSystem,
    x0,
    noise: NoiseModel,
    steps: int,
    rng: np.random.Generator | None = None,
) -> DescentTrace:
    """Iterate the noisy descent map for a fixed number of steps."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    if not sys.domain.contains(x):
        raise DomainError("initial iterate lies outside the domain")
    if steps < 0:
        raise ContractError("steps must be nonnegative")
    rng = np.random.default_rng(0) if rng is None else rng

    iterates = [x.copy()]
    lams, stucks, inputs = [], [], []
    sys.check_input_gain(x)
    for t in range(steps):
        p = sys.loss.grad_at(x)
        b = np.atleast_2d(np.asarray(sys.input_map(x), dtype=float))
        u = noise.draw(rng, t, p, b)
        out = descent_step_detail(sys, x, u)
        x = out.x_plus
        sys.check_input_gain(x)
        iterates.append(x.copy())
        lams.append(out.lambda_bar)
        stucks.append(out.stuck)
        inputs.append(u)

    iterates = np.asarray(iterates)
    v = np.array([sys.loss.value_at(s) for s in iterates])
    gradnorm = np.array([float(np.linalg.norm(sys.loss.grad_at(s))) for s in iterates])
    omega = np.array([sys.size.evaluate(s) for s in iterates])
    inputs = np.asarray(inputs) if inputs else np.zeros((0, sys.input_dim))
    input_sup = float(np.max(np.linalg.norm(inputs, axis=1))) if inputs.size else 0.0
    return DescentTrace(
        iterates=iterates,
        v=v,
        omega=omega,
        gradnorm=gradnorm,
        lambda_bars=np.asarray(lams, dtype=float),
        stuck=np.asarray(stucks, dtype=bool),
        inputs=inputs,
        input_sup=input_sup,
    )


# ---------------------------------------------------------------------------
# sampled Lipschitz certificates


@dataclass(frozen=True)
class LipschitzProfile:
    """Nondecreasing sampled Lipschitz constants for grad V on sublevel sets.

    levels are absolute values of V; constants[i] certifies (up to sampling)
    a Lipschitz bound on {V <= levels[i]}.
    """

    levels: np.ndarray
    constants: np.ndarray
    safety_factor: float

    def __post_init__(self):
        if self.levels.size != self.constants.size or self.levels.size == 0:
            raise ContractError("levels and constants must align and be nonempty")
        if np.any(np.diff(self.levels) <= 0):
            raise ContractError("levels must strictly increase")
        if np.any(np.diff(self.constants) < 0) or np.any(self.constants <= 0):
            raise ContractError("constants must be positive and nondecreasing")

    def at(self, r: float) -> float:
        """Constant certified for {V <= r} (smallest covering level)."""
        idx = int(np.searchsorted(self.levels, r, side="left"))
        if idx >= self.levels.size:
            raise DomainError("level above the certified profile range")
        return float(self.constants[idx])

    def at_right(self, r: float) -> float:
        """Constant for levels strictly above r (right limit at boundaries)."""
        idx = int(np.searchsorted(self.levels, r, side="right"))
        if idx >= self.levels.size:
            idx = self.levels.size - 1
            if r > self.levels[-1]:
                raise DomainError("level above the certified profile range")
        return float(self.constants[idx])

    def theta(self, r: float) -> float:
        """Decrease coefficient 1 / (18 L(r))."""
        return 1.0 / (18.0 * self.at(r))


def lipschitz_profile(
    sys: DescentSystem,
    levels: Sequence[float],
    sampler,
    pairs_per_level: int = 256,
    safety_factor: float = 1.5,
    rng: np.random.Generator | None = None,
) -> LipschitzProfile:
    """Sampled gradient-Lipschitz constants on nested sublevel sets.

    Difference quotients |grad V(x) - grad V(y)| / |x - y| are maximized
    over random pairs inside each sublevel set, including perturbation
    pairs at relative distance 1e-4 that capture the local curvature, then
    inflated by the safety factor and made nondecreasing.
    """
    levels = np.asarray(list(levels), dtype=float)
    if levels.size == 0 or np.any(np.diff(levels) <= 0):
        raise ContractError("levels must be nonempty and strictly increasing")
    if np.any(levels <= sys.loss.vbar):
        raise ContractError("levels must exceed the minimal value")
    rng = np.random.default_rng(0) if rng is None else rng

    pool = np.atleast_2d(np.asarray(sampler(max(4 * pairs_per_level, 512)), dtype=float))
    kept, values = [], []
    for x in pool:
        if sys.domain.contains(x):
            val = sys.loss.value_at(x)
            if val <= levels[-1]:
                kept.append(x)
                values.append(val)
    if len(kept) < 2:
        raise CoverageError("sampler produced too few points inside the largest sublevel set")
    kept = np.asarray(kept)
    values = np.asarray(values)
    grads = np.asarray([sys.loss.grad_at(x) for x in kept])

    def quotient(x, gx, y, gy) -> float:
        dist = float(np.linalg.norm(x - y))
        if dist <= 1e-14:
            return 0.0
        return float(np.linalg.norm(gx - gy)) / dist

    constants = []
    for r in levels:
        idx = np.flatnonzero(values <= r)
        if idx.size < 2:
            raise CoverageError(f"fewer than two sample points in the sublevel set V <= {r}")
        worst = 0.0
        ii = rng.integers(0, idx.size, size=pairs_per_level)
        jj = rng.integers(0, idx.size, size=pairs_per_level)
        for i, j in zip(idx[ii], idx[jj]):
            worst = max(worst, quotient(kept[i], grads[i], kept[j], grads[j]))
        # short-displacement pairs probe the local curvature
        for i in idx[rng.integers(0, idx.size, size=pairs_per_level)]:
            x = kept[i]
            delta = 1e-4 * (1.0 + float(np.linalg.norm(x)))
            dirv = rng.standard_normal(x.size)
            dirv /= np.linalg.norm(dirv)
            y = x + delta * dirv
            if sys.domain.contains(y):
                worst = max(worst, quotient(x, grads[i], y, sys.loss.grad_at(y)))
        constants.append(safety_factor * worst)
    constants = np.maximum.accumulate(np.asarray(constants))
    if np.any(constants <= 0):
        raise CoverageError("sampled difference quotients vanish; cannot certify a positive constant")
    return LipschitzProfile(levels, constants, safety_factor)


# ---------------------------------------------------------------------------
# decrease guarantees


@dataclass(frozen=True)
class DecreaseReport:
    lambda_fixed: float
    fixed_decrease: float
    fixed_bound: float
    segment_inside: bool
    linesearch_decrease: float
    linesearch_bound: float

    @property
    def fixed_ok(self) -> bool:
        return self.segment_inside and self.fixed_decrease <= self.fixed_bound

    @property
    def linesearch_ok(self) -> bool:
        return self.linesearch_decrease <= self.linesearch_bound

    @property
    def passed(self) -> bool:
        return self.fixed_ok and self.linesearch_ok


def verify_decrease(sys: DescentSystem, x, q, lipschitz: float) -> DecreaseReport:
    """Check the quantitative decrease at step 2/(9L) and after line search.

    With |q| <= |p|/2 and L a gradient-Lipschitz constant on {V <= V(x)}:
      (i)  V(x - lam (p+q)) - V(x) <= -(lam/4) |p|^2   at lam = 2/(9L),
      (ii) the exact line-search decrease is at most -(1/(18L)) |p|^2.
    Both bounds carry a relative slack of 1e-9.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    p = sys.loss.grad_at(x)
    pnorm = float(np.linalg.norm(p))
    if float(np.linalg.norm(q)) > 0.5 * pnorm * (1.0 + 1e-12):
        raise ContractError("the disturbance must satisfy |q| <= |p|/2")
    if pnorm == 0.0:
        raise ContractError("the decrease lemma needs a nonvanishing gradient")
    if lipschitz <= 0:
        raise ContractError("the Lipschitz constant must be positive")

    lam = 2.0 / (9.0 * lipschitz)
    dvec = p + q
    segment_inside = all(
        sys.domain.contains(x - s * lam * dvec) for s in np.linspace(0.0, 1.0, 33)
    )
    v0 = sys.loss.value_at(x)
    fixed_decrease = (sys.loss.value_at(x - lam * dvec) - v0) if segment_inside else math.inf
    fixed_bound = -(lam / 4.0) * pnorm**2
    fixed_bound += 1e-9 * abs(fixed_bound)

    _, x_plus = line_search(sys, x, dvec)
    ls_decrease = sys.loss.value_at(x_plus) - v0
    ls_bound = -(1.0 / (18.0 * lipschitz)) * pnorm**2
    ls_bound += 1e-9 * abs(ls_bound)
    return DecreaseReport(
        lambda_fixed=lam,
        fixed_decrease=fixed_decrease,
        fixed_bound=fixed_bound,
        segment_inside=segment_inside,
        linesearch_decrease=ls_decrease,
        linesearch_bound=ls_bound,
    )


# ---------------------------------------------------------------------------
# discrete-time ISS estimates

# The input magnitude of a trace is measured in the sup norm sup_t |u_t|
# (the norm the estimates are stated against everywhere else); summing the
# per-step magnitudes instead would quietly reclassify every bounded
# persistent input as unbounded.


@dataclass(frozen=True)
class DtIssReport:
    times: np.ndarray
    omega: np.ndarray
    bound: np.ndarray
    margins: np.ndarray
    violation_indices: np.ndarray
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violation_indices.size == 0


def dt_iss_check(trace: DescentTrace, beta: KLCurve, gamma: MonotoneCurve) -> DtIssReport:
    """Check omega(x_t) <= (beta(omega_0, t) + gamma(usup)) * (1 + 1e-6)."""
    r0 = float(trace.omega[0])
    offset = float(gamma.evaluate(trace.input_sup))
    ts = np.arange(trace.omega.size)
    bound = np.array([beta.evaluate(r0, float(t)) + offset for t in ts])
    allowed = bound * (1.0 + 1e-6)
    margins = trace.omega - allowed
    violations = np.flatnonzero(margins > 0)
    return DtIssReport(
        times=ts,
        omega=trace.omega,
        bound=bound,
        margins=margins,
        violation_indices=violations,
        worst_margin=float(np.max(margins)),
    )


def _ball_directions(rng: np.random.Generator, m: int, count: int) -> np.ndarray:
    dirs = rng.standard_normal((count, m))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return dirs / norms


def dt_gamma_construction(
    sys: DescentSystem,
    chi: MonotoneCurve,
    mu: float,
    sampler,
    n_samples: int = 1024,
    inputs_per_point: int = 8,
    rng: np.random.Generator | None = None,
) -> float:
    """One-step input gain: max of W after a step over {W <= chi(mu)} x {|u| <= mu}.

    The maximum over the sampled product set realizes the gain candidate
    gamma(mu); exact line search never increases V, so the sublevel set
    {W <= gamma(mu)} is then forward invariant for inputs of magnitude up
    to mu (checked separately by check_pmu_invariance).
    """
    if mu < 0:
        raise ContractError("mu must be nonnegative")
    if mu == 0.0:
        return 0.0
    rng = np.random.default_rng(0) if rng is None else rng
    cap = float(chi.evaluate(mu))
    pool = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    kept = [
        x
        for x in pool
        if sys.domain.contains(x) and sys.gap(x) <= cap
    ]
    if not kept:
        raise CoverageError("no sample points in the sublevel set W <= chi(mu)")
    worst = 0.0
    for x in kept:
        dirs = _ball_directions(rng, sys.input_dim, inputs_per_point)
        for j, dirv in enumerate(dirs):
            # alternate full-magnitude and interior draws to cover the ball
            mag = mu if j % 2 == 0 else mu * rng.uniform()
            out = descent_step_detail(sys, x, mag * dirv)
            worst = max(worst, sys.gap(out.x_plus))
    return worst


@dataclass(frozen=True)
class InvarianceReport:
    n_checked: int
    violation_count: int
    worst_excess: float

    @property
    def passed(self) -> bool:
        return self.violation_count == 0


def check_pmu_invariance(
    sys: DescentSystem,
    mu: float,
    gamma_mu: float,
    sampler,
    n_samples: int = 1024,
    inputs_per_point: int = 4,
    rng: np.random.Generator | None = None,
) -> InvarianceReport:
    """One step from sampled points of {W <= gamma_mu} stays there (slack 1e-9)."""
    rng = np.random.default_rng(0) if rng is None else rng
    pool = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    kept = [x for x in pool if sys.domain.contains(x) and sys.gap(x) <= gamma_mu]
    if not kept:
        raise CoverageError("no sample points in the candidate invariant set")
    slack = 1e-9 * (1.0 + abs(gamma_mu))
    checked, violations, worst = 0, 0, -math.inf
    for x in kept:
        for dirv in _ball_directions(rng, sys.input_dim, inputs_per_point):
            out = descent_step_detail(sys, x, mu * dirv)
            excess = sys.gap(out.x_plus) - gamma_mu - slack
            checked += 1
            worst = max(worst, excess)
            if excess > 0:
                violations += 1
    return InvarianceReport(checked, violations, worst)


# ---------------------------------------------------------------------------
# discrete-time Lyapunov certificate


@dataclass(frozen=True)
class DtCertificateReport:
    n_checked: int
    violation_count: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violation_count == 0


@dataclass(frozen=True)
class DtCertificate:
    chi: MonotoneCurve
    alpha: MonotoneCurve
    report: DtCertificateReport


def build_dt_lyapunov_certificate(
    sys: DescentSystem,
    profile: LipschitzProfile,
    alpha_tilde: MonotoneCurve,
    sampler,
    chi_levels: Sequence[float] | None = None,
    n_samples: int = 1024,
    n_grid: int = 129,
    rng: np.random.Generator | None = None,
) -> DtCertificate:
    """Size-trigger curve chi and per-step decrease rate alpha for descent.

    chi satisfies chi(|grad V(x)| / (2 K_B)) >= omega(x) on samples, so
    omega(x) >= chi(|u|) forces |B(x) u| <= |grad V(x)| / 2 and the decrease
    lemma applies with the profiled Lipschitz constant:

        alpha(r) = alpha_tilde(r) / (18 L(r + vbar)),

    taken through a nondecreasing minorant on a knot grid that includes the
    profile boundaries.  The implication

        omega(x) >= chi(|u|)  =>  W(one step) - W(x) <= -alpha(W(x))

    is then verified on sampled pairs; violations are counted in the report.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    kb = sys.input_gain
    if kb <= 0:
        raise ContractError("the certificate needs a positive input gain bound")

    grad_scale = SizeFunction(
        sys.domain,
        lambda x: float(np.linalg.norm(sys.loss.grad_at(x))) / (2.0 * kb),
        name="gradient scale",
    )
    if chi_levels is None:
        probe = np.atleast_2d(np.asarray(sampler(512), dtype=float))
        ords = np.array(
            [grad_scale.evaluate(x) for x in probe if sys.domain.contains(x)]
        )
        ords = ords[ords > 0]
        if ords.size == 0:
            raise CoverageError("no positive gradient-scale samples for chi levels")
        chi_levels = np.unique(np.quantile(ords, [0.25, 0.5, 0.75, 1.0]))
    chi = compare_sizes(sys.size, grad_scale, sampler, levels=chi_levels, n_samples=n_samples)

    vbar = sys.loss.vbar
    r_max = float(profile.levels[-1]) - vbar
    if r_max <= 0:
        raise ContractError("the profile must cover levels above the minimal value")
    if alpha_tilde.breakpoints[-1] > 0:
        r_max = min(r_max, float(alpha_tilde.breakpoints[-1]))
    knots = np.unique(
        np.concatenate(
            [
                np.linspace(0.0, r_max, n_grid),
                (profile.levels - vbar)[(profile.levels - vbar) <= r_max],
                alpha_tilde.breakpoints[alpha_tilde.breakpoints <= r_max],
            ]
        )
    )
    knots = knots[knots >= 0.0]
    gvals = np.array(
        [
            alpha_tilde.evaluate(r) / (18.0 * profile.at_right(min(r + vbar, profile.levels[-1])))
            for r in knots
        ]
    )
    base = monotone_minorant(knots, gvals)
    eps = 1e-12 * max(1.0, float(gvals[-1]) / max(r_max, 1.0))
    alpha = add_linear_term(base, eps)

    # sampled implication check
    pool = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    checked, violations, worst = 0, 0, -math.inf
    for x in pool:
        if not sys.domain.contains(x):
            continue
        w = sys.gap(x)
        if w + vbar > profile.levels[-1] or w > r_max:
            continue
        omega_x = sys.size.evaluate(x)
        u_cap = float(chi.invert(omega_x))
        for frac in (0.0, 0.33, 0.66, 0.999999):
            mag = frac * u_cap
            dirv = _ball_directions(rng, sys.input_dim, 1)[0]
            u = mag * dirv
            if omega_x < chi.evaluate(float(np.linalg.norm(u))):
                continue
            out = descent_step_detail(sys, x, u)
            drop = sys.gap(out.x_plus) - w
            bound = -float(alpha.evaluate(w))
            margin = drop - bound - 1e-9 * (1.0 + abs(bound))
            checked += 1
            worst = max(worst, margin)
            if margin > 0:
                violations += 1
    if checked == 0:
        raise CoverageError("no sample satisfied the certificate antecedent")
    report = DtCertificateReport(checked, violations, worst)
    return DtCertificate(chi, alpha, report)
