"""Open domains and size functions.

A size function generalizes the norm distance to an equilibrium: it is
continuous, vanishes only at the equilibrium, and blows up along sequences
that approach the boundary or escape to infinity.  That blow-up is what makes
stability statements on open sets meaningful, since trajectories measured by
a size function cannot sneak out of the domain while the measurement stays
bounded.

Everything empirical here (axiom checks, size comparisons) is sample-based:
the guarantees hold at the drawn points and the constructions are shifted to
the conservative side so that interpolation between samples stays dominated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .comparison import MonotoneCurve, majorize_kinfty
from .errors import ContractError, CoverageError, DomainError, MinimumViolationError


@dataclass(frozen=True)
class OpenDomain:
    """Open subset of R^n with a designated interior equilibrium.

    membership decides x in X for a 1-d float array x.  boundary_distance,
    when available, returns the Euclidean distance to the complement; it is
    required by the reciprocal-distance size construction and optional
    otherwise.
    """

    dimension: int
    membership: Callable[[np.ndarray], bool]
    equilibrium: np.ndarray
    boundary_distance: Optional[Callable[[np.ndarray], float]] = None
    name: str = ""

    def __post_init__(self):
        eq = np.asarray(self.equilibrium, dtype=float).reshape(-1)
        object.__setattr__(self, "equilibrium", eq)
        if eq.size != self.dimension:
            raise ContractError("equilibrium dimension mismatch")
        if not self.membership(eq):
            raise ContractError("equilibrium must belong to the domain")

    def contains(self, x) -> bool:
        return bool(self.membership(np.asarray(x, dtype=float).reshape(-1)))


def full_space(equilibrium) -> OpenDomain:
    eq = np.asarray(equilibrium, dtype=float).reshape(-1)
    return OpenDomain(eq.size, lambda x: True, eq, None, name="R^n")


def open_box(lows, highs, equilibrium) -> OpenDomain:
    """Open axis-aligned box; boundary distance is the smallest face margin."""
    lows = np.asarray(lows, dtype=float).reshape(-1)
    highs = np.asarray(highs, dtype=float).reshape(-1)
    if lows.shape != highs.shape or np.any(lows >= highs):
        raise ContractError("box bounds must satisfy low < high componentwise")

    def member(x):
        return bool(np.all(x > lows) and np.all(x < highs))

    def dist(x):
        return float(min(np.min(x - lows), np.min(highs - x)))

    return OpenDomain(lows.size, member, equilibrium, dist, name="box")


def open_interval(lo: float, hi: float, equilibrium: float) -> OpenDomain:
    return open_box([lo], [hi], [equilibrium])


def scalar_gain_domain(b: float, equilibrium: float) -> OpenDomain:
    """Scalar stabilizing gains {k : b k > 1} with exact boundary distance."""
    if b == 0.0:
        raise ContractError("b must be nonzero")
    thr = 1.0 / b

    def member(x):
        return bool(b * x[0] > 1.0)

    def dist(x):
        return abs(float(x[0]) - thr)

    return OpenDomain(1, member, [equilibrium], dist, name="scalar stabilizing gains")


@dataclass(frozen=True)
class SizeFunction:
    """Nonnegative measurement of displacement from the equilibrium."""

    domain: OpenDomain
    fn: Callable[[np.ndarray], float] = field(repr=False)
    name: str = ""

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if not self.domain.membership(x):
            raise DomainError("size function evaluated outside its domain")
        return float(self.fn(x))

    def __call__(self, x) -> float:
        return self.evaluate(x)

    def many(self, pts: np.ndarray) -> np.ndarray:
        return np.array([self.evaluate(p) for p in np.atleast_2d(pts)])


def norm_size(domain: OpenDomain) -> SizeFunction:
    """omega(x) = |x - xbar|. A genuine size function only when X = R^n."""
    eq = domain.equilibrium
    return SizeFunction(domain, lambda x: float(np.linalg.norm(x - eq)), name="|x - xbar|")


def kurzweil_size(domain: OpenDomain, a: float = 2.0) -> SizeFunction:
    """Size from the reciprocal boundary distance.

    omega(x) = max(|x - xbar|, 1/dist(x) - a/dist(xbar)) with a >= 1, which
    vanishes at xbar, blows up at the boundary, and for a = 2 agrees with the
    plain norm on the ball where the boundary is still far.  Requires a domain
    with a boundary_distance oracle (for X = R^n use norm_size instead).
    """
    if a < 1.0:
        raise ContractError("the reciprocal-distance offset needs a >= 1")
    if domain.boundary_distance is None:
        raise ContractError("kurzweil_size requires a boundary_distance oracle")
    eq = domain.equilibrium
    offset = a / domain.boundary_distance(eq)

    def fn(x):
        return max(float(np.linalg.norm(x - eq)), 1.0 / domain.boundary_distance(x) - offset)

    return SizeFunction(domain, fn, name=f"kurzweil(a={a:g})")


def size_from_loss(loss, sampler=None, n_check: int = 256) -> SizeFunction:
    """omega(x) = V(x) - V(xbar) for a loss whose minimum sits at xbar.

    The minimum claim is spot-checked on sampler draws when one is given, and
    is rechecked on every evaluation: any value below V(xbar) - 1e-12 raises.
    """
    vbar = loss.vbar
    domain = loss.domain

    def gap(x):
        g = loss.value(x) - vbar
        if g < -1e-12:
            raise MinimumViolationError(
                f"loss value undercuts the declared minimum by {-g:.3e} at {x}"
            )
        return max(g, 0.0)

    if sampler is not None:
        for p in sampler(n_check):
            gap(np.asarray(p, dtype=float).reshape(-1))
    return SizeFunction(domain, gap, name="V - V(xbar)")


# ---------------------------------------------------------------------------
# samplers


def box_sampler(rng: np.random.Generator, lows, highs) -> Callable[[int], np.ndarray]:
    lows = np.asarray(lows, dtype=float).reshape(-1)
    highs = np.asarray(highs, dtype=float).reshape(-1)

    def draw(n: int) -> np.ndarray:
        return rng.uniform(lows, highs, size=(n, lows.size))

    return draw


def ball_sampler(rng: np.random.Generator, center, radius: float) -> Callable[[int], np.ndarray]:
    center = np.asarray(center, dtype=float).reshape(-1)

    def draw(n: int) -> np.ndarray:
        g = rng.normal(size=(n, center.size))
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        radii = radius * rng.uniform(size=(n, 1)) ** (1.0 / center.size)
        return center + g * radii

    return draw


def sublevel_sampler(
    rng: np.random.Generator,
    domain: OpenDomain,
    fn: Callable[[np.ndarray], float],
    level: float,
    halfwidth: float = 1.0,
    max_doublings: int = 24,
) -> Callable[[int], np.ndarray]:
    """Uniform rejection sampler for {x in X : fn(x) <= level}.

    The proposal box is centered at the equilibrium and doubles until the
    accepted points stop pressing against its hull, so the box ends up
    covering the sublevel set.  fn evaluations outside the domain are treated
    as rejections.
    """
    eq = domain.equilibrium

    def accepted(pts):
        keep = []
        for p in pts:
            if not domain.membership(p):
                continue
            try:
                if fn(p) <= level:
                    keep.append(p)
            except (DomainError, FloatingPointError):
                continue
        return keep

    def draw(n: int) -> np.ndarray:
        hw = halfwidth
        for _ in range(max_doublings):
            probe = accepted(rng.uniform(eq - hw, eq + hw, size=(max(4 * n, 256), eq.size)))
            if probe and np.max(np.abs(np.asarray(probe) - eq)) > 0.5 * hw:
                hw *= 2.0
                continue
            break
        out = list(probe)
        attempts = 0
        while len(out) < n:
            attempts += 1
            if attempts > 200:
                raise CoverageError("sublevel set rejection sampling starved")
            out.extend(accepted(rng.uniform(eq - hw, eq + hw, size=(4 * n, eq.size))))
        return np.asarray(out[:n])

    return draw


# ---------------------------------------------------------------------------
# empirical size comparison and axiom diagnostics


def compare_sizes(
    w1: SizeFunction,
    w2: SizeFunction,
    sampler: Callable[[int], np.ndarray],
    levels: Sequence[float],
    n_samples: int = 4096,
) -> MonotoneCurve:
    """Strict unbounded gain alpha with w1(x) <= alpha(w2(x)) on every draw.

    Empirical sublevel maxima of w1 over {w2 <= r} are recorded on the level
    grid and then majorized with a one-level shift, which keeps the guarantee
    valid between grid levels for every sampled point.
    """
    levels = np.asarray(sorted(float(v) for v in levels), dtype=float)
    if levels.size == 0 or levels[0] <= 0:
        raise ContractError("levels must be positive and nonempty")
    pts = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    a1 = w1.many(pts)
    a2 = w2.many(pts)
    if np.any((a2 <= 0) & (a1 > 1e-12)):
        raise ContractError("second size vanishes at a sample where the first does not")
    top = float(np.max(a2))
    if top > levels[-1]:
        levels = np.append(levels, top)
    ordinates = [0.0]
    for r in levels:
        mask = a2 <= r
        if not np.any(mask):
            raise CoverageError(f"no sample reached the sublevel {{w2 <= {r:g}}}")
        ordinates.append(float(np.max(a1[mask])))
    ordinates = np.maximum.accumulate(np.asarray(ordinates))
    positive = a2[a2 > 0]
    gap = min(levels[0] / 2.0, float(np.min(positive)) / 2.0) if positive.size else levels[0] / 2.0
    curve = majorize_kinfty(np.concatenate([[0.0], levels]), ordinates, anchor_gap=gap)
    worst = np.max(a1 - np.array([curve.evaluate(v) for v in a2]))
    if worst > 1e-9 * (1.0 + float(np.max(a1))):
        raise CoverageError(f"majorization failed to dominate a drawn sample by {worst:.3e}")
    return curve


@dataclass(frozen=True)
class SizeAxiomReport:
    value_at_equilibrium: float
    min_off_center: float
    off_center_radius: float
    continuity_gap: float
    divergence_values: list
    diverged: list
    passed: bool


def check_size_axioms(
    w: SizeFunction,
    sampler: Callable[[int], np.ndarray],
    escape_sequences: Sequence[np.ndarray] = (),
    n_samples: int = 1024,
    off_center_radius: float = 1e-3,
    divergence_threshold: float = 1e3,
) -> SizeAxiomReport:
    """Sample-based diagnostic of the size-function axioms (not a proof).

    Checks that the value at the equilibrium is zero, that sampled points a
    positive distance away have positive size, that nearby pairs have nearby
    sizes, and that the supplied escape sequences (marching to the boundary
    or to infinity) drive the size beyond a threshold monotonically in the
    tail.
    """
    eq = w.domain.equilibrium
    v0 = w.evaluate(eq)
    pts = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    far = [p for p in pts if np.linalg.norm(p - eq) >= off_center_radius]
    min_off = min((w.evaluate(p) for p in far), default=np.inf)
    cont = 0.0
    for p in pts[: min(128, len(pts))]:
        step = 1e-7 * (1.0 + np.linalg.norm(p))
        shifted = p + step * np.ones_like(p) / np.sqrt(p.size)
        if w.domain.membership(shifted):
            cont = max(cont, abs(w.evaluate(shifted) - w.evaluate(p)))
    div_values, diverged = [], []
    for seq in escape_sequences:
        vals = [w.evaluate(p) for p in seq]
        div_values.append(vals)
        tail_monotone = all(b >= a for a, b in zip(vals[-4:], vals[-3:]))
        diverged.append(bool(vals[-1] > divergence_threshold and tail_monotone))
    passed = (
        v0 == 0.0
        and min_off > 0.0
        and all(diverged)
    )
    return SizeAxiomReport(
        value_at_equilibrium=v0,
        min_off_center=float(min_off),
        off_center_radius=off_center_radius,
        continuity_gap=float(cont),
        divergence_values=div_values,
        diverged=diverged,
        passed=bool(passed),
    )
