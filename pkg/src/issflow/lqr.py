"""Policy-gradient view of the linear-quadratic regulator.

The decision variable is a static feedback gain K; the objective is the
steady-state quadratic cost of the closed loop A - B K driven by noise with
covariance Sigma.  The objective is finite exactly on the open set of
stabilizing gains, blows up at its boundary, and satisfies a
gradient-dominance (Polyak-Lojasiewicz) inequality on sublevel sets, which is
what the stability experiments exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .comparison import MonotoneCurve, add_linear_term, monotone_minorant
from .domains import OpenDomain
from .errors import ContractError, CoverageError, DomainError, DomainExitError
from .linctrl import CostWeights, LinearSystem, is_hurwitz, solve_dual_lyapunov, solve_lyapunov, solve_riccati
from .problems import SmoothLoss


def stabilizing_gain_domain(sys: LinearSystem, equilibrium: np.ndarray) -> OpenDomain:
    """Open set {K : A - B K Hurwitz}, over gains flattened row-major."""
    n, m = sys.n, sys.m

    def member(x: np.ndarray) -> bool:
        k = x.reshape(m, n)
        return is_hurwitz(sys.a - sys.b @ k)

    return OpenDomain(m * n, member, np.asarray(equilibrium, dtype=float).reshape(-1),
                      None, name="stabilizing gains")


@dataclass(frozen=True)
class LQRInstance:
    """A system with cost weights, its optimal gain, and the gain domain."""

    sys: LinearSystem
    weights: CostWeights
    pistar: np.ndarray
    kstar: np.ndarray
    vstar: float
    domain: OpenDomain

    def _gain(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if k.ndim == 1:
            k = k.reshape(self.sys.m, self.sys.n)
        if k.shape != (self.sys.m, self.sys.n):
            raise ContractError(f"gain must have shape {(self.sys.m, self.sys.n)}")
        return k

    def closed_loop(self, k) -> np.ndarray:
        return self.sys.a - self.sys.b @ self._gain(k)

    def is_stabilizing(self, k) -> bool:
        return is_hurwitz(self.closed_loop(k))

    def loss(self, k) -> float:
        """V(K) = trace((Q + K^T R K) P) with F P + P F^T + Sigma = 0."""
        k = self._gain(k)
        f = self.closed_loop(k)
        if not is_hurwitz(f):
            raise DomainExitError("gain is not stabilizing")
        p = solve_lyapunov(f, self.weights.sigma)
        return float(np.trace((self.weights.q + k.T @ self.weights.r @ k) @ p))

    def grad(self, k) -> np.ndarray:
        """gradient 2 (R K - B^T L) P, with L the closed-loop observability factor."""
        k = self._gain(k)
        f = self.closed_loop(k)
        if not is_hurwitz(f):
            raise DomainExitError("gain is not stabilizing")
        p = solve_lyapunov(f, self.weights.sigma)
        ell = solve_dual_lyapunov(f, self.weights.q + k.T @ self.weights.r @ k)
        return 2.0 * (self.weights.r @ k - self.sys.b.T @ ell) @ p

    def as_loss(self) -> SmoothLoss:
        """Flattened-gain view compatible with the flow and descent engines."""
        m, n = self.sys.m, self.sys.n

        def value(x):
            return self.loss(x.reshape(m, n))

        def grad(x):
            return self.grad(x.reshape(m, n)).reshape(-1)

        return SmoothLoss(self.domain, value, grad, vbar=self.vstar, name="lqr cost")


def make_lqr(sys: LinearSystem, weights: CostWeights, k0=None) -> LQRInstance:
    pistar, kstar = solve_riccati(sys, weights, k0=k0)
    domain = stabilizing_gain_domain(sys, kstar.reshape(-1))
    fstar = sys.a - sys.b @ kstar
    pstar = solve_lyapunov(fstar, weights.sigma)
    vstar = float(np.trace((weights.q + kstar.T @ weights.r @ kstar) @ pstar))
    return LQRInstance(sys, weights, pistar, kstar, vstar, domain)


def scalar_lqr(b: float = 1.0) -> LQRInstance:
    """The normalized scalar instance: a = q = r = sigma = 1, input gain b."""
    one = np.array([[1.0]])
    return make_lqr(LinearSystem(one, np.array([[b]])), CostWeights(one, one, one))


def scalar_closed_form(b: float, k: float) -> tuple[float, float]:
    """Closed-form cost and derivative of the normalized scalar instance.

    V(k) = (k^2 + 1) / (2 (b k - 1)),
    V'(k) = (b k^2 - 2 k - b) / (2 (b k - 1)^2),
    both defined exactly on the stabilizing set {k : b k > 1}.
    """
    if b * k <= 1.0:
        raise DomainError("gain is outside the stabilizing half-line {bk > 1}")
    denom = b * k - 1.0
    v = (k * k + 1.0) / (2.0 * denom)
    dv = (b * k * k - 2.0 * k - b) / (2.0 * denom * denom)
    return v, dv


def sample_stabilizing_gains(
    inst: LQRInstance,
    count: int,
    rng: np.random.Generator,
    scale: float = 0.1,
    max_level: float | None = None,
) -> np.ndarray:
    """Draw stabilizing gains around the optimum.

    Gaussian perturbations of Kstar are accepted when stabilizing (and, when
    max_level is given, when the cost gap V - Vstar stays below it).  The
    perturbation scale doubles until roughly half the proposals get rejected,
    so the draws reach out to the boundary region instead of hugging the
    optimum.
    """
    m, n = inst.sys.m, inst.sys.n

    def acceptable(k):
        if not inst.is_stabilizing(k):
            return False
        if max_level is not None and inst.loss(k) - inst.vstar > max_level:
            return False
        return True

    for _ in range(40):
        batch = inst.kstar + scale * rng.normal(size=(64, m, n))
        rate = sum(acceptable(k) for k in batch) / 64.0
        if rate < 0.55:
            break
        scale *= 2.0
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 500:
            raise CoverageError("gain sampling starved; acceptance rate too low")
        for k in inst.kstar + scale * rng.normal(size=(4 * count, m, n)):
            if acceptable(k):
                out.append(k)
    return np.asarray(out[:count])


def pl_constant(
    loss: SmoothLoss,
    level: float,
    sampler: Callable[[int], np.ndarray],
    n_samples: int = 2048,
    exclusion_radius: float = 1e-6,
) -> float:
    """Empirical gradient-dominance constant on the sublevel {V - vbar <= level}.

    Returns min |grad V|^2 / (V - vbar) over accepted draws, skipping points
    within exclusion_radius of the minimizer where the ratio degenerates.
    """
    if level <= 0:
        raise ContractError("level must be positive")
    pts = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    eq = loss.xbar
    best = np.inf
    used = 0
    for x in pts:
        if np.linalg.norm(x - eq) <= exclusion_radius:
            continue
        try:
            gap = loss.value_at(x) - loss.vbar
        except DomainExitError:
            continue
        if gap <= 0 or gap > level:
            continue
        g = loss.grad_at(x)
        best = min(best, float(g @ g) / gap)
        used += 1
    if used == 0:
        raise CoverageError("no usable samples inside the requested sublevel set")
    return float(best)


def pl_alpha_curve(
    loss: SmoothLoss,
    levels: Sequence[float],
    sampler: Callable[[int], np.ndarray],
    n_samples: int = 4096,
    refine: int = 16,
) -> MonotoneCurve:
    """Class-K decrease rate alpha with |grad V(x)|^2 >= alpha(V(x) - vbar).

    Per-level gradient-dominance constants give the pointwise bound
    c(level containing s) * s; its monotone minorant on a refined grid is a
    valid single curve, strictified by an epsilon * r term that is negligible
    against the verification slacks.
    """
    levels = sorted(float(v) for v in levels)
    if not levels or levels[0] <= 0:
        raise ContractError("levels must be positive")
    pts = np.atleast_2d(np.asarray(sampler(n_samples), dtype=float))
    gaps, ratios = [], []
    eq = loss.xbar
    for x in pts:
        if np.linalg.norm(x - eq) <= 1e-6:
            continue
        try:
            gap = loss.value_at(x) - loss.vbar
        except DomainExitError:
            continue
        if gap <= 0:
            continue
        g = loss.grad_at(x)
        gaps.append(gap)
        ratios.append(float(g @ g) / gap)
    gaps = np.asarray(gaps)
    ratios = np.asarray(ratios)
    constants = []
    for r in levels:
        mask = gaps <= r
        if not np.any(mask):
            raise CoverageError(f"no usable samples inside the sublevel {{V - vbar <= {r:g}}}")
        constants.append(float(np.min(ratios[mask])))
    grid = [0.0]
    vals = [0.0]
    prev = 0.0
    for r, c in zip(levels, constants):
        seg = np.linspace(prev, r, refine + 1)[1:]
        grid.extend(seg)
        vals.extend(c * seg)
        prev = r
    curve = monotone_minorant(np.asarray(grid), np.asarray(vals), tail_slope=0.0)
    eps = 1e-9 * max(1.0, curve.values[-1] / max(curve.breakpoints[-1], 1.0))
    return add_linear_term(curve, eps)
