"""Linear-quadratic control primitives.

Continuous-time Lyapunov equations are solved directly through their n^2
Kronecker vectorization (these experiments live at small state dimension, so
a dense solve is both simple and checkable), and the algebraic Riccati
equation through the stable invariant subspace of the Hamiltonian matrix with
a Newton iteration as refinement and fallback.  Every solve verifies its own
residual and raises rather than returning a silently inaccurate factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, DomainError, NumericError, StabilizabilityError


def _as_matrix(m, name: str) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ContractError(f"{name} must be a 2-d array")
    return a


def _check_spd(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise ContractError(f"{name} must be square")
    skew = np.max(np.abs(m - m.T)) if m.size else 0.0
    if skew > 1e-12 * max(1.0, float(np.max(np.abs(m)))):
        raise ContractError(f"{name} is not symmetric (asymmetry {skew:.3e})")
    if np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) <= 0.0:
        raise ContractError(f"{name} must be positive definite")


@dataclass(frozen=True)
class LinearSystem:
    """State matrix A (n x n) and input matrix B (n x m)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.a, "A")
        b = _as_matrix(self.b, "B")
        if a.shape[0] != a.shape[1]:
            raise ContractError("A must be square")
        if b.shape[0] != a.shape[0]:
            raise ContractError("B must have as many rows as A")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]


@dataclass(frozen=True)
class CostWeights:
    """State cost Q, input cost R, and noise covariance Sigma, all SPD."""

    q: np.ndarray
    r: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        q = _as_matrix(self.q, "Q")
        r = _as_matrix(self.r, "R")
        sigma = _as_matrix(self.sigma, "Sigma")
        for mat, name in ((q, "Q"), (r, "R"), (sigma, "Sigma")):
            _check_spd(mat, name)
        object.__setattr__(self, "q", 0.5 * (q + q.T))
        object.__setattr__(self, "r", 0.5 * (r + r.T))
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))


def spectral_abscissa(m) -> float:
    """Largest real part over the eigenvalues."""
    m = _as_matrix(m, "matrix")
    if m.shape[0] != m.shape[1]:
        raise ContractError("spectral abscissa needs a square matrix")
    if m.shape[0] == 1:
        return float(m[0, 0])
    return float(np.max(np.linalg.eigvals(m).real))


def is_hurwitz(m, margin: float = 0.0) -> bool:
    return spectral_abscissa(m) < -margin


def solve_lyapunov(f, s) -> np.ndarray:
    """Solve F P + P F^T + S = 0 for Hurwitz F via Kronecker vectorization."""
    f = _as_matrix(f, "F")
    s = _as_matrix(s, "S")
    n = f.shape[0]
    if f.shape != (n, n) or s.shape != (n, n):
        raise ContractError("F and S must be square of equal size")
    if not is_hurwitz(f):
        raise DomainError("F must be Hurwitz for the Lyapunov equation")
    if n == 1:
        p = np.array([[s[0, 0] / (-2.0 * f[0, 0])]])
    else:
        eye = np.eye(n)
        # column-stacked vec: vec(FP) = (I (x) F) vec(P), vec(P F^T) = (F (x) I) vec(P)
        lhs = np.kron(eye, f) + np.kron(f, eye)
        p = np.linalg.solve(lhs, -s.reshape(-1, order="F")).reshape((n, n), order="F")
        p = 0.5 * (p + p.T)
    residual = np.linalg.norm(f @ p + p @ f.T + s)
    if residual > 1e-10 * (1.0 + np.linalg.norm(s)):
        raise NumericError(f"Lyapunov residual {residual:.3e} beyond tolerance")
    return p


def solve_dual_lyapunov(f, m) -> np.ndarray:
    """Solve F^T L + L F + M = 0 for Hurwitz F."""
    return solve_lyapunov(_as_matrix(f, "F").T, m)


def _newton_kleinman(sys: LinearSystem, w: CostWeights, k0: np.ndarray, iters: int = 60):
    rinv = np.linalg.inv(w.r)
    k = np.asarray(k0, dtype=float)
    pi = None
    for _ in range(iters):
        f = sys.a - sys.b @ k
        if not is_hurwitz(f):
            raise StabilizabilityError("Newton iteration lost stability")
        pi = solve_dual_lyapunov(f, w.q + k.T @ w.r @ k)
        k_next = rinv @ sys.b.T @ pi
        if np.max(np.abs(k_next - k)) <= 1e-14 * (1.0 + np.max(np.abs(k))):
            return pi, k_next
        k = k_next
    return pi, k


def _riccati_residual(sys: LinearSystem, w: CostWeights, pi: np.ndarray) -> float:
    rinv = np.linalg.inv(w.r)
    res = pi @ sys.b @ rinv @ sys.b.T @ pi - sys.a.T @ pi - pi @ sys.a - w.q
    return float(np.linalg.norm(res))


def solve_riccati(sys: LinearSystem, w: CostWeights, k0=None) -> tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution of Pi B R^-1 B^T Pi - A^T Pi - Pi A - Q = 0.

    Returns (Pi, Kstar) with Kstar = R^-1 B^T Pi and A - B Kstar Hurwitz.
    The stable invariant subspace of the Hamiltonian matrix provides the
    primary solution; Newton refinement polishes it, and a caller-supplied
    stabilizing gain k0 seeds the Newton fallback when the subspace method
    fails.
    """
    n = sys.n
    rinv = np.linalg.inv(w.r)
    tol = 1e-9 * (1.0 + np.linalg.norm(w.q))
    pi = None
    try:
        ham = np.block([[sys.a, -sys.b @ rinv @ sys.b.T], [-w.q, -sys.a.T]])
        _, z, sdim = sla.schur(ham, output="real", sort="lhp")
        if sdim != n:
            raise StabilizabilityError("Hamiltonian matrix has no n-dimensional stable subspace")
        u1, u2 = z[:n, :n], z[n:, :n]
        pi = np.linalg.solve(u1.T, u2.T).T  # u2 @ inv(u1)
        pi = np.real(0.5 * (pi + pi.T))
        k = rinv @ sys.b.T @ pi
        if is_hurwitz(sys.a - sys.b @ k):
            pi, k = _newton_kleinman(sys, w, k, iters=8)
        else:
            pi = None
    except (np.linalg.LinAlgError, StabilizabilityError):
        pi = None
    if pi is None:
        if k0 is None:
            raise StabilizabilityError("Riccati solve failed and no stabilizing seed was given")
        pi, k = _newton_kleinman(sys, w, np.asarray(k0, dtype=float))
    residual = _riccati_residual(sys, w, pi)
    if residual > tol:
        raise NumericError(f"Riccati residual {residual:.3e} beyond tolerance {tol:.3e}")
    if np.min(np.linalg.eigvalsh(pi)) <= 0.0:
        raise NumericError("Riccati solution is not positive definite")
    kstar = rinv @ sys.b.T @ pi
    if not is_hurwitz(sys.a - sys.b @ kstar):
        raise StabilizabilityError("optimal gain failed the closed-loop stability check")
    return pi, kstar
