"""Differentiable objectives used as test problems.

A SmoothLoss packages a value, its gradient, the open domain they live on,
and the minimal value at the domain's equilibrium.  Flow and descent only
ever touch this interface, so quadratic toys, polynomial constructions, and
policy-gradient objectives are interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domains import OpenDomain, full_space, open_interval
from .errors import ContractError, DomainError


@dataclass(frozen=True)
class SmoothLoss:
    domain: OpenDomain
    value: Callable[[np.ndarray], float] = field(repr=False)
    grad: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    vbar: float
    name: str = ""

    @property
    def xbar(self) -> np.ndarray:
        return self.domain.equilibrium

    def value_at(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if not self.domain.contains(x):
            raise DomainError("point lies outside the loss domain")
        return float(self.value(x))

    def grad_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if not self.domain.contains(x):
            raise DomainError("point lies outside the loss domain")
        return np.asarray(self.grad(x), dtype=float).reshape(-1)


def quadratic_loss(hessian, xbar=None, domain: OpenDomain | None = None) -> SmoothLoss:
    """V(x) = (x - xbar)^T H (x - xbar) / 2 for symmetric positive definite H."""
    h = np.atleast_2d(np.asarray(hessian, dtype=float))
    if h.shape[0] != h.shape[1]:
        raise ContractError("hessian must be square")
    if np.max(np.abs(h - h.T)) > 1e-12 * max(1.0, float(np.max(np.abs(h)))):
        raise ContractError("hessian must be symmetric")
    if np.min(np.linalg.eigvalsh(h)) <= 0:
        raise ContractError("hessian must be positive definite")
    if domain is None:
        center = np.zeros(h.shape[0]) if xbar is None else np.asarray(xbar, dtype=float).reshape(-1)
        domain = full_space(center)
    eq = domain.equilibrium

    def value(x):
        d = x - eq
        return 0.5 * float(d @ h @ d)

    def grad(x):
        return h @ (x - eq)

    return SmoothLoss(domain, value, grad, vbar=0.0, name="quadratic")


def polynomial_loss(coefficients, domain: OpenDomain) -> SmoothLoss:
    """Scalar V(x) = sum_j c_j x^j on a 1-d domain; the equilibrium must be
    the minimizer there (checked at construction by a dense scan)."""
    if domain.dimension != 1:
        raise ContractError("polynomial losses are one-dimensional")
    poly = np.polynomial.Polynomial(np.asarray(coefficients, dtype=float))
    dpoly = poly.deriv()
    eq = float(domain.equilibrium[0])
    vbar = float(poly(eq))

    def value(x):
        return float(poly(float(x[0])))

    def grad(x):
        return np.array([dpoly(float(x[0]))])

    if abs(float(dpoly(eq))) > 1e-9 * (1.0 + abs(vbar)):
        raise ContractError("equilibrium is not a critical point of the polynomial")
    return SmoothLoss(domain, value, grad, vbar=vbar, name="polynomial")


def stuck_example_loss() -> SmoothLoss:
    """V(x) = x^2 / 2 on the open interval (-1, 1)."""
    dom = open_interval(-1.0, 1.0, 0.0)
    return SmoothLoss(
        dom,
        lambda x: 0.5 * float(x[0]) ** 2,
        lambda x: np.array([float(x[0])]),
        vbar=0.0,
        name="half-square on (-1,1)",
    )
