import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import quad_vec

from issflow.errors import ContractError, DomainError, StabilizabilityError
from issflow.linctrl import (
    CostWeights,
    LinearSystem,
    is_hurwitz,
    solve_dual_lyapunov,
    solve_lyapunov,
    solve_riccati,
    spectral_abscissa,
)


class TestSpectralAbscissa:
    def test_diagonal(self):
        assert spectral_abscissa(-np.eye(3)) == pytest.approx(-1.0)

    def test_damped_oscillator(self):
        # eigenvalues of [[0,1],[-1,-1]] solve s^2 + s + 1 = 0, real part -1/2
        assert spectral_abscissa(np.array([[0.0, 1.0], [-1.0, -1.0]])) == pytest.approx(-0.5)

    def test_nilpotent(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert spectral_abscissa(m) == pytest.approx(0.0)
        assert not is_hurwitz(m)


class TestValidation:
    def test_weights_must_be_symmetric(self):
        with pytest.raises(ContractError):
            CostWeights(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(1), np.eye(2))

    def test_weights_must_be_positive_definite(self):
        with pytest.raises(ContractError):
            CostWeights(np.diag([1.0, 0.0]), np.eye(1), np.eye(2))

    def test_system_shapes(self):
        with pytest.raises(ContractError):
            LinearSystem(np.eye(2), np.ones((3, 1)))


class TestLyapunov:
    def test_worked_example(self):
        f = np.array([[0.0, 1.0], [-2.0, -3.0]])
        p = solve_lyapunov(f, np.eye(2))
        expect = np.array([[1.0, -0.5], [-0.5, 0.5]])
        assert np.max(np.abs(p - expect)) <= 1e-10

    def test_scalar(self):
        assert solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]]))[0, 0] == pytest.approx(1.0)

    def test_matches_library_solver(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = rng.integers(1, 7)
            f = rng.normal(size=(n, n)) - (1.5 + n / 2) * np.eye(n)
            if not is_hurwitz(f):
                continue
            s = rng.normal(size=(n, n))
            s = s @ s.T + np.eye(n)
            p = solve_lyapunov(f, s)
            oracle = sla.solve_continuous_lyapunov(f, -s)
            assert np.max(np.abs(p - oracle)) <= 1e-8 * (1 + np.max(np.abs(oracle)))

    def test_integral_representation(self):
        # P = integral of exp(tF) S exp(tF^T) dt, quadrature oracle on a 2x2
        f = np.array([[0.0, 1.0], [-2.0, -3.0]])
        s = np.array([[1.0, 0.2], [0.2, 2.0]])
        p = solve_lyapunov(f, s)
        integrand = lambda t: sla.expm(t * f) @ s @ sla.expm(t * f.T)
        oracle, _ = quad_vec(integrand, 0.0, 60.0, epsabs=1e-10, epsrel=1e-10)
        assert np.max(np.abs(p - oracle)) <= 1e-6

    def test_residual_definition(self):
        rng = np.random.default_rng(5)
        f = rng.normal(size=(4, 4)) - 4 * np.eye(4)
        s = np.eye(4)
        p = solve_lyapunov(f, s)
        assert np.linalg.norm(f @ p + p @ f.T + s) <= 1e-10 * (1 + np.linalg.norm(s))
        assert np.max(np.abs(p - p.T)) == 0.0

    def test_rejects_unstable(self):
        with pytest.raises(DomainError):
            solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))


class TestDualLyapunov:
    def test_scalar(self):
        assert solve_dual_lyapunov(np.array([[-1.0]]), np.array([[1.0]]))[0, 0] == pytest.approx(0.5)

    def test_scalar_gain_observability_factor(self):
        # closed loop a - b k = -1 with q + k^2 r = 5: 2(-1)L + 5 = 0
        ell = solve_dual_lyapunov(np.array([[-1.0]]), np.array([[5.0]]))
        assert ell[0, 0] == pytest.approx(2.5)

    def test_identity_pair(self):
        ell = solve_dual_lyapunov(-np.eye(2), 2.0 * np.eye(2))
        assert np.allclose(ell, np.eye(2), atol=1e-12)


class TestRiccati:
    def test_scalar_normalized_instance(self):
        sys = LinearSystem(np.array([[1.0]]), np.array([[1.0]]))
        w = CostWeights(np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]))
        pi, k = solve_riccati(sys, w)
        assert pi[0, 0] == pytest.approx(1.0 + np.sqrt(2.0), abs=1e-10)
        assert k[0, 0] == pytest.approx(1.0 + np.sqrt(2.0), abs=1e-10)

    def test_zero_input_matrix_reduces_to_lyapunov(self):
        sys = LinearSystem(-np.eye(2), np.zeros((2, 1)))
        w = CostWeights(np.eye(2), np.eye(1), np.eye(2))
        pi, k = solve_riccati(sys, w)
        assert np.allclose(pi, 0.5 * np.eye(2), atol=1e-10)
        assert np.allclose(k, 0.0, atol=1e-12)

    def test_random_instances_match_library(self):
        rng = np.random.default_rng(42)
        done = 0
        while done < 12:
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 3))
            a = rng.normal(size=(n, n))
            b = rng.normal(size=(n, m))
            q = rng.normal(size=(n, n))
            q = q @ q.T + 0.5 * np.eye(n)
            r = rng.normal(size=(m, m))
            r = r @ r.T + 0.5 * np.eye(m)
            sys = LinearSystem(a, b)
            w = CostWeights(q, r, np.eye(n))
            try:
                pi, k = solve_riccati(sys, w)
            except StabilizabilityError:
                continue
            oracle = sla.solve_continuous_are(a, b, q, r)
            assert np.max(np.abs(pi - oracle)) <= 1e-7 * (1 + np.max(np.abs(oracle)))
            assert is_hurwitz(a - b @ k)
            assert np.min(np.linalg.eigvalsh(pi)) > 0
            done += 1

    def test_newton_seed_agrees_with_subspace_route(self):
        # double integrator with a known stabilizing seed
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        b = np.array([[0.0], [1.0]])
        sys = LinearSystem(a, b)
        w = CostWeights(np.eye(2), np.eye(1), np.eye(2))
        pi1, k1 = solve_riccati(sys, w)
        from issflow.linctrl import _newton_kleinman

        pi2, k2 = _newton_kleinman(sys, w, np.array([[1.0, 1.0]]))
        assert np.max(np.abs(pi1 - pi2)) <= 1e-9
        assert np.max(np.abs(k1 - k2)) <= 1e-9

    def test_unstabilizable_instance_raises(self):
        # unstable mode decoupled from the input
        a = np.diag([1.0, -1.0])
        b = np.array([[0.0], [1.0]])
        sys = LinearSystem(a, b)
        w = CostWeights(np.eye(2), np.eye(1), np.eye(2))
        with pytest.raises(StabilizabilityError):
            solve_riccati(sys, w)

    def test_riccati_residual_bound(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 2))
        q = 2.0 * np.eye(3)
        sys = LinearSystem(a, b)
        w = CostWeights(q, np.eye(2), np.eye(3))
        pi, _ = solve_riccati(sys, w)
        rinv = np.linalg.inv(w.r)
        res = pi @ b @ rinv @ b.T @ pi - a.T @ pi - pi @ a - q
        assert np.linalg.norm(res) <= 1e-9 * (1 + np.linalg.norm(q))
