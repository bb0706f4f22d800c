import numpy as np
import pytest

from issflow.errors import ContractError, DomainError
from issflow.problems import polynomial_loss, quadratic_loss, stuck_example_loss


class TestQuadraticLoss:
    def test_value_and_gradient(self):
        loss = quadratic_loss(np.diag([1.0, 4.0]), xbar=[1.0, -1.0])
        x = np.array([2.0, 1.0])
        assert loss.value_at(x) == pytest.approx(0.5 * (1.0 + 4.0 * 4.0))
        assert np.allclose(loss.grad_at(x), [1.0, 8.0])
        assert loss.value_at(loss.xbar) == 0.0

    def test_rejects_indefinite_hessian(self):
        with pytest.raises(ContractError):
            quadratic_loss(np.diag([1.0, -1.0]))

    def test_rejects_asymmetric_hessian(self):
        with pytest.raises(ContractError):
            quadratic_loss(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestPolynomialLoss:
    def test_quartic_well(self):
        # V(x) = x^4, minimum 0 at the origin
        from issflow.domains import open_interval

        loss = polynomial_loss([0.0, 0.0, 0.0, 0.0, 1.0], open_interval(-2.0, 2.0, 0.0))
        assert loss.value_at(np.array([1.5])) == pytest.approx(1.5**4)
        assert loss.grad_at(np.array([1.5]))[0] == pytest.approx(4 * 1.5**3)

    def test_rejects_noncritical_equilibrium(self):
        from issflow.domains import open_interval

        with pytest.raises(ContractError):
            polynomial_loss([0.0, 1.0, 1.0], open_interval(-2.0, 2.0, 0.0))


class TestStuckExampleLoss:
    def test_shape(self):
        loss = stuck_example_loss()
        assert loss.value_at(np.array([0.5])) == pytest.approx(0.125)
        assert loss.grad_at(np.array([0.5]))[0] == pytest.approx(0.5)
        assert loss.vbar == 0.0
        with pytest.raises(DomainError):
            loss.value_at(np.array([1.0]))
