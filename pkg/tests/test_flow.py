import math

import numpy as np
import pytest

from issflow.comparison import invert_curve, linear_curve, scale_curve
from issflow.domains import box_sampler, compare_sizes, norm_size, size_from_loss
from issflow.errors import ContractError, DomainError
from issflow.flow import (
    check_liss,
    constant_input,
    decaying_input,
    estimate_gain,
    flow_dissipation,
    integrate,
    iss_envelope,
    make_flow_system,
    piecewise_constant_input,
    quadratic_gain_curve,
    sinusoidal_input,
    verify_iss_trace,
    zero_input,
)
from issflow.lqr import scalar_lqr
from issflow.problems import quadratic_loss, stuck_example_loss


@pytest.fixture(scope="module")
def scalar_sys():
    # xdot = -x + u
    return make_flow_system(quadratic_loss(np.eye(1)), eta=1.0)


@pytest.fixture(scope="module")
def interval_sys():
    # same dynamics restricted to (-1, 1)
    return make_flow_system(stuck_example_loss(), eta=1.0)


class TestInputSignals:
    def test_constant_and_zero(self):
        u = constant_input([0.3, -0.4])
        assert u.sup_norm == pytest.approx(0.5)
        assert np.array_equal(u.at(7.0), [0.3, -0.4])
        z = zero_input(2)
        assert z.sup_norm == 0.0
        assert np.array_equal(z.at(1.0), [0.0, 0.0])

    def test_piecewise_right_continuous(self):
        u = piecewise_constant_input([0.0, 1.0, 2.0], [[0.1], [0.5], [0.2]])
        assert u.at(0.0)[0] == 0.1
        assert u.at(0.999)[0] == 0.1
        assert u.at(1.0)[0] == 0.5  # value switches exactly at the switch time
        assert u.at(5.0)[0] == 0.2
        assert u.sup_norm == pytest.approx(0.5)

    def test_piecewise_must_start_at_zero(self):
        with pytest.raises(ContractError):
            piecewise_constant_input([0.5, 1.0], [[1.0], [2.0]])

    def test_sinusoidal_and_decaying(self):
        s = sinusoidal_input([2.0], frequency=0.25, phase=0.0)
        assert s.at(1.0)[0] == pytest.approx(2.0)  # sin(pi/2)
        assert s.sup_norm == 2.0
        d = decaying_input([1.0], rate=0.5)
        assert d.at(2.0)[0] == pytest.approx(math.exp(-1.0))
        assert d.sup_norm == 1.0

    def test_declared_bound_is_checked(self):
        from issflow.flow import InputSignal

        lying = InputSignal(lambda t: np.array([2.0]), 1, 0.5, name="liar")
        with pytest.raises(ContractError):
            lying.check_bound(1.0)


class TestIntegrate:
    def test_unforced_scalar_closed_form(self, scalar_sys):
        trace = integrate(scalar_sys, [2.0], zero_input(1), horizon=1.0)
        assert trace.termination == "completed"
        assert trace.final_time == 1.0
        assert trace.final_state[0] == pytest.approx(2.0 * math.exp(-1.0), abs=1e-8)

    def test_constant_input_limit(self, scalar_sys):
        trace = integrate(scalar_sys, [2.0], constant_input([0.3]), horizon=5.0)
        expected = 0.3 + (2.0 - 0.3) * math.exp(-5.0)
        assert trace.final_state[0] == pytest.approx(expected, abs=1e-3)

    def test_equilibrium_is_fixed(self, scalar_sys):
        trace = integrate(scalar_sys, [0.0], zero_input(1), horizon=2.0)
        assert np.all(trace.states == 0.0)
        assert np.all(trace.v == 0.0)

    def test_initial_state_must_be_inside(self, interval_sys):
        with pytest.raises(DomainError):
            integrate(interval_sys, [1.5], zero_input(1), horizon=1.0)

    def test_grid_times_are_recorded_exactly(self, scalar_sys):
        trace = integrate(scalar_sys, [1.0], zero_input(1), horizon=1.0, n_record=11)
        grid = np.linspace(0.0, 1.0, 11)
        recorded = set(trace.times.tolist())
        assert all(g in recorded for g in grid.tolist())

    def test_domain_exit_guard(self, interval_sys):
        # equilibrium of the forced dynamics sits at 2, outside (-1, 1)
        trace = integrate(interval_sys, [0.0], constant_input([2.0]), horizon=5.0)
        assert trace.termination == "domain-exit"
        assert np.all(np.abs(trace.states) < 1.0)
        assert trace.final_state[0] == pytest.approx(1.0, abs=1e-6)
        assert trace.final_time < 5.0

    def test_unforced_v_nonincreasing(self, scalar_sys):
        loss2 = quadratic_loss(np.diag([1.0, 6.0]))
        sys2 = make_flow_system(loss2, eta=0.5)
        for sys, x0 in ((scalar_sys, [1.7]), (sys2, [2.0, -1.0])):
            trace = integrate(sys, x0, zero_input(sys.input_dim), horizon=4.0)
            assert np.all(np.diff(trace.v) <= 1e-9)

    def test_tolerance_refinement(self):
        loss = quadratic_loss(np.diag([1.0, 3.0]))
        sys = make_flow_system(loss, eta=1.0)
        u = sinusoidal_input([0.2, 0.1], frequency=0.3)
        tol = 1e-6
        a = integrate(sys, [1.0, -2.0], u, horizon=3.0, tol=tol)
        b = integrate(sys, [1.0, -2.0], u, horizon=3.0, tol=tol / 2)
        diff = np.linalg.norm(a.final_state - b.final_state)
        assert diff <= 10.0 * tol * (1.0 + np.linalg.norm(b.final_state))

    def test_input_gain_certificate_enforced(self):
        loss = quadratic_loss(np.eye(1))
        sys = make_flow_system(loss, eta=1.0, input_map=lambda x: 2.0 * np.eye(1), input_gain=1.0)
        with pytest.raises(ContractError):
            integrate(sys, [1.0], constant_input([0.1]), horizon=1.0)

    def test_dimension_mismatch_rejected(self, scalar_sys):
        with pytest.raises(ContractError):
            integrate(scalar_sys, [1.0], zero_input(2), horizon=1.0)


class TestCheckLiss:
    def test_unforced_no_violations(self, scalar_sys):
        trace = integrate(scalar_sys, [2.0], zero_input(1), horizon=4.0, n_record=801)
        report = check_liss(scalar_sys, trace)
        assert report.passed
        assert report.worst_margin < 0

    def test_sinusoidal_near_tight_but_sound(self, scalar_sys):
        # equality in the bound occurs exactly where x(t) = u(t)
        u = sinusoidal_input([1.0], frequency=0.2)
        trace = integrate(scalar_sys, [2.0], u, horizon=6.0, n_record=4001)
        report = check_liss(scalar_sys, trace)
        assert report.passed
        # the bound really is active somewhere: tightest gap is tiny
        gap = report.bound - report.dvdt
        assert np.min(gap) < 1e-3

    def test_scalar_lqr_trace(self):
        inst = scalar_lqr(b=1.0)
        size = size_from_loss(inst.as_loss())
        sys = make_flow_system(inst.as_loss(), eta=1.0, size=size)
        u = sinusoidal_input([0.1], frequency=0.3)
        trace = integrate(sys, [2.0], u, horizon=6.0, n_record=2001)
        assert trace.termination == "completed"
        report = check_liss(sys, trace)
        assert report.passed

    def test_requires_completed_trace(self, interval_sys):
        trace = integrate(interval_sys, [0.0], constant_input([2.0]), horizon=5.0)
        with pytest.raises(ContractError):
            check_liss(interval_sys, trace)


class TestIssEnvelope:
    def test_linear_rate_closed_form(self):
        env = iss_envelope(
            alpha_hat=linear_curve(1.0),
            gamma=quadratic_gain_curve(1.0, 2.0),
            alpha1=linear_curve(1.0),
            alpha2=linear_curve(1.0),
        )
        for t in [0.0, 0.5, 1.0, 2.0, 5.0]:
            expected = 2.0 * math.exp(-t / 2.0)
            assert env.bound(2.0, t, 0.0) == pytest.approx(expected, rel=1e-6)

    def test_zero_initial_zero_input(self):
        env = iss_envelope(
            linear_curve(1.0), quadratic_gain_curve(1.0, 2.0), linear_curve(1.0), linear_curve(1.0)
        )
        for t in [0.0, 1.0, 10.0]:
            assert env.bound(0.0, t, 0.0) == 0.0

    def test_asymptotic_clause(self):
        env = iss_envelope(
            linear_curve(1.0), quadratic_gain_curve(1.0, 1.0), linear_curve(1.0), linear_curve(1.0)
        )
        val = env.bound(0.5, 100.0, 0.3)
        # 2 * gamma(0.3) with gamma the chord overestimate of s^2 on 65 knots
        assert 0.18 <= val <= 0.18 + 3e-4

    def test_monotone_in_initial_size_and_input(self):
        env = iss_envelope(
            linear_curve(0.7), quadratic_gain_curve(0.5, 2.0), linear_curve(1.0), linear_curve(1.3)
        )
        for t in [0.3, 2.0]:
            b_r = [env.bound(r, t, 0.1) for r in [0.0, 0.5, 1.0, 2.0]]
            assert all(y >= x for x, y in zip(b_r, b_r[1:]))
            b_m = [env.bound(1.0, t, mu) for mu in [0.0, 0.1, 0.5, 1.0]]
            assert all(y >= x for x, y in zip(b_m, b_m[1:]))

    def test_noninvertible_lower_curve_rejected(self):
        from issflow.comparison import MonotoneCurve

        flat = MonotoneCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 0.0)
        with pytest.raises(ContractError):
            iss_envelope(linear_curve(1.0), quadratic_gain_curve(1.0, 1.0), flat, linear_curve(1.0))


def certified_scalar_envelope(sys):
    """Sandwich + dissipation envelope for V = x^2/2 with omega = |x|."""
    omega = sys.size
    vgap = size_from_loss(sys.loss)
    rng = np.random.default_rng(5)
    sampler = box_sampler(rng, [-3.0], [3.0])
    a2 = compare_sizes(vgap, omega, sampler, levels=[0.5, 1.0, 2.0, 3.0])
    a1 = invert_curve(compare_sizes(omega, vgap, sampler, levels=[0.25, 1.0, 2.5, 4.5]))
    alpha_hat, gamma = flow_dissipation(sys, linear_curve(2.0), s_max=1.0)
    return iss_envelope(alpha_hat, gamma, a1, a2)


class TestVerifyIssTrace:
    def test_unforced_quadratic_envelope_holds(self, scalar_sys):
        env = certified_scalar_envelope(scalar_sys)
        trace = integrate(scalar_sys, [2.0], zero_input(1), horizon=8.0)
        report = verify_iss_trace(trace, env, usup=0.0)
        assert report.passed
        # true decay is e^{-t}, certified transient only e^{-t/4}: margin is real
        assert report.worst_margin < -1e-3

    def test_constant_input_asymptotic_clause(self, scalar_sys):
        env = certified_scalar_envelope(scalar_sys)
        u = constant_input([0.3])
        trace = integrate(scalar_sys, [2.0], u, horizon=12.0)
        report = verify_iss_trace(trace, env, usup=0.3)
        assert report.passed
        # the late-time state sits at 0.3 while the asymptotic bound is
        # a1^{-1}(2 gamma(0.3)) ~ sqrt(0.18) >= 0.42
        assert trace.omega[-1] == pytest.approx(0.3 + 1.7 * math.exp(-12.0), abs=1e-7)
        assert report.bound[-1] >= 0.40

    def test_equilibrium_trace_all_zero(self, scalar_sys):
        env = certified_scalar_envelope(scalar_sys)
        trace = integrate(scalar_sys, [0.0], zero_input(1), horizon=2.0)
        report = verify_iss_trace(trace, env, usup=0.0)
        assert report.passed
        assert np.all(report.bound == 0.0)
        assert np.all(trace.omega == 0.0)

    def test_violation_detected_for_uncertified_envelope(self, scalar_sys):
        # deliberately broken certificate: decrease rate far too fast
        env = iss_envelope(
            linear_curve(50.0),
            quadratic_gain_curve(1e-6, 1.0),
            linear_curve(1.0),
            scale_curve(linear_curve(1.0), 1.0),
        )
        trace = integrate(scalar_sys, [2.0], constant_input([0.5]), horizon=6.0)
        report = verify_iss_trace(trace, env, usup=0.5)
        assert not report.passed
        assert report.worst_margin > 0


class TestEstimateGain:
    def test_scalar_linear_calibration(self, scalar_sys):
        rng = np.random.default_rng(11)
        est = estimate_gain(
            scalar_sys,
            [2.0],
            magnitudes=[0.1, 0.2, 0.4],
            burn_in=10.0,
            horizon=20.0,
            n_realizations=3,
            rng=rng,
        )
        assert not est.had_exits
        assert est.curve.evaluate(0.0) == 0.0
        for mu in [0.1, 0.2, 0.4]:
            assert est.curve.evaluate(mu) == pytest.approx(mu, rel=0.02)
        assert np.all(np.diff(est.curve.values) >= 0)

    def test_domain_exit_recorded_and_excluded(self, interval_sys):
        rng = np.random.default_rng(11)
        est = estimate_gain(
            interval_sys,
            [0.0],
            magnitudes=[0.5, 3.0],
            burn_in=5.0,
            horizon=10.0,
            n_realizations=1,
            rng=rng,
        )
        assert est.had_exits
        assert any(mu == 3.0 for mu, _, _ in est.exits)
        assert 3.0 in est.excluded
        assert np.array_equal(est.magnitudes, [0.5])
        assert est.curve.evaluate(0.5) == pytest.approx(0.5, rel=0.02)

    def test_bad_magnitudes_rejected(self, scalar_sys):
        with pytest.raises(ContractError):
            estimate_gain(scalar_sys, [1.0], [0.2, 0.1], burn_in=1.0, horizon=2.0)
        with pytest.raises(ContractError):
            estimate_gain(scalar_sys, [1.0], [0.1], burn_in=3.0, horizon=2.0)
