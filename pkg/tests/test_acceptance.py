"""Acceptance suite: one test and one printed verdict line per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines;
each test also asserts, so plain pytest reports the same outcomes.
"""

import json
import math
import os

import numpy as np
import pytest

from issflow.comparison import linear_curve
from issflow.descent import (
    absolute_noise,
    check_pmu_invariance,
    decaying_noise,
    descent_step_detail,
    dt_gamma_construction,
    lipschitz_profile,
    make_descent_system,
    run_descent,
    verify_decrease,
)
from issflow.domains import size_from_loss, sublevel_sampler
from issflow.flow import estimate_gain, integrate, make_flow_system, zero_input
from issflow.harness.config import parse_config
from issflow.harness.runs import run_flow_sweep
from issflow.linctrl import CostWeights, LinearSystem, solve_lyapunov
from issflow.lqr import make_lqr, sample_stabilizing_gains, scalar_lqr
from issflow.problems import quadratic_loss, stuck_example_loss


def record(number: int, label: str, passed: bool, detail: str = "") -> None:
    tail = f" ({detail})" if detail else ""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:02d}: {label}{tail}"
    print(line)
    assert passed, line


def planar_instance():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0], [1.0]])
    return make_lqr(LinearSystem(a, b), CostWeights(np.eye(2), np.eye(1), np.eye(2)))


QUAD_SWEEP = {
    "name": "accept-quad",
    "problem": "quadratic",
    "system": {"hessian": [[1.0, 0.0], [0.0, 3.0]], "eta": 1.0},
    "sweep": {
        "seeds": [0],
        "noise_magnitudes": [0.0, 0.05, 0.1, 0.2],
        "initial_points": [[2.0, -1.0], [-1.5, 0.5], [0.3, 1.1], [1.0, 1.0], [-0.4, -0.9]],
        "signals": ["constant", "sinusoidal", "decaying"],
    },
    "flow": {"horizon": 12.0, "burn_in": 6.0, "n_record": 801},
}

SLQR_SWEEP = {
    "name": "accept-slqr",
    "problem": "scalar-lqr",
    "system": {"b": 1.0, "eta": 0.25},
    "sweep": {
        "seeds": [0],
        "noise_magnitudes": [0.0, 0.05, 0.1, 0.2],
        "initial_points": [[1.15], [1.5], [2.0], [3.0], [4.5]],
        "signals": ["constant", "sinusoidal", "decaying"],
    },
    "flow": {"horizon": 30.0, "burn_in": 15.0, "n_record": 1201},
}


@pytest.fixture(scope="module")
def quad_sweep(tmp_path_factory):
    cfg = parse_config(QUAD_SWEEP)
    out = str(tmp_path_factory.mktemp("accept_quad"))
    manifest = run_flow_sweep(cfg, out, base_seed=0)
    return cfg, out, manifest


@pytest.fixture(scope="module")
def slqr_sweep(tmp_path_factory):
    cfg = parse_config(SLQR_SWEEP)
    out = str(tmp_path_factory.mktemp("accept_slqr"))
    manifest = run_flow_sweep(cfg, out, base_seed=0)
    return cfg, out, manifest


def test_01_scalar_lqr_closed_form_equivalence():
    inst = scalar_lqr(b=1.0)
    loss = inst.as_loss()
    worst = 0.0
    for k in np.round(np.arange(11, 51) * 0.1, 1):
        v_cf = (k * k + 1.0) / (2.0 * (k - 1.0))
        dv_cf = (k * k - 2.0 * k - 1.0) / (2.0 * (k - 1.0) ** 2)
        worst = max(
            worst,
            abs(loss.value_at(np.array([k])) - v_cf),
            abs(loss.grad_at(np.array([k]))[0] - dv_cf),
        )
    record(1, "scalar LQR matrix path matches the closed form", worst <= 1e-12,
           f"worst abs err {worst:.2e} over k in 1.1..5.0")


def test_02_riccati_gradient_consistency():
    inst = scalar_lqr(b=1.0)
    kstar_err = abs(float(inst.kstar[0, 0]) - (1.0 + math.sqrt(2.0)))
    worst = float(np.linalg.norm(inst.grad(inst.kstar)))
    rng = np.random.default_rng(42)
    for _ in range(10):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        a = rng.normal(size=(n, n))
        b = rng.normal(size=(n, m))
        rand_inst = make_lqr(LinearSystem(a, b), CostWeights(np.eye(n), np.eye(m), np.eye(n)))
        worst = max(worst, float(np.linalg.norm(rand_inst.grad(rand_inst.kstar))))
    record(2, "gradient vanishes at the Riccati gain", worst <= 1e-8 and kstar_err <= 1e-9,
           f"worst |grad| {worst:.2e} over scalar + 10 random instances")


def test_03_gradient_matches_central_differences():
    inst = planar_instance()
    rng = np.random.default_rng(21)
    gains = sample_stabilizing_gains(inst, 50, rng)
    worst = 0.0
    for k in gains:
        g = inst.grad(k)
        fd = np.zeros_like(g)
        for idx in np.ndindex(*k.shape):
            h = 1e-5 * (1.0 + abs(k[idx]))
            kp, km = k.copy(), k.copy()
            kp[idx] += h
            km[idx] -= h
            fd[idx] = (inst.loss(kp) - inst.loss(km)) / (2.0 * h)
        worst = max(worst, float(np.linalg.norm(fd - g)) / max(float(np.linalg.norm(g)), 1e-9))
    record(3, "LQR gradient matches central differences", worst <= 1e-5,
           f"worst rel err {worst:.2e} over 50 stabilizing gains")


def test_04_lyapunov_worked_example():
    p = solve_lyapunov(np.array([[0.0, 1.0], [-2.0, -3.0]]), np.eye(2))
    expected = np.array([[1.0, -0.5], [-0.5, 0.5]])
    worst = float(np.max(np.abs(p - expected)))
    record(4, "Lyapunov worked example", worst <= 1e-10, f"max abs err {worst:.2e}")


def test_05_unforced_decrease_and_convergence():
    cases = []

    qloss = quadratic_loss(np.diag([1.0, 3.0]))
    cases.append(("quadratic", make_flow_system(qloss, eta=1.0), np.array([2.0, -1.0]), 50.0))

    sl = scalar_lqr(b=1.0)
    sloss = sl.as_loss()
    cases.append(
        ("scalar-lqr", make_flow_system(sloss, eta=0.25, size=size_from_loss(sloss)), np.array([4.5]), 200.0)
    )

    pl = planar_instance()
    ploss = pl.as_loss()
    k0 = sample_stabilizing_gains(pl, 1, np.random.default_rng(3))[0].reshape(-1)
    cases.append(("planar-lqr", make_flow_system(ploss, eta=1.0, size=size_from_loss(ploss)), k0, 50.0))

    worst_grad, monotone = 0.0, True
    for _, sys, x0, horizon in cases:
        trace = integrate(sys, x0, zero_input(sys.input_dim), horizon, n_record=401)
        monotone = monotone and bool(np.all(np.diff(trace.v) <= 1e-9))
        worst_grad = max(worst_grad, float(trace.gradnorm[-1]))
    record(5, "unforced flow decreases and converges", monotone and worst_grad <= 1e-6,
           f"V nonincreasing on 3 problems, worst terminal |grad| {worst_grad:.2e}")


def test_06_dissipation_inequality_along_traces(quad_sweep, slqr_sweep):
    total = 0
    jobs = 0
    for _, out, _ in (quad_sweep, slqr_sweep):
        with open(os.path.join(out, "summary.json")) as fh:
            summary = json.load(fh)
        for job in summary["jobs"]:
            total += job["liss_violations"]
            jobs += 1
    record(6, "Lyapunov dissipation inequality along traces", total == 0,
           f"0 violations across {jobs} traces" if total == 0 else f"{total} violations")


def decrease_case(dsys, gap_levels, n_samples, seed):
    rng = np.random.default_rng(seed)
    vbar = dsys.loss.vbar
    sampler = sublevel_sampler(rng, dsys.domain, dsys.gap, gap_levels[-1], halfwidth=1.0)
    profile = lipschitz_profile(dsys, [vbar + g for g in gap_levels], sampler, rng=rng)
    checked, failures = 0, 0
    while checked < n_samples:
        for x in np.atleast_2d(np.asarray(sampler(min(256, n_samples - checked)), dtype=float)):
            p = dsys.loss.grad_at(x)
            pn = float(np.linalg.norm(p))
            if pn <= 1e-12:
                continue
            direction = rng.standard_normal(x.size)
            direction /= np.linalg.norm(direction)
            q = 0.5 * rng.uniform(0.0, 1.0) * pn * direction
            level = min(dsys.loss.value_at(x), float(profile.levels[-1]))
            rep = verify_decrease(dsys, x, q, profile.at(level))
            checked += 1
            if not rep.linesearch_ok:
                failures += 1
    return checked, failures


def test_07_decrease_lemma_sampled():
    qloss = quadratic_loss(np.diag([1.0, 3.0]))
    qsys = make_descent_system(qloss, size=size_from_loss(qloss))
    sloss = scalar_lqr(b=1.0).as_loss()
    ssys = make_descent_system(sloss, size=size_from_loss(sloss))
    checked_q, fail_q = decrease_case(qsys, [0.5, 2.0, 8.0], 1000, seed=14)
    checked_s, fail_s = decrease_case(ssys, [0.5, 2.0, 6.0], 1000, seed=15)
    passed = fail_q == 0 and fail_s == 0 and checked_q >= 1000 and checked_s >= 1000
    record(7, "perturbed-step decrease lemma on samples", passed,
           f"{checked_q}+{checked_s} sampled (x, q) pairs, {fail_q + fail_s} failures")


def test_08_stuck_reproduction():
    sys = make_descent_system(stuck_example_loss())
    out = descent_step_detail(sys, np.array([0.5]), np.array([-1.0]))
    passed = out.lambda_bar == 0.0 and float(out.x_plus[0]) == 0.5 and out.stuck
    record(8, "adversarial disturbance leaves the iterate stuck", passed,
           f"lambda_bar={out.lambda_bar}, x1={float(out.x_plus[0])}")


def test_09_iss_envelope_soundness(quad_sweep, slqr_sweep):
    total = 0
    jobs = 0
    for _, out, _ in (quad_sweep, slqr_sweep):
        with open(os.path.join(out, "summary.json")) as fh:
            summary = json.load(fh)
        for job in summary["jobs"]:
            total += job["envelope_violations"]
            jobs += 1
    record(9, "ISS envelope dominates every trace", total == 0,
           f"0 violations across {jobs} traces (5 ICs x 4 magnitudes x 3 shapes, 2 problems)")


def test_10_empirical_gain_calibration():
    sys = make_flow_system(quadratic_loss(np.eye(1)), eta=1.0)
    est = estimate_gain(
        sys, np.zeros(1), [0.05, 0.1, 0.2, 0.4],
        burn_in=10.0, horizon=20.0, n_realizations=2, rng=np.random.default_rng(7),
    )
    zero_ok = est.curve.evaluate(0.0) == 0.0
    monotone = bool(np.all(np.diff(est.sups) >= 0.0))
    worst_rel = max(abs(s - m) / m for m, s in zip(est.magnitudes, est.sups))
    record(10, "empirical gain is monotone and calibrated", zero_ok and monotone and worst_rel <= 0.02,
           f"gamma(0)=0, worst |gamma(mu)-mu|/mu = {worst_rel:.2e}")


def test_11_discrete_time_iss_behavior():
    loss = quadratic_loss(np.diag([1.0, 3.0]))
    dsys = make_descent_system(loss, size=size_from_loss(loss))

    decaying = run_descent(dsys, [2.0, -1.0], decaying_noise(0.9, 0.5), 80, rng=np.random.default_rng(2))
    final_dist = float(np.linalg.norm(decaying.final_state - loss.xbar))

    mu = 0.3
    rng = np.random.default_rng(5)
    chi = linear_curve(1.0)
    cap_sampler = sublevel_sampler(rng, dsys.domain, dsys.gap, chi.evaluate(mu), halfwidth=1.0)
    gamma_mu = dt_gamma_construction(dsys, chi, mu, cap_sampler, n_samples=1024, rng=rng)
    bounded = run_descent(dsys, [2.0, -1.0], absolute_noise(mu), 80, rng=np.random.default_rng(11))
    tail = float(np.max(bounded.omega[40:]))

    inv_sampler = sublevel_sampler(rng, dsys.domain, dsys.gap, gamma_mu, halfwidth=1.0)
    inv = check_pmu_invariance(dsys, mu, gamma_mu, inv_sampler, n_samples=256, rng=rng)

    passed = (
        final_dist <= 1e-6
        and tail <= gamma_mu + 1e-9
        and inv.n_checked >= 1000
        and inv.violation_count == 0
    )
    record(11, "discrete-time ISS: convergence, gain bound, invariance", passed,
           f"|x_N - xbar| {final_dist:.2e}; tail {tail:.3f} <= gamma {gamma_mu:.3f}; "
           f"{inv.n_checked} invariance checks, {inv.violation_count} violations")


def test_12_determinism_byte_identical(quad_sweep, tmp_path):
    cfg, first_out, _ = quad_sweep
    second_out = str(tmp_path / "rerun")
    os.makedirs(second_out)
    run_flow_sweep(cfg, second_out, base_seed=0)
    names = sorted(n for n in os.listdir(first_out) if n.endswith(".csv"))
    identical = bool(names)
    for name in names:
        with open(os.path.join(first_out, name), "rb") as fa, open(os.path.join(second_out, name), "rb") as fb:
            if fa.read() != fb.read():
                identical = False
                break
    record(12, "rerun with the same config and seed is byte-identical", identical,
           f"{len(names)} CSV files compared")
