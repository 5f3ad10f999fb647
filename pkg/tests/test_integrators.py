import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from microdrift import catalog
from microdrift.hamiltonian import FourierPerturbation, NearIntegrableSystem, Polynomial
from microdrift.integrators import (ConvergenceError, PhaseState, default_step, integrate, midpoint_step,
                                    reference_integrate)

FREE = NearIntegrableSystem(Polynomial.half_square_norm(2), FourierPerturbation.zero(2))


def wrapped(a):
    return (np.asarray(a) + 0.5) % 1.0 - 0.5


def test_free_step_is_exact():
    s = PhaseState(np.array([0.3, 0.9]), np.array([0.4, -1.3]))
    out = midpoint_step(FREE, s, 0.01)
    assert_array_equal(out.I, s.I)
    assert_allclose(wrapped(out.theta - (s.theta + 0.01 * s.I)), 0.0, atol=1e-15)
    assert out.t == 0.01


def test_free_flow_matches_linear_flow():
    theta0, I0 = np.array([0.1, 0.2]), np.array([0.7, -1.9])
    tr = integrate(FREE, theta0, I0, 37.0, h_step=0.01, reduce=False)
    assert np.all(tr.I == I0)
    assert_allclose(tr.theta[-1], theta0 + 37.0 * I0, rtol=0, atol=1e-10)


def test_reversibility():
    system = catalog.two_mode(1e-2)
    s = PhaseState(np.array([0.31, 0.77]), np.array([0.02, 0.9]))
    fwd = midpoint_step(system, s, 0.05)
    back = midpoint_step(system, fwd, -0.05)
    assert_allclose(wrapped(back.theta - s.theta), 0.0, atol=1e-11)
    assert_allclose(back.I, s.I, atol=1e-11)


def small_oscillation_period(eps):
    # linearisation of eps (2 pi)^-3 cos(2 pi theta_1) about theta_1 = 1/2
    return 2 * np.pi / np.sqrt(eps * (2 * np.pi) ** -1)


def test_pendulum_period_against_analytic_formula():
    eps = 1e-2
    P = small_oscillation_period(eps)
    ref = reference_integrate(catalog.pendulum(eps), [0.501, 0.0], [0.0, 1.0], 2.5 * P)
    t = np.linspace(0, 2.5 * P, 200001)
    x = wrapped(ref.dense(t)[0] - 0.5)
    up = t[1:][(x[:-1] < 0) & (x[1:] >= 0)]
    assert len(up) >= 2
    assert np.diff(up).mean() == pytest.approx(P, rel=0.01)


def test_pendulum_one_period_energy():
    eps = 1e-2
    P = small_oscillation_period(eps)
    tr = integrate(catalog.pendulum(eps), [0.3, 0.0], [0.0, 1.0], P, h_step=0.01)
    assert tr.relative_energy_drift < 1e-10


def test_energy_over_tau():
    eps = 1e-4
    tau = np.sqrt(1 / (12 * np.pi)) / np.sqrt(eps)
    tr = integrate(catalog.pendulum(eps), [0.25, 0.0], [0.0, 1.0], tau)
    assert tr.relative_energy_drift < 1e-8


def test_agreement_with_reference():
    eps = 1e-2
    T = 10 / np.sqrt(eps)
    system = catalog.two_mode(eps)
    tr = integrate(system, [0.25, 0.0], [0.0, 1.0], T, h_step=1e-2, dt_out=T)
    ref = reference_integrate(system, [0.25, 0.0], [0.0, 1.0], T)
    assert np.abs(tr.I[-1] - ref.I[-1]).max() < 1e-6


def convergence_errors(steps, eps=0.1, T=20.0):
    system = catalog.pendulum(eps)
    z0 = ([0.1, 0.0], [0.05, 1.0])
    ref = reference_integrate(system, *z0, T, tol=1e-13)
    errs = []
    for h in steps:
        tr = integrate(system, *z0, T, h_step=h, dt_out=T)
        errs.append(max(np.abs(tr.I[-1] - ref.I[-1]).max(), np.abs(wrapped(tr.theta[-1] - ref.theta[-1])).max()))
    return np.array(errs)


def test_second_order_convergence():
    errs = convergence_errors([0.2, 0.1, 0.05, 0.025])
    ratios = errs[:-1] / errs[1:]
    assert np.all(np.abs(ratios - 4.0) <= 0.8), ratios


def test_default_step_resolves_slow_period():
    lam = (2 * np.pi) ** -2
    for eps in (1e-2, 1e-4, 1e-6):
        h = default_step(eps, lam)
        assert h <= 1e-2 / (2 * np.pi)
        assert h <= 1 / np.sqrt(eps * lam) / 1000


def test_step_lands_on_final_time():
    tr = integrate(catalog.pendulum(1e-3), [0.2, 0.0], [0.0, 1.0], 1.0, h_step=0.3)
    assert tr.t[-1] == pytest.approx(1.0, abs=1e-15)
    assert tr.steps == 4
    assert np.all(np.diff(tr.t) > 0)


def test_backward_integration_round_trip():
    system = catalog.two_mode(1e-2)
    fwd = integrate(system, [0.2, 0.4], [0.01, 1.0], 5.0, h_step=0.01, reduce=False)
    back = integrate(system, fwd.theta[-1], fwd.I[-1], -5.0, h_step=0.01, reduce=False)
    assert_allclose(back.theta[-1], [0.2, 0.4], atol=1e-10)
    assert_allclose(back.I[-1], [0.01, 1.0], atol=1e-10)


def test_batched_matches_single():
    system = catalog.two_mode(1e-2)
    th = np.array([[0.1, 0.2], [0.6, 0.3]])
    I = np.array([[0.0, 1.0], [0.05, 0.9]])
    batch = integrate(system, th, I, 2.0, h_step=0.01)
    for j in range(2):
        single = integrate(system, th[j], I[j], 2.0, h_step=0.01)
        assert_allclose(batch.I[-1, j], single.I[-1], atol=1e-12)


def test_step_halving_and_failure():
    system = catalog.pendulum(1.0)
    tr = integrate(system, [0.3, 0.0], [0.0, 1.0], 1.0, h_step=0.5, max_iter=6)
    assert tr.halvings > 0
    with pytest.raises(ConvergenceError):
        integrate(system, [0.3, 0.0], [0.0, 1.0], 1.0, h_step=0.5, max_iter=2, max_halvings=0)


def test_reference_free_flow_exact():
    ref = reference_integrate(FREE, [0.1, 0.2], [0.3, -0.4], 10.0)
    assert_allclose(wrapped(ref.theta[-1] - np.array([0.1 + 3.0, 0.2 - 4.0])), 0.0, atol=1e-11)
    assert_array_equal(ref.I[-1], [0.3, -0.4])


def test_reference_backward_forward():
    tol = 1e-12
    system = catalog.two_mode(1e-2)
    fwd = reference_integrate(system, [0.2, 0.4], [0.01, 1.0], 3.0, tol=tol)
    back = reference_integrate(system, fwd.theta[-1], fwd.I[-1], -3.0, tol=tol)
    # the angle travels about 3 turns, so its tolerance scales accordingly
    assert_allclose(wrapped(back.theta[-1] - [0.2, 0.4]), 0.0, atol=10 * tol * 4)
    assert_allclose(back.I[-1], [0.01, 1.0], atol=10 * tol)
