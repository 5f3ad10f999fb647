import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_perturbation, random_polynomial
from microdrift import catalog
from microdrift.hamiltonian import (DimensionError, FourierPerturbation, NearIntegrableSystem, Polynomial,
                                    RealityError, eval_f, eval_h, grad_h, grad_I_f, grad_theta_f, hess_h,
                                    reduce_angles, sup_norm_estimates)

HALF_SQ = Polynomial.half_square_norm(2)
COS1 = FourierPerturbation.cosine((1, 0))
COS11 = FourierPerturbation.cosine((1, 1))


# -- polynomial part ----------------------------------------------------------

@pytest.mark.parametrize("I, expected", [((0, 1), 0.5), ((0, 0), 0.0)])
def test_eval_half_square_norm(I, expected):
    assert eval_h(HALF_SQ, np.array(I, float)) == expected


def test_eval_mixed_polynomial():
    h = Polynomial({(2, 0): 0.5, (1, 1): 1.0}, 2)
    assert eval_h(h, np.array([1.0, 2.0])) == 2.5


def test_gradient_of_quadratic():
    assert_array_equal(grad_h(HALF_SQ, np.array([0.0, 1.0])), [0.0, 1.0])
    assert_array_equal(grad_h(HALF_SQ, np.zeros(2)), [0.0, 0.0])


def test_hessian_examples():
    assert_array_equal(hess_h(HALF_SQ, np.array([0.3, -0.7])), np.eye(2))
    cubic = Polynomial({(3, 0, 0): 1.0}, 3)
    H = hess_h(cubic, np.array([1.0, 0.4, -0.2]))
    expected = np.zeros((3, 3))
    expected[0, 0] = 6.0
    assert_array_equal(H, expected)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_h(HALF_SQ, np.zeros(3))
    with pytest.raises(DimensionError):
        eval_f(COS1, np.zeros(3), np.zeros(2))


def test_polynomial_finite_differences(rng):
    step = 1e-5
    for n in (2, 3):
        for _ in range(10):
            h = random_polynomial(rng, n, degree=4, terms=6)
            x = rng.uniform(-1, 1, n)
            E = np.eye(n) * step
            fd = np.array([(h(x + e) - h(x - e)) / (2 * step) for e in E])
            assert_allclose(h.gradient(x), fd, rtol=1e-6, atol=1e-8)
            fd2 = np.array([(h.gradient(x + e) - h.gradient(x - e)) / (2 * step) for e in E])
            H = h.hessian(x)
            assert_allclose(H, fd2, rtol=1e-6, atol=1e-8)
            assert_array_equal(H, H.T)


def test_difference_matches_direct_evaluation(rng):
    h = random_polynomial(rng, 3, degree=4, terms=8)
    x = rng.uniform(-1, 1, 3)
    dx = rng.uniform(-1, 1, 3)
    assert_allclose(h.difference(x, dx), h(x + dx) - h(x), rtol=1e-12, atol=1e-12)


def test_shift_and_substitute(rng):
    h = random_polynomial(rng, 2, degree=3, terms=6)
    x = rng.uniform(-1, 1, 2)
    off = rng.uniform(-1, 1, 2)
    M = np.array([[1, -1], [0, 1]])
    assert_allclose(h.shift(off)(x), h(x + off), rtol=1e-12)
    assert_allclose(h.linear_substitute(M)(x), h(M @ x), rtol=1e-12)


# -- Fourier part -------------------------------------------------------------

@pytest.mark.parametrize("f, theta, expected", [
    (COS1, (0.0, 0.0), 1.0),
    (COS1, (0.25, 0.0), 0.0),
    (COS11, (0.25, 0.25), -1.0),
])
def test_cosine_values(f, theta, expected):
    assert eval_f(f, np.array(theta), np.array([0.3, 0.1])) == pytest.approx(expected, abs=1e-15)


def test_cosine_theta_derivative():
    g = grad_theta_f(COS1, np.array([0.25, 0.0]), np.zeros(2))
    assert_allclose(g, [-2 * np.pi, 0.0], atol=1e-14)


def test_action_independent_gradient_is_zero():
    assert_array_equal(grad_I_f(COS11, np.array([0.1, 0.7]), np.array([0.2, 0.5])), [0.0, 0.0])


def test_reality_violation_rejected():
    with pytest.raises(RealityError):
        FourierPerturbation({(1, 0): Polynomial.constant(1.0, 2)}, 2)


def test_reality_on_random_points(rng):
    f = random_perturbation(rng, 3)
    theta = rng.uniform(0, 1, (1000, 3))
    I = rng.uniform(-1, 1, (1000, 3))
    assert np.abs(f.complex_value(theta, I).imag).max() < 1e-12


def test_perturbation_finite_differences(rng):
    step = 1e-5
    for n in (2, 3):
        f = random_perturbation(rng, n)
        for _ in range(10):
            theta = rng.uniform(0, 1, n)
            I = rng.uniform(-1, 1, n)
            E = np.eye(n) * step
            fd_t = np.array([(f(theta + e, I) - f(theta - e, I)) / (2 * step) for e in E])
            fd_I = np.array([(f(theta, I + e) - f(theta, I - e)) / (2 * step) for e in E])
            scale = max(1.0, np.abs(fd_t).max())
            assert_allclose(f.grad_theta(theta, I), fd_t, rtol=1e-6, atol=1e-6 * scale)
            assert_allclose(f.grad_I(theta, I), fd_I, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(fd_I).max()))
            g_t, g_I = f.gradients(theta, I)
            assert_allclose(g_t, f.grad_theta(theta, I), rtol=1e-13, atol=1e-13)
            assert_allclose(g_I, f.grad_I(theta, I), rtol=1e-13, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), j=st.integers(0, 2),
       theta=st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_torus_periodicity(seed, j, theta):
    f = random_perturbation(np.random.default_rng(seed), 3)
    theta = np.array(theta)
    I = np.array([0.1, -0.2, 0.3])
    shifted = theta.copy()
    shifted[j] += 1.0
    assert_allclose(f(shifted, I), f(theta, I), rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=4),
       st.lists(st.integers(-5, 5), min_size=4, max_size=4))
def test_reduce_angles_is_canonical(theta, shift):
    theta = np.array(theta)
    a = reduce_angles(theta)
    b = reduce_angles(theta + np.array(shift[: len(theta)]))
    assert np.all((a >= 0) & (a < 1))
    # same torus point: equal up to rounding of the integer shift
    assert np.all(np.minimum(np.abs(a - b), 1 - np.abs(a - b)) < 1e-12)


def test_system_validation():
    with pytest.raises(DimensionError):
        NearIntegrableSystem(Polynomial.half_square_norm(1), FourierPerturbation.zero(1))
    with pytest.raises(ValueError):
        NearIntegrableSystem(HALF_SQ, COS1, -1.0)


def test_vector_field_matches_hamilton_equations(rng):
    system = NearIntegrableSystem(random_polynomial(rng, 2, 3, 5), random_perturbation(rng, 2), 0.01)
    theta, I = rng.uniform(0, 1, 2), rng.uniform(-1, 1, 2)
    vt, vI = system.vector_field(theta, I)
    assert_allclose(vt, system.h.gradient(I) + 0.01 * system.f.grad_I(theta, I), rtol=1e-13)
    assert_allclose(vI, -0.01 * system.f.grad_theta(theta, I), rtol=1e-13)


# -- normalisation report -----------------------------------------------------

def test_sup_norm_examples():
    assert sup_norm_estimates(catalog.pendulum())["h_C2"] == pytest.approx(1.0)
    assert sup_norm_estimates(catalog.pendulum())["f_C3"] == pytest.approx(1.0, rel=1e-12)
    raw = NearIntegrableSystem(HALF_SQ, COS1, 1e-3)
    assert sup_norm_estimates(raw)["f_C3"] == pytest.approx((2 * np.pi) ** 3, rel=1e-12)
    assert (2 * np.pi) ** 3 == pytest.approx(248.05, abs=0.01)


def test_sup_norm_grid_resolution():
    with pytest.raises(ValueError):
        sup_norm_estimates(catalog.pendulum(), m=4)
