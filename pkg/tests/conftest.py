import numpy as np
import pytest

from microdrift import catalog
from microdrift.config import resonance_from_dict
from microdrift.hamiltonian import FourierPerturbation, Polynomial

EPS_SWEEP = list(np.geomspace(1e-2, 1e-6, 9))


def random_polynomial(rng, n, degree=3, terms=5, complex_coeffs=False):
    out = {}
    for _ in range(terms):
        alpha = tuple(int(v) for v in rng.multinomial(rng.integers(0, degree + 1), np.ones(n) / n))
        c = rng.normal()
        if complex_coeffs:
            c = c + 1j * rng.normal()
        out[alpha] = out.get(alpha, 0) + c
    return Polynomial(out, n)


def random_perturbation(rng, n, kmax=2, modes=4, degree=2):
    """Real trigonometric polynomial with random complex polynomial coefficients."""
    table = {}
    for _ in range(modes):
        k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=n))
        if not any(k):
            continue
        p = random_polynomial(rng, n, degree, 3, complex_coeffs=True)
        minus = tuple(-v for v in k)
        table[k] = table[k] + p if k in table else p
        table[minus] = table[minus] + p.conj() if minus in table else p.conj()
    table[(0,) * n] = random_polynomial(rng, n, degree, 2)
    return FourierPerturbation(table, n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pendulum_problem():
    from microdrift.drift import ResonantProblem

    system = catalog.pendulum()
    return ResonantProblem.build(system, resonance_from_dict(catalog.PENDULUM_RESONANCE, system))


@pytest.fixture(scope="session")
def two_mode_problem():
    from microdrift.drift import ResonantProblem

    system = catalog.two_mode()
    return ResonantProblem.build(system, resonance_from_dict(catalog.PENDULUM_RESONANCE, system))
