"""Shipped example systems.

All use ``h = |I|^2 / 2`` so that ``grad h(I*) = I*``.  The perturbation
amplitude ``(2 pi)^-3`` makes the C^3 norm of each cosine mode exactly one.
"""

import numpy as np

from .hamiltonian import FourierPerturbation, NearIntegrableSystem, Polynomial

UNIT_C3 = (2 * np.pi) ** -3
GOLDEN = (1 + np.sqrt(5)) / 2


def _quadratic(n):
    return Polynomial.half_square_norm(n)


def pendulum(eps=1e-4):
    """Resonance ``omega = (0, 1)`` with the single resonant mode ``cos(2 pi theta_1)``."""
    f = FourierPerturbation.cosine((1, 0), UNIT_C3)
    return NearIntegrableSystem(_quadratic(2), f, eps, domain_radius=1.0)


def two_mode(eps=1e-4):
    """Pendulum plus the non-resonant mode ``cos(2 pi (theta_1 + theta_2))``."""
    f = FourierPerturbation.cosine((1, 0), UNIT_C3) + FourierPerturbation.cosine((1, 1), UNIT_C3)
    return NearIntegrableSystem(_quadratic(2), f, eps, domain_radius=1.0)


def nonresonant_mode(eps=1e-4):
    """Only ``cos(2 pi (theta_1 + theta_2))``: non-resonant at ``omega = (0, 1)``, so f_omega* = 0."""
    f = FourierPerturbation.cosine((1, 1), UNIT_C3)
    return NearIntegrableSystem(_quadratic(2), f, eps, domain_radius=2.0)


def single_mode(eps=1e-4):
    """Unit-amplitude ``cos(2 pi (theta_1 + theta_2))`` used for the normal-form checks."""
    return NearIntegrableSystem(_quadratic(2), FourierPerturbation.cosine((1, 1)), eps, domain_radius=1.0)


def golden_single_mode(eps=1e-4):
    """Three degrees of freedom, ``omega = (0, 1, phi)``: d = 1 with a golden-ratio transverse block."""
    f = FourierPerturbation.cosine((1, 1, -1)) + FourierPerturbation.cosine((1, 0, 0))
    return NearIntegrableSystem(_quadratic(3), f, eps, domain_radius=2.0)


PENDULUM_RESONANCE = {"i_star": [0.0, 1.0], "omega": ["0", "1"]}
GOLDEN_I_STAR = [1.0, GOLDEN]
GOLDEN_3DOF_RESONANCE = {"i_star": [0.0, 1.0, GOLDEN], "d": 1, "omega_tilde": [1.0, GOLDEN]}


def system_file(name: str):
    """Path of a shipped system JSON file (``pendulum``, ``two_mode``, ...)."""
    from importlib.resources import files

    path = files("microdrift") / "systems" / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no shipped system named {name!r}")
    return path
