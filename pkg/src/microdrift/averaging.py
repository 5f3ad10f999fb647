"""Resonant average of the perturbation and the constants of the drift argument.

All functions here expect the system in adapted coordinates (the first ``d``
basis vectors span the resonant module) with the resonant point at ``I = 0``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .hamiltonian import TWO_PI, FourierPerturbation


class AssumptionA2Error(ValueError):
    """The averaged perturbation restricted to the resonant point is constant."""


class TrigPolynomial:
    """Real trigonometric polynomial ``sum_k c_k exp(2j*pi*k.phi)`` on ``T^d``."""

    def __init__(self, modes, coeffs):
        self.modes = np.asarray(modes, dtype=int).reshape(len(coeffs), -1)
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self._wave = TWO_PI * self.modes.astype(float)

    @property
    def d(self):
        return self.modes.shape[1]

    @property
    def is_constant(self):
        nonconst = np.any(self.modes != 0, axis=1)
        return not np.any(np.abs(self.coeffs[nonconst]) > 0)

    def _z(self, phi):
        phi = np.asarray(phi, dtype=float)
        return self.coeffs * np.exp(1j * (phi @ self._wave.T))

    def __call__(self, phi):
        return self._z(phi).sum(axis=-1).real

    def gradient(self, phi):
        return (1j * self._z(phi) @ self._wave).real

    def hessian(self, phi):
        z = -self._z(phi)
        return np.einsum("...m,mi,mj->...ij", z, self._wave, self._wave).real


@dataclass(frozen=True)
class AveragedPerturbation:
    f_omega: FourierPerturbation
    f_star: TrigPolynomial
    theta_star: np.ndarray
    lam: float
    L: float
    delta: float
    c: float

    @property
    def d(self):
        return self.f_star.d

    def tau(self, eps):
        return self.delta / np.sqrt(eps)


def resonant_average(f: FourierPerturbation, d: int) -> FourierPerturbation:
    """Keep the modes lying in the resonant module (``k[d:] == 0``)."""
    return f.filter_modes(lambda k: not any(k[d:]))


def restrict_to_resonance(f_omega: FourierPerturbation, d: int) -> TrigPolynomial:
    """``f_omega*``: the averaged perturbation at ``I = 0`` as a function of ``d`` angles."""
    coef = f_omega.at_actions(np.zeros(f_omega.n))
    acc = {}
    for k, c in coef.items():
        acc[k[:d]] = acc.get(k[:d], 0) + c
    if not acc:
        return TrigPolynomial(np.zeros((1, d), dtype=int), [0.0])
    keys = sorted(acc)
    return TrigPolynomial(keys, [acc[k] for k in keys])


def time_average_oracle(f: FourierPerturbation, omega, theta, I, T: float, nodes_per_unit: int = 64) -> float:
    """``(1/T) int_0^T f(theta + s*omega, I) ds`` by the trapezoid rule.

    Only meant as a test oracle for :func:`resonant_average`.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    omega = np.asarray(omega, dtype=float)
    speed = 1.0 + f.max_order * np.abs(omega).sum()
    m = int(np.ceil(nodes_per_unit * T * speed)) + 1
    s = np.linspace(0.0, T, m)
    vals = f(np.asarray(theta, dtype=float) + s[:, None] * omega, np.asarray(I, dtype=float))
    return float(np.trapezoid(vals, s) / T)


def _grid(m, d):
    axis = np.arange(m) / m
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


def _score(f_star, phi):
    return np.abs(f_star.gradient(phi)).max(axis=-1)


def locate_theta_star(f_star: TrigPolynomial, grid: int = 64, iterations: int = 50):
    """Angle maximising the sup norm of the gradient of ``f_star``.

    A ``grid**d`` scan is refined by damped ascent on the squared dominant
    gradient component; steps are only accepted when they increase the
    score, so the result is never below the grid maximum.  Near-ties on the
    grid go to the lexicographically smallest point.

    Returns
    -------
    theta_star : ndarray of shape (d,)
    lam : float
    """
    if f_star.is_constant:
        raise AssumptionA2Error("f_omega* is constant: lambda = 0")
    pts = _grid(grid, f_star.d)
    score = _score(f_star, pts)
    best = int(np.flatnonzero(score >= score.max() * (1 - 1e-12))[0])
    phi, val = pts[best].copy(), float(score[best])
    j = int(np.argmax(np.abs(f_star.gradient(phi))))
    step = 1.0 / grid
    for _ in range(iterations):
        g = f_star.gradient(phi)
        direction = 2.0 * g[j] * f_star.hessian(phi)[j]
        norm = np.abs(direction).max()
        if norm == 0.0:
            break
        trial = phi + step * direction / norm
        trial_val = float(_score(f_star, trial))
        if trial_val > val:
            phi, val = trial, trial_val
            step *= 1.5
        else:
            step *= 0.5
    return np.mod(phi, 1.0), val


def hessian_bound(f_star: TrigPolynomial, grid: int = 128) -> float:
    """Sampled sup over ``T^d`` of the induced sup-norm of the Hessian."""
    pts = _grid(grid, f_star.d)
    best = 0.0
    for chunk in np.array_split(pts, max(1, len(pts) // 65536)):
        H = f_star.hessian(chunk)
        best = max(best, float(np.abs(H).sum(axis=-1).max()))
    return best


def derive_constants(lam: float, L: float, eps: float):
    """``(delta, tau, c)`` with ``delta = sqrt(lam / (6 L))``, ``tau = delta / sqrt(eps)``
    and ``c = lam * delta / 8``."""
    if lam <= 0:
        raise AssumptionA2Error("lambda must be positive")
    if L <= 0 or eps <= 0:
        raise ValueError("L and eps must be positive")
    delta = np.sqrt(lam / (6.0 * L))
    return float(delta), float(delta / np.sqrt(eps)), float(lam * delta / 8.0)


def average(f: FourierPerturbation, d: int, grid: int = 64, hessian_grid: int = 128) -> AveragedPerturbation:
    """Full pipeline: resonant average, restriction, ``theta*``, ``lambda``, ``L``, ``delta``, ``c``."""
    f_omega = resonant_average(f, d)
    f_star = restrict_to_resonance(f_omega, d)
    theta_star, lam = locate_theta_star(f_star, grid=grid)
    L = hessian_bound(f_star, grid=hessian_grid)
    delta, _, c = derive_constants(lam, L, 1.0)
    return AveragedPerturbation(f_omega, f_star, theta_star, lam, L, delta, c)


def persistence_margin(averaged: AveragedPerturbation, per_dim: int = 201) -> float:
    """Smallest ``|d f_star|`` over the sup-ball of radius ``3 delta^2`` around ``theta*``,
    divided by ``lambda``.  The drift argument needs this to be at least 1/2."""
    r = 3.0 * averaged.delta ** 2
    offsets = np.linspace(-r, r, per_dim)
    d = averaged.d
    ball = np.array(list(itertools.product(offsets, repeat=d))) if d > 1 else offsets[:, None]
    vals = _score(averaged.f_star, averaged.theta_star + ball)
    return float(vals.min() / averaged.lam)
