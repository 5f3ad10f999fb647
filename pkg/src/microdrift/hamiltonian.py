"""Near-integrable Hamiltonians H(theta, I) = h(I) + eps * f(theta, I).

Angles are measured in full turns, so a Fourier mode ``k`` reads
``exp(2j*pi*k.theta)``.  The integrable part ``h`` is a polynomial in the
actions and the perturbation ``f`` is a finite Fourier series whose
coefficients are (complex) polynomials in the actions, which keeps every
derivative exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from math import comb, factorial
from typing import Iterable, Mapping

import numpy as np

TWO_PI = 2.0 * np.pi

#: imaginary residue tolerated by :meth:`FourierPerturbation.__call__`
REALITY_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when an argument does not have the dimension of the system."""


class RealityError(ValueError):
    """Raised when a mode table violates c_{-k}(I) = conj(c_k(I))."""


def reduce_angles(theta):
    """Map angles (in turns) to the canonical representative in [0, 1)."""
    theta = np.asarray(theta, dtype=float)
    out = np.mod(theta, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(out >= 1.0, 0.0, out)


def _check_last_dim(x, n, what):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (n,):
        raise DimensionError(f"{what} has trailing dimension {x.shape[-1:]}, expected ({n},)")
    return x


class Polynomial:
    """Finite polynomial in ``n`` real variables.

    Parameters
    ----------
    terms : mapping
        Multi-index (tuple of ``n`` non-negative ints) to coefficient.  Real
        or complex coefficients are accepted; zero coefficients are dropped.
    n : int
        Number of variables.
    """

    def __init__(self, terms: Mapping[tuple, complex], n: int):
        self.n = int(n)
        clean = {}
        for alpha, c in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n or min(alpha, default=0) < 0:
                raise DimensionError(f"bad multi-index {alpha} for n={self.n}")
            if c != 0:
                clean[alpha] = clean.get(alpha, 0) + c
        self._terms = {a: c for a, c in sorted(clean.items()) if c != 0}
        is_complex = any(isinstance(c, complex) or np.iscomplexobj(c) for c in self._terms.values())
        dtype = complex if is_complex else float
        if self._terms:
            self.exponents = np.array(list(self._terms), dtype=int)
            self.coeffs = np.array(list(self._terms.values()), dtype=dtype)
        else:
            self.exponents = np.zeros((0, self.n), dtype=int)
            self.coeffs = np.zeros(0, dtype=dtype)
        self.exponents.setflags(write=False)
        self.coeffs.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, value, n):
        return cls({(0,) * n: value}, n)

    @classmethod
    def zero(cls, n):
        return cls({}, n)

    @classmethod
    def half_square_norm(cls, n):
        """The quadratic ``|I|^2 / 2``."""
        return cls({tuple(2 if j == i else 0 for j in range(n)): 0.5 for i in range(n)}, n)

    @property
    def terms(self):
        return dict(self._terms)

    @property
    def degree(self):
        return int(self.exponents.sum(axis=1).max()) if len(self._terms) else 0

    @property
    def is_zero(self):
        return not self._terms

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.n == other.n and self._terms == other._terms

    def __repr__(self):
        return f"Polynomial({self._terms!r}, n={self.n})"

    # -- algebra --------------------------------------------------------------

    def __add__(self, other):
        terms = dict(self._terms)
        for a, c in other._terms.items():
            terms[a] = terms.get(a, 0) + c
        return Polynomial(terms, self.n)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            terms = {}
            for (a, c), (b, e) in itertools.product(self._terms.items(), other._terms.items()):
                key = tuple(x + y for x, y in zip(a, b))
                terms[key] = terms.get(key, 0) + c * e
            return Polynomial(terms, self.n)
        return Polynomial({a: c * other for a, c in self._terms.items()}, self.n)

    __rmul__ = __mul__

    def conj(self):
        return Polynomial({a: np.conj(c) for a, c in self._terms.items()}, self.n)

    def derivative(self, multi_index) -> "Polynomial":
        """Exact partial derivative ``d^beta p``."""
        beta = tuple(int(b) for b in multi_index)
        terms = {}
        for alpha, c in self._terms.items():
            if any(a < b for a, b in zip(alpha, beta)):
                continue
            factor = 1
            for a, b in zip(alpha, beta):
                factor *= factorial(a) // factorial(a - b)
            terms[tuple(a - b for a, b in zip(alpha, beta))] = c * factor
        return Polynomial(terms, self.n)

    def shift(self, offset) -> "Polynomial":
        """Return ``x -> p(x + offset)``."""
        offset = [float(v) for v in offset]
        terms = {}
        for alpha, c in self._terms.items():
            for beta in itertools.product(*(range(a + 1) for a in alpha)):
                w = c
                for a, b, o in zip(alpha, beta, offset):
                    w = w * comb(a, b) * o ** (a - b)
                terms[beta] = terms.get(beta, 0) + w
        return Polynomial(terms, self.n)

    def linear_substitute(self, matrix) -> "Polynomial":
        """Return ``x -> p(M x)`` for an ``n x n`` matrix ``M``."""
        M = np.asarray(matrix)
        if M.shape != (self.n, self.n):
            raise DimensionError(f"matrix shape {M.shape} does not match n={self.n}")
        rows = []
        for i in range(self.n):
            rows.append(Polynomial({tuple(1 if j == l else 0 for j in range(self.n)): M[i, l].item()
                                    for l in range(self.n) if M[i, l] != 0}, self.n))
        powers = {}

        def row_power(i, p):
            if (i, p) not in powers:
                powers[(i, p)] = Polynomial.constant(1, self.n) if p == 0 else row_power(i, p - 1) * rows[i]
            return powers[(i, p)]

        out = Polynomial.zero(self.n)
        for alpha, c in self._terms.items():
            term = Polynomial.constant(c, self.n)
            for i, a in enumerate(alpha):
                if a:
                    term = term * row_power(i, a)
            out = out + term
        return out

    # -- evaluation -----------------------------------------------------------

    @cached_property
    def _compiled(self):
        # value and gradient as matrices over a downward-closed monomial basis
        basis = _downward_closure(self._terms) or [(0,) * self.n]
        index = {b: i for i, b in enumerate(basis)}
        value = np.zeros(len(basis), dtype=self.coeffs.dtype)
        grad = np.zeros((self.n, len(basis)), dtype=self.coeffs.dtype)
        for alpha, c in self._terms.items():
            value[index[alpha]] += c
            for j, a in enumerate(alpha):
                if a:
                    lowered = alpha[:j] + (a - 1,) + alpha[j + 1:]
                    grad[j, index[lowered]] += c * a
        E = np.array(basis, dtype=int).reshape(-1, self.n)
        return E, value, grad, int(E.max(initial=0))

    def monomials(self, x):
        x = _check_last_dim(x, self.n, "argument")
        return np.prod(x[..., None, :] ** self.exponents, axis=-1)

    def _basis_values(self, x):
        E, _, _, top = self._compiled
        if top == 0:
            return np.ones(x.shape[:-1] + (1,))
        return np.prod(x[..., None, :] ** E, axis=-1)

    def __call__(self, x):
        return self.monomials(x) @ self.coeffs

    def gradient(self, x):
        x = _check_last_dim(x, self.n, "argument")
        return self._basis_values(x) @ self._compiled[2].T

    def hessian(self, x):
        x = _check_last_dim(x, self.n, "argument")
        n = self.n
        out = np.empty(x.shape[:-1] + (n, n), dtype=self.coeffs.dtype)
        for i in range(n):
            for j in range(i, n):
                beta = [0] * n
                beta[i] += 1
                beta[j] += 1
                out[..., i, j] = out[..., j, i] = self.derivative(beta)(x)
        return out

    def difference(self, x, dx):
        """``p(x + dx) - p(x)`` expanded so that no cancellation occurs.

        Useful when ``dx`` is many orders of magnitude below ``x``.
        """
        x = _check_last_dim(x, self.n, "argument")
        dx = _check_last_dim(dx, self.n, "increment")
        x, dx = np.broadcast_arrays(x, dx)
        out = np.zeros(x.shape[:-1], dtype=np.result_type(self.coeffs, float))
        for alpha, c in self._terms.items():
            for beta in itertools.product(*(range(a + 1) for a in alpha)):
                if not any(beta):
                    continue
                w = np.full(x.shape[:-1], c, dtype=out.dtype)
                for j, (a, b) in enumerate(zip(alpha, beta)):
                    if a:
                        w = w * comb(a, b) * x[..., j] ** (a - b) * dx[..., j] ** b
                out = out + w
        return out


def _downward_closure(exponent_sets):
    closed = set()
    for alpha in exponent_sets:
        for beta in itertools.product(*(range(a + 1) for a in alpha)):
            closed.add(beta)
    return sorted(closed)


class FourierPerturbation:
    """Finite Fourier series ``f(theta, I) = sum_k c_k(I) exp(2j*pi*k.theta)``.

    Both members of every ``+-k`` pair are stored.  The reality condition
    ``c_{-k} = conj(c_k)`` is checked at construction.
    """

    def __init__(self, modes: Mapping[tuple, Polynomial], n: int, check_reality: bool = True):
        self.n = int(n)
        clean = {}
        for k, poly in modes.items():
            k = tuple(int(v) for v in k)
            if len(k) != self.n:
                raise DimensionError(f"mode {k} does not have length {self.n}")
            if poly.n != self.n:
                raise DimensionError(f"coefficient of mode {k} has n={poly.n}")
            clean[k] = clean[k] + poly if k in clean else poly
        self._modes = {k: p for k, p in sorted(clean.items()) if not p.is_zero}
        if check_reality:
            self._check_reality()
        self._compile()

    @classmethod
    def zero(cls, n):
        return cls({}, n)

    @classmethod
    def cosine(cls, k, amplitude=1.0, coeff: Polynomial | None = None):
        """``amplitude * coeff(I) * cos(2*pi*k.theta)`` with real ``coeff``."""
        k = tuple(int(v) for v in k)
        n = len(k)
        poly = Polynomial.constant(1.0, n) if coeff is None else coeff
        if not any(k):
            return cls({k: poly * float(amplitude)}, n)
        half = poly * (0.5 * amplitude)
        return cls({k: half, tuple(-v for v in k): half}, n)

    @classmethod
    def sine(cls, k, amplitude=1.0):
        k = tuple(int(v) for v in k)
        n = len(k)
        return cls({k: Polynomial.constant(-0.5j * amplitude, n),
                    tuple(-v for v in k): Polynomial.constant(0.5j * amplitude, n)}, n)

    def _check_reality(self):
        for k, poly in self._modes.items():
            partner = self._modes.get(tuple(-v for v in k))
            if partner is None:
                raise RealityError(f"mode {k} has no partner {tuple(-v for v in k)}")
            diff = poly.conj() + partner * -1
            if np.any(np.abs(diff.coeffs) > 1e-14 * max(1.0, np.abs(poly.coeffs).max())):
                raise RealityError(f"c_-k != conj(c_k) for k={k}")

    def _compile(self):
        n = self.n
        self.modes = np.array(list(self._modes), dtype=int).reshape(-1, n)
        basis = _downward_closure(
            tuple(a) for p in self._modes.values() for a in p.terms) or [(0,) * n]
        self.basis = np.array(basis, dtype=int).reshape(-1, n)
        index = {tuple(b): i for i, b in enumerate(basis)}
        C = np.zeros((len(self._modes), len(basis)), dtype=complex)
        dC = np.zeros((n, len(self._modes), len(basis)), dtype=complex)
        for m, poly in enumerate(self._modes.values()):
            for alpha, c in poly.terms.items():
                C[m, index[alpha]] += c
                for j in range(n):
                    if alpha[j]:
                        lowered = list(alpha)
                        lowered[j] -= 1
                        dC[j, m, index[tuple(lowered)]] += c * alpha[j]
        self._coef_matrix = C
        self._dcoef_matrix = dC
        self._wave = TWO_PI * self.modes.astype(float)
        self._is_constant_in_I = bool((self.basis.sum(axis=1) == 0).all())
        self._const_coef = C[:, 0] if self._is_constant_in_I else None

    # -- table access ---------------------------------------------------------

    @property
    def mode_table(self):
        return dict(self._modes)

    @property
    def max_order(self):
        """K_f: largest sup-norm of a mode index."""
        return int(np.abs(self.modes).max()) if len(self._modes) else 0

    @property
    def is_zero(self):
        return not self._modes

    def __eq__(self, other):
        return isinstance(other, FourierPerturbation) and self.mode_table == other.mode_table

    def __repr__(self):
        return f"FourierPerturbation({len(self._modes)} modes, n={self.n})"

    def __add__(self, other):
        modes = dict(self._modes)
        for k, p in other._modes.items():
            modes[k] = modes[k] + p if k in modes else p
        return FourierPerturbation(modes, self.n)

    def scale(self, factor):
        return FourierPerturbation({k: p * factor for k, p in self._modes.items()}, self.n)

    def filter_modes(self, keep) -> "FourierPerturbation":
        """Keep only the modes ``k`` with ``keep(k)`` true."""
        return FourierPerturbation({k: p for k, p in self._modes.items() if keep(k)}, self.n)

    def map_modes(self, mode_map, poly_map) -> "FourierPerturbation":
        return FourierPerturbation({mode_map(k): poly_map(p) for k, p in self._modes.items()}, self.n)

    def at_actions(self, I) -> dict:
        """Complex mode coefficients c_k(I) for a single action vector."""
        I = _check_last_dim(I, self.n, "I")
        return {k: complex(p(I)) for k, p in self._modes.items()}

    # -- evaluation -----------------------------------------------------------

    def _parts(self, theta, I):
        theta = _check_last_dim(theta, self.n, "theta")
        I = _check_last_dim(I, self.n, "I")
        if self._is_constant_in_I:
            mono = np.ones(I.shape[:-1] + (1,))
        else:
            mono = np.prod(I[..., None, :] ** self.basis, axis=-1)
        phase = np.exp(1j * (theta @ self._wave.T))
        return mono, phase

    @staticmethod
    def _real(z):
        if np.any(np.abs(z.imag) > REALITY_TOL * np.maximum(1.0, np.abs(z.real))):
            raise RealityError("imaginary residue above tolerance; corrupt mode table")
        return z.real

    def complex_value(self, theta, I):
        if self.is_zero:
            return np.zeros(np.broadcast_shapes(np.shape(theta)[:-1], np.shape(I)[:-1]), dtype=complex)
        mono, phase = self._parts(theta, I)
        return np.sum((mono @ self._coef_matrix.T) * phase, axis=-1)

    def __call__(self, theta, I):
        return self._real(self.complex_value(theta, I))

    def grad_theta(self, theta, I):
        if self.is_zero:
            return np.zeros(np.broadcast_shapes(np.shape(theta), np.shape(I)))
        mono, phase = self._parts(theta, I)
        z = (mono @ self._coef_matrix.T) * phase
        return self._real(1j * (z @ self._wave))

    def grad_I(self, theta, I):
        shape = np.broadcast_shapes(np.shape(theta), np.shape(I))
        if self.is_zero or self._is_constant_in_I:
            return np.zeros(shape)
        mono, phase = self._parts(theta, I)
        out = np.empty(shape)
        for j in range(self.n):
            out[..., j] = self._real(np.sum((mono @ self._dcoef_matrix[j].T) * phase, axis=-1))
        return out

    def gradients(self, theta, I):
        """``(d_theta f, d_I f)`` sharing one phase evaluation."""
        shape = np.broadcast_shapes(np.shape(theta), np.shape(I))
        if self.is_zero:
            return np.zeros(shape), np.zeros(shape)
        # reality of the table was verified at construction, so the
        # imaginary parts here are pure roundoff and are dropped unchecked
        theta = np.asarray(theta, dtype=float)
        I = np.asarray(I, dtype=float)
        phase = np.exp(1j * (theta @ self._wave.T))
        if self._is_constant_in_I:
            z = self._const_coef * phase
            return -(z.imag @ self._wave), np.zeros(shape)
        mono = np.prod(I[..., None, :] ** self.basis, axis=-1)
        z = (mono @ self._coef_matrix.T) * phase
        g_theta = -(z.imag @ self._wave)
        g_I = np.einsum("...p,jmp,...m->...j", mono, self._dcoef_matrix, phase).real
        return g_theta, g_I

    def derivative_value(self, theta_order, action_order, theta, I):
        """Mixed partial ``d_theta^beta d_I^gamma f`` evaluated exactly."""
        theta_order = np.asarray(theta_order, dtype=int)
        if self.is_zero:
            return np.zeros(np.broadcast_shapes(np.shape(theta)[:-1], np.shape(I)[:-1]))
        theta = _check_last_dim(theta, self.n, "theta")
        I = _check_last_dim(I, self.n, "I")
        factors = np.prod((2j * np.pi * self.modes) ** theta_order, axis=-1)
        coef = np.stack([p.derivative(action_order)(I) * np.ones(I.shape[:-1]) for p in self._modes.values()],
                        axis=-1)
        phase = np.exp(1j * (theta @ self._wave.T))
        return self._real(np.sum(coef * factors * phase, axis=-1))


@dataclass(frozen=True)
class NearIntegrableSystem:
    """``H(theta, I) = h(I) + epsilon * f(theta, I)`` on ``T^n x B_r``."""

    h: Polynomial
    f: FourierPerturbation
    epsilon: float = 0.0
    domain_radius: float = 1.0
    n: int = field(init=False)

    def __post_init__(self):
        n = self.h.n
        if n < 2:
            raise DimensionError("n >= 2 required")
        if self.f.n != n:
            raise DimensionError(f"h has n={n} but f has n={self.f.n}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.domain_radius <= 0:
            raise ValueError("domain_radius must be positive")
        object.__setattr__(self, "n", n)

    def with_epsilon(self, epsilon):
        return NearIntegrableSystem(self.h, self.f, float(epsilon), self.domain_radius)

    def energy(self, theta, I):
        return self.h(I) + self.epsilon * self.f(theta, I)

    __call__ = energy

    def vector_field(self, theta, I):
        """Return ``(theta_dot, I_dot)`` from Hamilton's equations."""
        if self.epsilon == 0.0 or self.f.is_zero:
            I = np.asarray(I, dtype=float)
            g = self.h.gradient(I)
            return np.broadcast_to(g, np.broadcast_shapes(np.shape(theta), g.shape)).copy(), \
                np.zeros(np.broadcast_shapes(np.shape(theta), np.shape(I)))
        g_theta, g_I = self.f.gradients(theta, I)
        return self.h.gradient(I) + self.epsilon * g_I, -self.epsilon * g_theta


# -- free-function surface ----------------------------------------------------

def eval_h(h: Polynomial, I):
    return h(I)


def grad_h(h: Polynomial, I):
    return h.gradient(I)


def hess_h(h: Polynomial, I):
    return h.hessian(I)


def eval_f(f: FourierPerturbation, theta, I):
    return f(theta, I)


def grad_theta_f(f: FourierPerturbation, theta, I):
    return f.grad_theta(theta, I)


def grad_I_f(f: FourierPerturbation, theta, I):
    return f.grad_I(theta, I)


def _multi_indices(n, max_order):
    for total in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            beta = [0] * n
            for j in combo:
                beta[j] += 1
            yield tuple(beta)


def sup_norm_estimates(system: NearIntegrableSystem, m: int = 8) -> dict:
    """Sampled C^2 norm of ``h`` and C^3 norm of ``f``.

    The C^k norm is the largest sampled value of ``|d^alpha|`` over all
    partials of order at most ``k``.  Angles are sampled at ``j/m`` and
    actions on ``m`` equispaced points of ``[-r, r]`` per axis.  Nothing is
    rejected; the result is informational.
    """
    if m < 8:
        raise ValueError("grid resolution m must be at least 8")
    n, r = system.n, system.domain_radius
    axis_I = np.linspace(-r, r, m)
    I_grid = np.stack(np.meshgrid(*([axis_I] * n), indexing="ij"), axis=-1).reshape(-1, n)
    h_orders = {}
    for beta in _multi_indices(n, 2):
        order = sum(beta)
        val = float(np.abs(system.h.derivative(beta)(I_grid)).max()) if not system.h.is_zero else 0.0
        h_orders[order] = max(h_orders.get(order, 0.0), val)

    axis_theta = np.arange(m) / m
    theta_grid = np.stack(np.meshgrid(*([axis_theta] * n), indexing="ij"), axis=-1).reshape(-1, n)
    th = theta_grid[:, None, :]
    Ig = I_grid[None, :, :]
    f_orders = {}
    for beta in _multi_indices(2 * n, 3):
        order = sum(beta)
        val = float(np.abs(system.f.derivative_value(beta[:n], beta[n:], th, Ig)).max()) \
            if not system.f.is_zero else 0.0
        f_orders[order] = max(f_orders.get(order, 0.0), val)
    return {
        "h_C2": max(h_orders.values()),
        "f_C3": max(f_orders.values()),
        "h_by_order": h_orders,
        "f_by_order": f_orders,
        "grid_points": m,
    }


def modes_from_pairs(pairs: Iterable[tuple], n: int) -> FourierPerturbation:
    """Build a perturbation from ``(k, Polynomial)`` pairs, summing duplicates."""
    modes = {}
    for k, poly in pairs:
        k = tuple(int(v) for v in k)
        modes[k] = modes[k] + poly if k in modes else poly
    return FourierPerturbation(modes, n)
