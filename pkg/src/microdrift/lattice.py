"""Resonant module, unimodular adapted coordinates and small divisors.

Integer work is done with Python ints and :class:`fractions.Fraction` so that
``k.omega = 0`` and ``|det A| = 1`` hold exactly.  The small-divisor function
``Psi(Q)`` is computed by exhaustive search over the sup-norm ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .hamiltonian import FourierPerturbation, NearIntegrableSystem, Polynomial, DimensionError

#: divisors below this are treated as an exact (hidden) resonance
HIDDEN_RESONANCE_TOL = 1e-14


class ResonanceError(ValueError):
    """The frequency does not satisfy the resonance hypothesis."""


class HiddenResonanceError(ArithmeticError):
    """A small divisor vanished to working precision."""


class QmaxExceededError(ArithmeticError):
    """Delta(x) cannot be resolved inside the tabulated range; increase Q_max."""


class LatticeError(ValueError):
    """Integer basis cannot be completed to a unimodular matrix."""


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, int):
        return Fraction(x)
    raise TypeError(f"exact rational required, got {type(x).__name__} {x!r}")


def primitive_integer_vector(omega: Sequence) -> list[int]:
    """Clear denominators and divide out the content of a rational vector."""
    fr = [_as_fraction(w) for w in omega]
    lcm = 1
    for w in fr:
        lcm = lcm * w.denominator // math.gcd(lcm, w.denominator)
    v = [int(w * lcm) for w in fr]
    g = 0
    for x in v:
        g = math.gcd(g, x)
    return [x // g for x in v] if g else v


class _ColumnReducer:
    """Integer column operations on ``M`` tracking ``V`` and ``V^{-1}``."""

    def __init__(self, M):
        self.M = [list(r) for r in M]
        n = len(self.M[0])
        self.V = [[int(i == j) for j in range(n)] for i in range(n)]
        self.Vinv = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap(self, i, j):
        for row in self.M + self.V:
            row[i], row[j] = row[j], row[i]
        self.Vinv[i], self.Vinv[j] = self.Vinv[j], self.Vinv[i]

    def add(self, target, source, c):
        # col_target += c * col_source
        if c == 0:
            return
        for row in self.M + self.V:
            row[target] += c * row[source]
        self.Vinv[source] = [a - c * b for a, b in zip(self.Vinv[source], self.Vinv[target])]

    def negate(self, i):
        for row in self.M + self.V:
            row[i] = -row[i]
        self.Vinv[i] = [-a for a in self.Vinv[i]]

    def reduce_row(self, r, start):
        """Euclid on row ``r`` over columns ``start..``; gcd lands in ``start``."""
        row = self.M[r]
        n = len(row)
        while True:
            nz = [j for j in range(start, n) if row[j] != 0]
            if not nz:
                return 0
            pivot = min(nz, key=lambda j: (abs(row[j]), j))
            if pivot != start:
                self.swap(start, pivot)
            for j in range(start + 1, n):
                if row[j]:
                    self.add(j, start, -(row[j] // row[start]))
            if all(row[j] == 0 for j in range(start + 1, n)):
                if row[start] < 0:
                    self.negate(start)
                return row[start]


def hermite_rows(B):
    """Row-style Hermite normal form of an integer matrix with full row rank."""
    work = [list(r) for r in B]
    d, n = len(work), len(work[0])
    col = 0
    for i in range(d):
        while col < n and all(r[col] == 0 for r in work[i:]):
            col += 1
        if col == n:
            break
        # Euclid among rows i.. on column `col`
        while True:
            nz = [j for j in range(i, d) if work[j][col] != 0]
            p = min(nz, key=lambda j: (abs(work[j][col]), j))
            work[i], work[p] = work[p], work[i]
            for j in range(i + 1, d):
                if work[j][col]:
                    q = work[j][col] // work[i][col]
                    work[j] = [a - q * b for a, b in zip(work[j], work[i])]
            if all(work[j][col] == 0 for j in range(i + 1, d)):
                break
        if work[i][col] < 0:
            work[i] = [-a for a in work[i]]
        for j in range(i):
            q = work[j][col] // work[i][col]
            work[j] = [a - q * b for a, b in zip(work[j], work[i])]
        col += 1
    return [r for r in work if any(r)]


def resonant_module(omega: Sequence) -> np.ndarray:
    """Integer basis (rows) of the saturated lattice ``{k : k.omega = 0}``.

    ``omega`` must have exact rational components (ints, Fractions or strings
    such as ``"3/2"``).  A rational vector spans a line, so the lattice has
    rank ``n - 1``.
    """
    v = primitive_integer_vector(omega)
    n = len(v)
    if n < 2:
        raise DimensionError("n >= 2 required")
    if not any(v):
        raise ResonanceError("omega = 0 is excluded")
    red = _ColumnReducer([v])
    red.reduce_row(0, 0)
    kernel = [[red.V[i][j] for i in range(n)] for j in range(1, n)]
    basis = hermite_rows(kernel)
    return np.array(basis, dtype=np.int64)


def unimodular_adaptation(lambda_basis) -> np.ndarray:
    """Complete the ``d`` basis rows to an ``n x n`` integer matrix with det +1."""
    B = [[int(x) for x in row] for row in np.atleast_2d(lambda_basis)]
    d, n = len(B), len(B[0])
    if not 1 <= d <= n - 1:
        raise LatticeError(f"need 1 <= d <= n-1, got d={d}, n={n}")
    red = _ColumnReducer(B)
    for i in range(d):
        red.reduce_row(i, i)
    diag = [red.M[i][i] for i in range(d)]
    if any(abs(x) != 1 for x in diag):
        raise LatticeError(f"basis is not saturated (pivots {diag})")
    A = [list(r) for r in B] + [list(red.Vinv[i]) for i in range(d, n)]
    if integer_det(A) < 0:
        A[-1] = [-a for a in A[-1]]
    if abs(integer_det(A)) != 1:
        raise LatticeError("completion failed")
    return np.array(A, dtype=np.int64)


def integer_det(M) -> int:
    """Exact determinant by fraction-free Bareiss elimination."""
    A = [[int(x) for x in row] for row in M]
    n = len(A)
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if A[i][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def integer_inverse(A) -> np.ndarray:
    """Exact inverse of a unimodular integer matrix."""
    n = len(A)
    M = [[Fraction(int(x)) for x in row] + [Fraction(int(i == j)) for j in range(n)]
         for i, row in enumerate(np.asarray(A))]
    for c in range(n):
        p = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[p] = M[p], M[c]
        piv = M[c][c]
        M[c] = [x / piv for x in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    inv = [[x for x in row[n:]] for row in M]
    if any(x.denominator != 1 for row in inv for x in row):
        raise LatticeError("matrix is not unimodular")
    return np.array([[int(x) for x in row] for row in inv], dtype=np.int64)


# -- coordinate changes -------------------------------------------------------

def transform_system(system: NearIntegrableSystem, A) -> NearIntegrableSystem:
    """Linear symplectic change ``theta' = A theta``, ``I' = A^{-T} I``.

    Modes map as ``k' = A^{-T} k`` and coefficients as ``c'(I') = c(A^T I')``
    so that ``H'(theta', I') = H(theta, I)``.
    """
    A = np.asarray(A, dtype=np.int64)
    n = system.n
    if A.shape != (n, n):
        raise DimensionError(f"A has shape {A.shape}, expected {(n, n)}")
    if abs(integer_det(A)) != 1:
        raise LatticeError("A must be unimodular")
    AinvT = integer_inverse(A).T
    At = A.T
    h = system.h.linear_substitute(At)
    f = system.f.map_modes(lambda k: tuple(int(x) for x in AinvT @ np.array(k, dtype=np.int64)),
                           lambda p: p.linear_substitute(At))
    radius = system.domain_radius * float(np.abs(AinvT).sum(axis=1).max())
    return NearIntegrableSystem(h, f, system.epsilon, radius)


def shift_actions(system: NearIntegrableSystem, origin) -> NearIntegrableSystem:
    """Re-centre the actions: the new action ``J`` corresponds to ``I = origin + J``."""
    origin = np.asarray(origin, dtype=float)
    h = system.h.shift(origin)
    f = system.f.map_modes(lambda k: k, lambda p: p.shift(origin))
    return NearIntegrableSystem(h, f, system.epsilon, system.domain_radius)


@dataclass(frozen=True)
class ResonanceData:
    """Resonant point, its frequency and the adapted lattice coordinates.

    ``i_star`` and ``omega`` are in user coordinates; ``A`` maps angles to
    adapted coordinates where ``A @ omega = (0, ..., 0, omega_tilde)``.
    """

    i_star: np.ndarray
    omega: np.ndarray
    d: int
    lambda_basis: np.ndarray
    A: np.ndarray
    omega_tilde: np.ndarray

    @property
    def n(self):
        return len(self.omega)

    @property
    def A_inv(self):
        return integer_inverse(self.A)

    def to_adapted_actions(self, I):
        """User actions to adapted actions centred on the resonance."""
        AinvT = self.A_inv.T.astype(float)
        return (np.asarray(I, dtype=float) - self.i_star) @ AinvT.T

    def to_user_actions(self, J):
        return np.asarray(J, dtype=float) @ self.A.astype(float) + self.i_star

    def to_adapted_angles(self, theta):
        return np.mod(np.asarray(theta, dtype=float) @ self.A.T.astype(float), 1.0)

    def to_user_angles(self, phi):
        return np.mod(np.asarray(phi, dtype=float) @ self.A_inv.T.astype(float), 1.0)


def _check_frequency(system, i_star, omega, tol=1e-9):
    grad = system.h.gradient(np.asarray(i_star, dtype=float))
    if not np.allclose(grad, omega, atol=tol, rtol=0):
        raise ResonanceError(f"grad h(I*) = {grad} does not match omega = {omega}")


def resonance_from_rational(system: NearIntegrableSystem, i_star, omega) -> ResonanceData:
    """Resonance data for an exactly rational frequency vector."""
    omega_f = np.array([float(_as_fraction(w)) for w in omega])
    if system is not None:
        _check_frequency(system, i_star, omega_f)
    basis = resonant_module(omega)
    A = unimodular_adaptation(basis)
    v = primitive_integer_vector(omega)
    for k in basis:
        if sum(int(a) * b for a, b in zip(k, v)) != 0:
            raise LatticeError("basis row is not orthogonal to omega")
    adapted = A.astype(float) @ omega_f
    d = basis.shape[0]
    adapted[:d] = 0.0  # exact in rational arithmetic
    return ResonanceData(np.asarray(i_star, dtype=float), omega_f, d, basis, A, adapted[d:])


def resonance_from_adapted(system: NearIntegrableSystem, i_star, d: int, omega_tilde) -> ResonanceData:
    """Resonance data for a frequency already of the form ``(0, omega_tilde)``."""
    omega_tilde = np.atleast_1d(np.asarray(omega_tilde, dtype=float))
    n = d + len(omega_tilde)
    if not 1 <= d <= n - 1:
        raise ResonanceError(f"need 1 <= d <= n-1, got d={d}, n={n}")
    if not np.any(omega_tilde):
        raise ResonanceError("omega = 0 is excluded")
    omega = np.concatenate([np.zeros(d), omega_tilde])
    if system is not None:
        _check_frequency(system, i_star, omega)
    basis = np.eye(n, dtype=np.int64)[:d]
    return ResonanceData(np.asarray(i_star, dtype=float), omega, d, basis, np.eye(n, dtype=np.int64), omega_tilde)


def adapted_system(system: NearIntegrableSystem, resonance: ResonanceData) -> NearIntegrableSystem:
    """System in adapted coordinates with the resonant point moved to ``I = 0``."""
    moved = transform_system(system, resonance.A)
    origin = integer_inverse(resonance.A).T.astype(float) @ resonance.i_star
    return shift_actions(moved, origin)


# -- small divisors -----------------------------------------------------------

def _box(m, q):
    axis = np.arange(-q, q + 1)
    grid = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    return grid[np.any(grid != 0, axis=1)]


def _divisors(K, w):
    # explicit left-to-right sum so results are reproducible bit for bit
    acc = K[:, 0] * w[0]
    for j in range(1, len(w)):
        acc = acc + K[:, j] * w[j]
    return np.abs(acc)


def min_divisor_table(omega_tilde, q_max: int) -> np.ndarray:
    """``min |k.w|`` over ``0 < |k| <= Q`` for ``Q = 1..q_max``."""
    w = np.atleast_1d(np.asarray(omega_tilde, dtype=float))
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    K = _box(len(w), q_max)
    div = _divisors(K.astype(float), w)
    bad = div < HIDDEN_RESONANCE_TOL
    if bad.any():
        k = K[np.argmax(bad)]
        raise HiddenResonanceError(f"|k.omega| < {HIDDEN_RESONANCE_TOL:g} for k={tuple(int(x) for x in k)}")
    shell = np.abs(K).max(axis=1)
    per_shell = np.full(q_max + 1, np.inf)
    np.minimum.at(per_shell, shell, div)
    return np.minimum.accumulate(per_shell[1:])


def psi(omega_tilde, Q: int) -> float:
    """``Psi(Q) = max{ |k.w|^{-1} : k in Z^m, 0 < |k| <= Q }``."""
    return float(1.0 / min_divisor_table(omega_tilde, int(Q))[-1])


@dataclass(frozen=True)
class SmallDivisorProfile:
    """Tabulated ``Psi`` on ``1..q_max`` with evaluators for ``Delta`` and ``mu``.

    When ``omega_tilde`` has a single component, ``Psi`` is constant
    (``|k w| >= |w|``) and the table extends exactly beyond ``q_max``.
    """

    omega_tilde: np.ndarray
    q_max: int
    min_divisor: np.ndarray
    kappa: float = 1.0

    @classmethod
    def build(cls, omega_tilde, q_max: int = 200, kappa: float = 1.0):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        w = np.atleast_1d(np.asarray(omega_tilde, dtype=float))
        return cls(w, int(q_max), min_divisor_table(w, q_max), float(kappa))

    @property
    def psi(self) -> np.ndarray:
        return 1.0 / self.min_divisor

    @property
    def Q(self) -> np.ndarray:
        return np.arange(1, self.q_max + 1)

    @property
    def exact_tail(self) -> bool:
        return len(self.omega_tilde) == 1

    def psi_at(self, Q: int) -> float:
        if Q < 1:
            raise ValueError("Psi is defined for Q >= 1")
        if Q > self.q_max:
            if not self.exact_tail:
                raise QmaxExceededError(f"Q={Q} beyond q_max={self.q_max}")
            return float(self.psi[-1])
        return float(self.psi[Q - 1])

    def delta(self, x: float) -> float:
        """``sup{Q >= 1 : Q Psi(Q) <= x}`` with Psi constant on ``[Q, Q+1)``."""
        psi = self.psi
        if x < psi[0]:
            raise ValueError(f"Delta is defined for x >= Psi(1) = {psi[0]:.6g}, got {x}")
        qpsi = self.Q * psi
        q0 = int(np.searchsorted(qpsi, x, side="right"))  # number of valid integer Q
        ratio = x / psi[q0 - 1]
        if q0 < self.q_max:
            return float(min(q0 + 1, ratio))
        if self.exact_tail:
            return float(ratio)
        if ratio >= self.q_max + 1:
            raise QmaxExceededError(f"Delta({x:g}) exceeds q_max={self.q_max}; increase Q_max")
        return float(ratio)

    def mu(self, sqrt_eps: float) -> float:
        """``mu(sqrt(eps)) = 1 / Delta(kappa / sqrt(eps))``."""
        if sqrt_eps <= 0:
            raise ValueError("sqrt_eps must be positive")
        return 1.0 / self.delta(self.kappa / sqrt_eps)

    def table(self):
        """Rows ``(Q, min_divisor, psi)``."""
        return [(int(q), float(m), float(p)) for q, m, p in zip(self.Q, self.min_divisor, self.psi)]


def delta(profile: SmallDivisorProfile, x: float) -> float:
    return profile.delta(x)


def mu(profile: SmallDivisorProfile, sqrt_eps: float) -> float:
    return profile.mu(sqrt_eps)
