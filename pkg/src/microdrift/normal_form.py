"""First-order resonant normal form by a Lie transform.

The generating function ``chi`` solves the homological equation at the
resonant point,

    omega . d_theta chi = f - f_omega,    chi_k = f_k / (2j*pi * k.omega),

over the non-resonant modes with ``0 < |k| <= Q``.  The conjugacy ``Phi`` is
the time-1 flow of ``eps * chi`` integrated with the implicit midpoint rule,
so it is symplectic to integrator accuracy.  The remainder

    f_tilde = H o Phi - h - eps * f_omega

is measured on ``T^n x B_{2 sqrt(eps)}`` rather than bounded analytically.
The divisor is frozen at ``I = 0`` (the resonant point); the action
dependence of ``k . grad h(I)`` ends up in ``f_tilde``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .averaging import resonant_average
from .hamiltonian import TWO_PI, FourierPerturbation, NearIntegrableSystem
from .integrators import integrate
from .lattice import HIDDEN_RESONANCE_TOL, HiddenResonanceError, SmallDivisorProfile

#: step of the midpoint integration realising Phi
FLOW_STEP = 1e-3


class EpsilonTooLargeError(ArithmeticError):
    """The transform pushed a point of B_{2 sqrt(eps)} outside B_{3 sqrt(eps)}."""


@dataclass(frozen=True)
class GeneratorField:
    chi: FourierPerturbation
    Q: int
    divisor_floor: float
    omega: np.ndarray
    d: int

    @property
    def is_zero(self):
        return self.chi.is_zero


class _ScaledFlow:
    """Hamiltonian ``eps * chi`` with actions written as ``I0 + D``."""

    def __init__(self, chi, eps, I0):
        self.chi, self.eps, self.I0 = chi, eps, I0

    def vector_field(self, theta, D):
        g_theta, g_I = self.chi.gradients(theta, self.I0 + D)
        return self.eps * g_I, -self.eps * g_theta

    def energy(self, theta, D):
        return self.eps * self.chi.complex_value(theta, self.I0 + D).real


def build_generator(system: NearIntegrableSystem, d: int, Q: int) -> GeneratorField:
    """Solve the homological equation for the modes outside the resonant module.

    ``system`` must be in adapted coordinates centred at the resonant point,
    so ``grad h(0) = (0, omega_tilde)``.
    """
    if Q < system.f.max_order:
        raise ValueError(f"Q={Q} below the Fourier order K_f={system.f.max_order}; the tail would not vanish")
    n = system.n
    omega = system.h.gradient(np.zeros(n))
    modes = {}
    floor = np.inf
    for k, poly in system.f.mode_table.items():
        if not any(k[d:]) or max(abs(v) for v in k) > Q:
            continue
        div = float(np.dot(k, omega))
        if abs(div) < HIDDEN_RESONANCE_TOL:
            raise HiddenResonanceError(f"|k.omega| = {abs(div):.3g} for k={k}")
        floor = min(floor, abs(div))
        modes[k] = poly * (1.0 / (1j * TWO_PI * div))
    return GeneratorField(FourierPerturbation(modes, n), int(Q), float(floor), omega, d)


def _flow(gen: GeneratorField, eps, theta, I, sign):
    theta = np.asarray(theta, dtype=float)
    I = np.asarray(I, dtype=float)
    theta, I = np.broadcast_arrays(theta, I)
    if gen.is_zero or eps == 0:
        return theta.copy(), np.zeros_like(I)
    flow = _ScaledFlow(gen.chi, eps, I)
    traj = integrate(flow, theta, np.zeros_like(I), sign * 1.0, h_step=FLOW_STEP, dt_out=1.0, reduce=False)
    return traj.theta[-1], traj.I[-1]


def transform_displacement(gen: GeneratorField, eps: float, theta, I, inverse: bool = False):
    """``Phi(theta, I) = (theta', I + D)``; returns ``theta'`` (unreduced) and ``D``."""
    return _flow(gen, eps, theta, I, -1.0 if inverse else 1.0)


def apply_transform(gen: GeneratorField, eps: float, theta, I, check_domain: bool = True):
    """Image of ``(theta, I)`` under ``Phi``; angles reduced mod 1.

    With ``check_domain`` the inputs are assumed to lie in ``B_{2 sqrt(eps)}``
    and the images are required to stay in ``B_{3 sqrt(eps)}``.
    """
    th, D = transform_displacement(gen, eps, theta, I)
    I_new = np.asarray(I, dtype=float) + D
    if check_domain and eps > 0:
        if np.abs(I_new).max() > 3.0 * np.sqrt(eps):
            raise EpsilonTooLargeError("image leaves B_{3 sqrt(eps)}; eps too large")
    return np.mod(th, 1.0), I_new


def inverse_transform(gen: GeneratorField, eps: float, theta, I):
    th, D = transform_displacement(gen, eps, theta, I, inverse=True)
    return np.mod(th, 1.0), np.asarray(I, dtype=float) + D


def remainder_values(system: NearIntegrableSystem, gen: GeneratorField, theta, I):
    """``f_tilde(theta, I)`` and the action displacement of ``Phi`` at the same points."""
    eps = system.epsilon
    theta = np.asarray(theta, dtype=float)
    I = np.asarray(I, dtype=float)
    f_omega = resonant_average(system.f, gen.d)
    th, D = transform_displacement(gen, eps, theta, I)
    # h(I + D) - h(I) expanded term by term: D is O(eps) against O(1) actions
    val = system.h.difference(I, D) + eps * (system.f.complex_value(th, I + D).real
                                             - f_omega.complex_value(theta, I).real)
    return val, D


def _halton_domain(n, eps, samples, seed):
    u = qmc.Halton(d=2 * n, scramble=seed is not None, seed=seed).random(samples)
    return u[:, :n], 2.0 * np.sqrt(eps) * (2.0 * u[:, n:] - 1.0)


@dataclass
class RemainderReport:
    eps: float
    mu: float
    sup_displacement: float
    sup_dtheta: float
    sup_dI: float
    sample_count: int
    bounds: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)

    def as_row(self):
        return {
            "eps": self.eps, "mu": self.mu,
            "sup_displacement": self.sup_displacement, "sup_dtheta": self.sup_dtheta, "sup_dI": self.sup_dI,
            "bound_displacement": self.bounds.get("displacement"), "bound_dtheta": self.bounds.get("dtheta"),
            "bound_dI": self.bounds.get("dI"),
            "ratio_displacement": self.ratios.get("displacement"), "ratio_dtheta": self.ratios.get("dtheta"),
            "ratio_dI": self.ratios.get("dI"),
        }


def remainder_report(system: NearIntegrableSystem, gen: GeneratorField, profile: SmallDivisorProfile | None,
                     samples: int = 2000, seed: int | None = None) -> RemainderReport:
    """Sampled sup norms of ``d_theta f_tilde``, ``d_I f_tilde`` and ``Pi_I Phi - Id``.

    Derivatives are central differences with step ``1e-3 sqrt(eps)``; points
    come from a Halton sequence on ``T^n x B_{2 sqrt(eps)}``.  Ratios are taken
    against ``sqrt(eps) mu``, ``eps mu`` and ``sqrt(eps) mu``.
    """
    eps = system.epsilon
    n = system.n
    if eps == 0:
        return RemainderReport(0.0, float("nan"), 0.0, 0.0, 0.0, samples)
    theta, I = _halton_domain(n, eps, samples, seed)
    step = 1e-3 * np.sqrt(eps)
    offsets = np.zeros((4 * n + 1, 2 * n))
    for j in range(2 * n):
        offsets[1 + 2 * j, j] = step
        offsets[2 + 2 * j, j] = -step
    pts_theta = theta[:, None, :] + offsets[None, :, :n]
    pts_I = I[:, None, :] + offsets[None, :, n:]
    val, D = remainder_values(system, gen, pts_theta, pts_I)
    grad = (val[:, 1::2] - val[:, 2::2]) / (2 * step)
    sup_disp = float(np.abs(D[:, 0]).max())
    if np.abs(I + D[:, 0]).max() > 3.0 * np.sqrt(eps):
        raise EpsilonTooLargeError("image leaves B_{3 sqrt(eps)}; eps too large")
    report = RemainderReport(eps, float("nan"), sup_disp, float(np.abs(grad[:, :n]).max()),
                             float(np.abs(grad[:, n:]).max()), samples)
    if profile is not None:
        mu = profile.mu(np.sqrt(eps))
        report.mu = mu
        report.bounds = {"displacement": np.sqrt(eps) * mu, "dtheta": eps * mu, "dI": np.sqrt(eps) * mu}
        report.ratios = {
            "displacement": report.sup_displacement / report.bounds["displacement"],
            "dtheta": report.sup_dtheta / report.bounds["dtheta"],
            "dI": report.sup_dI / report.bounds["dI"],
        }
    return report


def fit_loglog(x, y):
    """Least-squares line through ``(log x, log y)``: ``(slope, intercept, rms residual)``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    coef, res, *_ = np.polyfit(lx, ly, 1, full=True)
    rms = float(np.sqrt(res[0] / len(lx))) if len(res) else 0.0
    return float(coef[0]), float(coef[1]), rms


def verify_remainder_scaling(system: NearIntegrableSystem, d: int, profile: SmallDivisorProfile, eps_list,
                           Q: int | None = None, samples: int = 2000, seed: int | None = None) -> dict:
    """Sweep ``eps`` and fit the scaling of the three remainder estimates.

    Returns the per-eps reports, fitted exponents of the measured sups and of
    the bounds, the smallest constants ``C`` valid over the whole sweep, and
    the spread ``max/min`` of the per-eps ratios over the smaller half of the
    sweep.
    """
    eps_list = sorted(float(e) for e in eps_list)
    gen = build_generator(system, d, Q if Q is not None else max(1, system.f.max_order))
    reports = [remainder_report(system.with_epsilon(e), gen, profile, samples, seed) for e in eps_list]
    out = {"reports": reports, "slopes": {}, "bound_slopes": {}, "C": {}, "spread": {}, "Q": gen.Q}
    lower = reports[: max(2, (len(reports) + 1) // 2)]
    for key, attr in (("displacement", "sup_displacement"), ("dtheta", "sup_dtheta"), ("dI", "sup_dI")):
        ys = [getattr(r, attr) for r in reports]
        if min(ys) > 0:
            out["slopes"][key] = fit_loglog(eps_list, ys)[0]
        out["bound_slopes"][key] = fit_loglog(eps_list, [r.bounds[key] for r in reports])[0]
        ratios = [r.ratios[key] for r in reports]
        out["C"][key] = float(max(ratios))
        low = [r.ratios[key] for r in lower]
        out["spread"][key] = float(max(low) / min(low)) if min(low) > 0 else float("inf")
    return out


def homological_residual(system: NearIntegrableSystem, gen: GeneratorField, theta) -> np.ndarray:
    """``{h, chi} + f - f_omega`` at ``(theta, I = 0)``; vanishes when ``Q >= K_f``."""
    theta = np.asarray(theta, dtype=float)
    zero = np.zeros(theta.shape)
    bracket = -(gen.chi.grad_theta(theta, zero) @ system.h.gradient(np.zeros(system.n)))
    f_omega = resonant_average(system.f, gen.d)
    return bracket + system.f(theta, zero) - f_omega(theta, zero)


def jacobian_determinant(gen: GeneratorField, eps: float, theta, I, step: float = 1e-6) -> np.ndarray:
    """``det D Phi`` by central differences at each point (volume preservation check)."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    I = np.atleast_2d(np.asarray(I, dtype=float))
    n = theta.shape[-1]
    E = np.eye(2 * n) * step
    pts = np.concatenate([theta, I], axis=-1)[:, None, :] + np.concatenate([E, -E])[None]
    th, D = transform_displacement(gen, eps, pts[..., :n], pts[..., n:])
    img = np.concatenate([th, pts[..., n:] + D], axis=-1)
    J = (img[:, : 2 * n] - img[:, 2 * n:]) / (2 * step)
    return np.linalg.det(np.swapaxes(J, -1, -2))
