"""Micro-drift experiments: the sqrt(eps) drift along the resonant module.

The orbit starts at the resonant point with the resonant angles at the
maximiser ``theta*`` of the averaged gradient and is integrated on the full
system (not on the normal form) up to ``tau = delta / sqrt(eps)``.  Drift is
decomposed in adapted coordinates into its component along the resonant
module (first ``d`` actions) and the transverse remainder.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .averaging import AssumptionA2Error, AveragedPerturbation, average
from .hamiltonian import NearIntegrableSystem
from .integrators import default_step, integrate
from .lattice import (QmaxExceededError, ResonanceData, SmallDivisorProfile, adapted_system, min_divisor_table,
                      shift_actions)
from .normal_form import apply_transform, build_generator, fit_loglog, inverse_transform

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriftConfig:
    eps: float
    theta_transverse: tuple | None = None
    kappa: float = 1.0
    mu0: float = 0.1
    h_step: float | None = None
    samples_out: int = 200
    phase_sweep: int = 0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass
class DriftReport:
    eps: float
    tau: float
    drift_vector: np.ndarray
    drift_vector_user: np.ndarray
    total: float
    along: float
    transverse: float
    threshold: float
    passed: bool
    max_transverse: float
    max_total: float
    mu: float
    mu_exceeded: bool
    fitted_C: float
    energy_drift: float
    step_size: float
    steps: int
    series: dict = field(default_factory=dict, repr=False)

    def as_row(self):
        return {"eps": self.eps, "mu": self.mu, "tau": self.tau, "drift_total": self.total,
                "drift_along": self.along, "drift_transverse": self.max_transverse,
                "threshold": self.threshold, "pass": self.passed}

    def to_dict(self, series=False):
        out = {k: v for k, v in asdict(self).items() if k != "series"}
        for k, v in out.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
            elif isinstance(v, (np.floating, np.bool_)):
                out[k] = v.item()
        if series:
            out["series"] = {k: np.asarray(v).tolist() for k, v in self.series.items()}
        return out


@dataclass
class SweepResult:
    reports: list
    slope: float
    intercept: float
    residual: float
    transverse_slope: float | None
    transverse_intercept: float | None
    C_values: list

    @property
    def eps(self):
        return [r.eps for r in self.reports]

    @property
    def all_passed(self):
        return all(r.passed for r in self.reports)

    @property
    def C_spread(self):
        cs = [c for c in self.C_values if np.isfinite(c) and c > 0]
        return max(cs) / min(cs) if cs else float("nan")


@dataclass(frozen=True)
class ResonantProblem:
    """A system together with everything derived from its resonance."""

    system: NearIntegrableSystem
    resonance: ResonanceData
    adapted: NearIntegrableSystem
    averaged: AveragedPerturbation | None
    profile: SmallDivisorProfile

    @property
    def d(self):
        return self.resonance.d

    @classmethod
    def build(cls, system, resonance, kappa=1.0, q_max=200, require_a2=True):
        adapted = adapted_system(system, resonance)
        try:
            averaged = average(adapted.f, resonance.d)
        except AssumptionA2Error:
            if require_a2:
                raise
            averaged = None
        profile = SmallDivisorProfile.build(resonance.omega_tilde, q_max, kappa)
        return cls(system, resonance, adapted, averaged, profile)


def _mu_or_nan(profile, eps):
    try:
        return profile.mu(np.sqrt(eps))
    except (QmaxExceededError, ValueError) as exc:
        logger.warning("mu(sqrt(eps)) unavailable at eps=%g: %s", eps, exc)
        return float("nan")


def _run(centered: NearIntegrableSystem, theta0, d, tau, threshold, mu, mu0, A, h_step, samples_out):
    eps = centered.epsilon
    n = centered.n
    dt_out = tau / max(1, samples_out)
    traj = integrate(centered, theta0, np.zeros(n), tau, h_step=h_step, dt_out=dt_out)
    dI = traj.I[-1] - traj.I[0]
    exc = traj.max_action_excursion
    total = float(np.abs(dI).max())
    along = float(np.abs(dI[:d]).max()) if d else 0.0
    transverse = float(np.abs(dI[d:]).max())
    max_transverse = float(exc[d:].max())
    bound_scale = np.sqrt(eps) * mu
    mu_exceeded = bool(np.isfinite(mu) and mu > mu0)
    if mu_exceeded:
        logger.warning("mu(sqrt(eps)) = %.3g exceeds mu0 = %.3g at eps=%g; proceeding", mu, mu0, eps)
    rel = traj.I - traj.I[0]
    series = {"t": traj.t,
              "along": np.abs(rel[:, :d]).max(axis=1) if d else np.zeros(len(traj.t)),
              "transverse": np.abs(rel[:, d:]).max(axis=1)}
    return DriftReport(
        eps=eps, tau=float(tau), drift_vector=dI, drift_vector_user=dI @ np.asarray(A, dtype=float),
        total=total, along=along, transverse=transverse, threshold=float(threshold),
        passed=bool(total >= threshold), max_transverse=max_transverse, max_total=float(exc.max()),
        mu=float(mu), mu_exceeded=mu_exceeded,
        fitted_C=float(max_transverse / bound_scale) if np.isfinite(mu) else float("nan"),
        energy_drift=traj.relative_energy_drift, step_size=traj.step_size, steps=traj.steps, series=series)


def _transverse_phases(config, n_minus_d):
    if config.phase_sweep and config.phase_sweep > 1:
        return [np.full(n_minus_d, j / config.phase_sweep) for j in range(config.phase_sweep)]
    if config.theta_transverse is None:
        return [np.zeros(n_minus_d)]
    return [np.asarray(config.theta_transverse, dtype=float)]


def _average_reports(reports):
    if len(reports) == 1:
        return reports[0]
    base = reports[0]
    mean = lambda attr: float(np.mean([getattr(r, attr) for r in reports]))
    return replace(
        base, drift_vector=np.mean([r.drift_vector for r in reports], axis=0),
        drift_vector_user=np.mean([r.drift_vector_user for r in reports], axis=0),
        total=mean("total"), along=mean("along"), transverse=mean("transverse"),
        passed=all(r.passed for r in reports), max_transverse=mean("max_transverse"),
        max_total=mean("max_total"), fitted_C=mean("fitted_C"),
        energy_drift=max(r.energy_drift for r in reports))


def micro_drift_run(problem: ResonantProblem, config: DriftConfig) -> DriftReport:
    """Integrate the full system from ``I = I*``, resonant angles ``theta*``, up to ``tau``."""
    av = problem.averaged
    if av is None or av.lam <= 0:
        raise AssumptionA2Error("lambda = 0: the averaged perturbation is constant at I*")
    eps = config.eps
    d, n = problem.d, problem.system.n
    centered = problem.adapted.with_epsilon(eps)
    tau = av.tau(eps)
    h_step = config.h_step or default_step(eps, av.lam)
    profile = problem.profile if config.kappa == problem.profile.kappa else replace(problem.profile,
                                                                                   kappa=config.kappa)
    mu = _mu_or_nan(profile, eps)
    reports = []
    for phase in _transverse_phases(config, n - d):
        theta0 = np.concatenate([av.theta_star, phase])
        reports.append(_run(centered, theta0, d, tau, av.c * np.sqrt(eps), mu, config.mu0,
                            problem.resonance.A, h_step, config.samples_out))
    return _average_reports(reports)


def _sweep_worker(args):
    problem, config = args
    return micro_drift_run(problem, config)


def fit_sweep(reports, transverse=True, attr="total") -> SweepResult:
    reports = sorted(reports, key=lambda r: r.eps)
    eps = [r.eps for r in reports]
    slope, intercept, resid = fit_loglog(eps, [getattr(r, attr) for r in reports])
    ts = ti = None
    if transverse and all(r.max_transverse > 0 for r in reports):
        ts, ti, _ = fit_loglog(eps, [r.max_transverse for r in reports])
    return SweepResult(reports, slope, intercept, resid, ts, ti, [r.fitted_C for r in reports])


def epsilon_sweep(problem: ResonantProblem, eps_list, config: DriftConfig | None = None,
                  workers: int = 1) -> SweepResult:
    """Run :func:`micro_drift_run` for every ``eps`` and fit ``log(drift)`` against ``log(eps)``."""
    eps_list = sorted(float(e) for e in eps_list)
    if len(eps_list) < 2:
        raise ValueError("a sweep needs at least two values of eps")
    if np.log10(eps_list[-1] / eps_list[0]) < 3 - 1e-9:
        logger.warning("eps list spans fewer than 3 decades; exponent fit is poorly conditioned")
    base = config or DriftConfig(eps=eps_list[0])
    jobs = [(problem, replace(base, eps=e)) for e in eps_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_worker, jobs))
    else:
        reports = [_sweep_worker(j) for j in jobs]
    return fit_sweep(reports)


# -- negative controls --------------------------------------------------------

def negative_control_A1(system: NearIntegrableSystem, i_star, config: DriftConfig,
                        reference: AveragedPerturbation, q_max: int = 50, h_step: float | None = None) -> DriftReport:
    """Same protocol with a non-resonant frequency at ``i_star``.

    ``tau`` and the threshold ``c sqrt(eps)`` come from the resonant
    ``reference``.  The resonant module is trivial, so all drift counts as
    transverse.  Non-resonance is certified up to ``q_max``.
    """
    omega = system.h.gradient(np.asarray(i_star, dtype=float))
    min_divisor_table(omega, q_max)  # raises on hidden resonance
    eps = config.eps
    n = system.n
    centered = shift_actions(system, i_star).with_epsilon(eps)
    profile = SmallDivisorProfile.build(omega, q_max, config.kappa)
    mu = _mu_or_nan(profile, eps)
    theta0 = np.zeros(n) if config.theta_transverse is None else np.asarray(config.theta_transverse, dtype=float)
    return _run(centered, theta0, 0, reference.tau(eps), reference.c * np.sqrt(eps), mu, config.mu0,
                np.eye(n), h_step or default_step(eps, reference.lam), config.samples_out)


def negative_control_A2(problem: ResonantProblem, config: DriftConfig, reference: AveragedPerturbation,
                        theta_resonant=None, h_step: float | None = None) -> DriftReport:
    """Same protocol at a resonance whose averaged perturbation is constant at ``I*``."""
    if problem.averaged is not None and not problem.averaged.f_star.is_constant:
        raise ValueError("assumption (A.2) holds for this problem; not a valid control")
    eps = config.eps
    d, n = problem.d, problem.system.n
    centered = problem.adapted.with_epsilon(eps)
    mu = _mu_or_nan(problem.profile, eps)
    res = np.zeros(d) if theta_resonant is None else np.asarray(theta_resonant, dtype=float)
    phase = _transverse_phases(config, n - d)[0]
    return _run(centered, np.concatenate([res, phase]), d, reference.tau(eps), reference.c * np.sqrt(eps), mu,
                config.mu0, problem.resonance.A, h_step or default_step(eps, reference.lam), config.samples_out)


def control_sweep(run, eps_list) -> SweepResult:
    """Fit a negative control; the exponent uses the sup of the drift over ``[0, tau]``."""
    reports = [run(float(e)) for e in sorted(eps_list)]
    return fit_sweep(reports, transverse=True, attr="max_total")


def protocol_consistency(problem: ResonantProblem, config: DriftConfig, Q: int | None = None) -> dict:
    """Compare the direct run with the normal-form orbit pulled back through ``Phi``.

    The orbit of ``H`` starting at ``Phi(z0)`` is mapped back by ``Phi^{-1}``
    at ``tau``; its action drift should match the direct run from ``z0`` to
    within ``3 C sqrt(eps) mu``.
    """
    av = problem.averaged
    eps = config.eps
    centered = problem.adapted.with_epsilon(eps)
    n, d = centered.n, problem.d
    gen = build_generator(centered, d, Q or max(1, centered.f.max_order))
    direct = micro_drift_run(problem, config)
    theta0 = np.concatenate([av.theta_star, _transverse_phases(config, n - d)[0]])
    w_theta, w_I = apply_transform(gen, eps, theta0, np.zeros(n), check_domain=False)
    tau = av.tau(eps)
    traj = integrate(centered, w_theta, w_I, tau, h_step=config.h_step or default_step(eps, av.lam), dt_out=tau)
    _, z_I = inverse_transform(gen, eps, traj.theta[-1], traj.I[-1])
    pulled = z_I
    diff = float(np.abs(pulled - direct.drift_vector).max())
    bound = 3.0 * direct.fitted_C * np.sqrt(eps) * direct.mu
    return {"eps": eps, "direct_drift": direct.drift_vector, "pulled_back_drift": pulled,
            "difference": diff, "bound": float(bound), "consistent": bool(diff <= bound)}
