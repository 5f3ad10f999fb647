"""Implicit midpoint integration of Hamiltonian flows in action-angle form.

The midpoint rule ``z1 = z0 + h F((z0 + z1) / 2)`` is symplectic for any
Hamiltonian and time-reversible.  The implicit equation is solved by
fixed-point iteration on the increment ``k = z1 - z0``.  Any object with
``vector_field(theta, I) -> (theta_dot, I_dot)`` and ``energy(theta, I)`` can
be integrated; states may carry leading batch dimensions.

:func:`reference_integrate` wraps SciPy's adaptive DOP853 and serves only as
an independent comparator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

logger = logging.getLogger(__name__)


class ConvergenceError(ArithmeticError):
    """Fixed-point iteration of the midpoint equations did not converge."""


@dataclass(frozen=True)
class PhaseState:
    theta: np.ndarray
    I: np.ndarray
    t: float = 0.0


@dataclass
class Trajectory:
    """Time-ordered samples of a single (possibly batched) orbit."""

    t: np.ndarray
    theta: np.ndarray
    I: np.ndarray
    energy: np.ndarray
    step_size: float
    method: str
    winding: np.ndarray = None
    #: sup over every step (not only the stored samples) of |I(t) - I(0)|, per component
    max_action_excursion: np.ndarray = None
    steps: int = 0
    halvings: int = 0
    iterations: dict = field(default_factory=dict)
    dense: object = None

    @property
    def final(self) -> PhaseState:
        return PhaseState(self.theta[-1], self.I[-1], float(self.t[-1]))

    @property
    def relative_energy_drift(self) -> float:
        e0 = self.energy[0]
        scale = np.maximum(np.abs(e0), 1e-300)
        return float(np.max(np.abs(self.energy - e0) / scale))


def _increment(field_, theta, I, h, guess, tol, max_iter):
    kt, kI = guess
    for it in range(1, max_iter + 1):
        vt, vI = field_.vector_field(theta + 0.5 * kt, I + 0.5 * kI)
        nt, nI = h * vt, h * vI
        dt_err = np.abs(nt - kt).max()
        dI_err = np.abs(nI - kI).max()
        kt, kI = nt, nI
        if dt_err <= tol * np.abs(kt).max() and dI_err <= tol * np.abs(kI).max():
            return kt, kI, it
        if not (np.isfinite(dt_err) and np.isfinite(dI_err)):
            break
    raise ConvergenceError(f"midpoint iteration did not converge in {max_iter} iterations (h={h:g})")


def _advance(field_, theta, I, h, guess, tol, max_iter, max_halvings, depth=0):
    """One midpoint step of size ``h``; on failure, two half steps (recursively)."""
    try:
        kt, kI, it = _increment(field_, theta, I, h, guess, tol, max_iter)
        return theta + kt, I + kI, (kt, kI), it, depth
    except ConvergenceError:
        if depth >= max_halvings:
            raise
        half = (0.5 * guess[0], 0.5 * guess[1])
        th, Ih, g, it1, d1 = _advance(field_, theta, I, 0.5 * h, half, tol, max_iter, max_halvings, depth + 1)
        th, Ih, g, it2, d2 = _advance(field_, th, Ih, 0.5 * h, g, tol, max_iter, max_halvings, depth + 1)
        return th, Ih, (2 * g[0], 2 * g[1]), it1 + it2, max(d1, d2)


def midpoint_step(system, state: PhaseState, h_step: float, tol: float = 1e-13, max_iter: int = 50,
                  max_halvings: int = 8) -> PhaseState:
    """Advance ``state`` by one implicit midpoint step (angles reduced mod 1)."""
    if h_step == 0:
        return state
    theta = np.asarray(state.theta, dtype=float)
    I = np.asarray(state.I, dtype=float)
    vt, vI = system.vector_field(theta, I)
    th, I1, _, _, _ = _advance(system, theta, I, h_step, (h_step * vt, h_step * vI), tol, max_iter, max_halvings)
    return PhaseState(np.mod(th, 1.0), I1, state.t + h_step)


def default_step(eps: float, lam: float | None = None, min_steps_per_period: int = 1000) -> float:
    """Step resolving both the unit-scale fast rotation and the slow pendulum period ``1/sqrt(eps*lam)``."""
    h = min(1e-2, 1e-2 / np.sqrt(eps)) / (2 * np.pi) if eps > 0 else 1e-2 / (2 * np.pi)
    if eps > 0 and lam:
        h = min(h, 1.0 / np.sqrt(eps * lam) / min_steps_per_period)
    return float(h)


def integrate(system, theta0, I0, T: float, h_step: float | None = None, dt_out: float | None = None,
              tol: float = 1e-13, max_iter: int = 50, max_halvings: int = 8, reduce: bool = True) -> Trajectory:
    """Integrate Hamilton's equations with fixed-step implicit midpoint.

    Parameters
    ----------
    system
        Object exposing ``vector_field`` and ``energy``.
    theta0, I0 : array_like
        Initial angles (turns) and actions; leading batch dimensions allowed.
    T : float
        Final time (may be negative for backward integration).
    h_step : float, optional
        Nominal step; adjusted down so that an integer number of steps lands on ``T``.
    dt_out : float, optional
        Output stride, rounded to a whole number of steps; defaults to every
        step.  The final time ``T`` is always recorded.

    Returns
    -------
    Trajectory
    """
    if T == 0:
        raise ValueError("T must be nonzero")
    if h_step is None:
        h_step = default_step(getattr(system, "epsilon", 0.0))
    nsteps = max(1, int(np.ceil(abs(T) / h_step - 1e-9)))
    h = T / nsteps
    stride = 1 if dt_out is None else max(1, int(round(abs(dt_out) / abs(h))))

    theta = np.array(theta0, dtype=float)
    I = np.array(I0, dtype=float)
    theta, I = np.broadcast_arrays(theta, I)
    theta, I = theta.copy(), I.copy()
    winding = np.zeros_like(theta)
    I_start = I.copy()
    excursion = np.zeros_like(I)

    ts, thetas, Is, energies = [0.0], [theta.copy()], [I.copy()], [system.energy(theta, I)]
    vt, vI = system.vector_field(theta, I)
    guess = (h * vt, h * vI)
    total_it, worst_depth = 0, 0
    for step in range(1, nsteps + 1):
        theta_new, I, guess, it, depth = _advance(system, theta, I, h, guess, tol, max_iter, max_halvings)
        total_it += it
        worst_depth = max(worst_depth, depth)
        if reduce:
            w = np.floor(theta_new)
            winding += w
            theta = theta_new - w
        else:
            theta = theta_new
        np.maximum(excursion, np.abs(I - I_start), out=excursion)
        if step % stride == 0 or step == nsteps:
            ts.append(step * h)
            thetas.append(theta.copy())
            Is.append(I.copy())
            energies.append(system.energy(theta, I))
    if worst_depth:
        logger.info("midpoint step halved %d times", worst_depth)
    return Trajectory(np.array(ts), np.array(thetas), np.array(Is), np.array(energies), float(h), "midpoint",
                      winding, excursion, nsteps, worst_depth, {"total": total_it, "mean": total_it / nsteps})


def reference_integrate(system, theta0, I0, T: float, tol: float = 1e-12, t_eval=None) -> Trajectory:
    """Adaptive DOP853 reference solution (single orbit)."""
    theta0 = np.asarray(theta0, dtype=float)
    I0 = np.asarray(I0, dtype=float)
    n = theta0.shape[-1]

    def rhs(_, y):
        vt, vI = system.vector_field(y[:n], y[n:])
        return np.concatenate([vt, vI])

    sol = solve_ivp(rhs, (0.0, T), np.concatenate([theta0, I0]), method="DOP853", rtol=tol, atol=tol,
                    t_eval=t_eval, dense_output=True)
    if not sol.success:
        raise ConvergenceError(sol.message)
    th_unwrapped = sol.y[:n].T
    theta = np.mod(th_unwrapped, 1.0)
    I = sol.y[n:].T
    energy = np.array([system.energy(a, b) for a, b in zip(theta, I)])
    traj = Trajectory(sol.t, theta, I, energy, float("nan"), "DOP853", np.floor(th_unwrapped[-1]),
                      np.abs(I - I0).max(axis=0), len(sol.t) - 1)
    traj.dense = sol.sol
    return traj
