"""
Implicit midpoint: energy and convergence
=========================================

The drift measurements need an integrator that does not manufacture action
drift of its own.  The implicit midpoint rule is symplectic and symmetric,
so energy errors stay bounded and the method is second order.
"""

import numpy as np

from microdrift import catalog
from microdrift.integrators import integrate, reference_integrate

system = catalog.pendulum(1e-2)

# Energy over many slow periods stays at round-off level
traj = integrate(system, [0.3, 0.0], [0.0, 1.0], 2000.0, h_step=0.01)
print(f"steps: {traj.steps}, relative energy drift: {traj.relative_energy_drift:.2e}")

# Halving the step divides the error by four
z0 = ([0.1, 0.0], [0.05, 1.0])
strong = catalog.pendulum(0.1)
ref = reference_integrate(strong, *z0, 20.0, tol=1e-13)
prev = None
for h in (0.2, 0.1, 0.05, 0.025):
    end = integrate(strong, *z0, 20.0, h_step=h, dt_out=20.0)
    err = np.abs(end.I[-1] - ref.I[-1]).max()
    print(f"h={h:<6} error={err:.3e}" + (f"  ratio={prev / err:.3f}" if prev else ""))
    prev = err
