"""
Resonant averaging and the point of steepest slope
==================================================

Averaging over the fast angles keeps only the modes in the resonant module.
On the resonant torus the average has a point ``theta*`` where its gradient
is largest; that gradient ``lambda`` drives the drift.
"""

import numpy as np

from microdrift import catalog
from microdrift.averaging import average, resonant_average, time_average_oracle
from microdrift.config import resonance_from_dict
from microdrift.lattice import adapted_system

system = catalog.two_mode()
resonance = resonance_from_dict(catalog.PENDULUM_RESONANCE, system)
adapted = adapted_system(system, resonance)

# The non-resonant mode cos(2 pi (theta_1 + theta_2)) drops out
f_omega = resonant_average(adapted.f, resonance.d)
print("modes kept:", sorted(f_omega.mode_table))

# A long time average along the unperturbed flow agrees with the mode filter
theta, I = np.array([0.1, 0.4]), np.zeros(2)
omega = adapted.h.gradient(I)
print("time average :", time_average_oracle(adapted.f, omega, theta, I, 1e4, nodes_per_unit=8))
print("mode filter  :", f_omega(theta, I))

# theta*, lambda, the Hessian bound L and the derived constants
av = average(adapted.f, resonance.d)
print(f"theta* = {av.theta_star}, lambda = {av.lam:.6f} (expect {(2 * np.pi) ** -2:.6f})")
print(f"L = {av.L:.6f}, delta = {av.delta:.5f}, c = {av.c:.3e}")
for eps in (1e-2, 1e-4, 1e-6):
    print(f"eps={eps:.0e}: tau = {av.tau(eps):8.2f}, c sqrt(eps) = {av.c * np.sqrt(eps):.3e}")
