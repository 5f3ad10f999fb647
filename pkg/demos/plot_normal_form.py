"""
One step of normal form
=======================

A Lie transform removes the non-resonant modes to first order.  What is left
is measured on random phase points and compared with its predicted size.
"""

from microdrift import catalog
from microdrift.config import resonance_from_dict
from microdrift.lattice import SmallDivisorProfile, adapted_system
from microdrift.normal_form import build_generator, verify_remainder_scaling

system = adapted_system(catalog.single_mode(), resonance_from_dict(catalog.PENDULUM_RESONANCE,
                                                                   catalog.single_mode()))
gen = build_generator(system, 1, 1)
print("generator modes:", sorted(gen.chi.mode_table))

profile = SmallDivisorProfile.build([1.0], 200)
out = verify_remainder_scaling(system, 1, profile, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6], samples=500)
for rep in out["reports"]:
    print(f"eps={rep.eps:.0e}  |Phi - id|={rep.sup_displacement:.3e}  "
          f"|d_theta R|={rep.sup_dtheta:.3e}  |d_I R|={rep.sup_dI:.3e}")
print("fitted exponents:", {k: round(v, 3) for k, v in out["slopes"].items()})
print("fitted constants:", {k: round(v, 4) for k, v in out["C"].items()})
