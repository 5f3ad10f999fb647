"""
Small divisors and the scale function mu
========================================

How close can ``k . omega_tilde`` come to zero for ``|k| <= Q``?  The answer
sets the truncation order of the normal form and the transverse drift scale.
"""

import numpy as np

from microdrift import catalog
from microdrift.lattice import SmallDivisorProfile

# Periodic transverse frequency: every non-zero divisor is an integer, so Psi = 1
periodic = SmallDivisorProfile.build([1.0], 50)
print("periodic Psi(1..5):", periodic.psi[:5])

# Golden ratio: the best approximations are Fibonacci ratios, so Psi grows like Q
golden = SmallDivisorProfile.build([1.0, catalog.GOLDEN], 200)
for Q in (1, 2, 3, 5, 8, 13, 21, 34):
    print(f"Q={Q:3d}  Psi={golden.psi_at(Q):9.4f}  Q*Psi={Q * golden.psi_at(Q):10.3f}")

# Delta(x) balances truncation against divisor size; mu = 1 / Delta(kappa / sqrt(eps))
for eps in (1e-2, 1e-4, 1e-6):
    print(f"eps={eps:.0e}  mu periodic={periodic.mu(np.sqrt(eps)):.3e}  mu golden={golden.mu(np.sqrt(eps)):.3e}")

# Periodic: mu(sqrt(eps)) = sqrt(eps).  Golden: Delta(x) ~ sqrt(x), so mu ~ eps^(1/4)
xs = np.geomspace(10, 1e4, 30)
slope = np.polyfit(np.log(xs), np.log([golden.delta(x) for x in xs]), 1)[0]
print(f"golden Delta growth exponent: {slope:.3f}")
