"""Special functions underlying the solvers, checked against classical
identities.

The one-parameter Mittag-Leffler function interpolates between the
exponential (order 1) and heavier-tailed relaxation; at order 1/2 it has
the closed form exp(x^2) erfc(-x), which makes a handy accuracy probe.
The Wright density is the law of the random amplitude behind grey
Brownian motion, and Appell's F3 builds the most general homogeneous
kernel family in the package.
"""

import math

import numpy as np
from scipy.special import erfc, hyp2f1

from subfrac import MLParams, appell_f3, mittag_leffler, mwright_density, prabhakar

print("Mittag-Leffler vs closed forms")
print(f"{'x':>6} {'E_1(x)':>14} {'exp(x)':>14} {'E_1/2(x)':>14} {'erfc form':>14}")
for x in (-8.0, -2.0, -0.5, 0.0, 1.0):
    e1 = mittag_leffler(1.0, x)
    eh = mittag_leffler(0.5, x)
    print(f"{x:6.1f} {e1:14.10f} {math.exp(x):14.10f} {eh:14.10f} "
          f"{math.exp(x * x) * erfc(-x):14.10f}")

print("\nthree-parameter reduction: E^1_{q1,1} equals the one-parameter function")
for q1 in (0.3, 0.6, 0.9):
    x = -2.5
    a = prabhakar(MLParams(q1, 1.0, 1.0), x)
    b = mittag_leffler(q1, x)
    print(f"  q1={q1}: prabhakar {a:.12f}  one-parameter {b:.12f}  diff {abs(a - b):.1e}")

print("\nWright density: nonnegative, mass one, Gaussian at order 1/2")
for beta in (0.3, 0.5, 0.7):
    zs = np.linspace(0.0, 12.0, 481)
    vals = np.array([mwright_density(beta, z) for z in zs])
    mass = np.trapezoid(vals, zs)
    print(f"  beta={beta}: min {vals.min():.2e}, integral on [0,12] = {mass:.6f}")
z = 1.0
print(f"  M_(1/2)(1) = {mwright_density(0.5, 1.0):.12f} vs "
      f"exp(-1/4)/sqrt(pi) = {math.exp(-0.25) / math.sqrt(math.pi):.12f}")

print("\nAppell F3 collapses to the Gauss function when one argument vanishes")
args = (0.5, 0.7, 1.1, 0.9, 1.5)
for x in (0.2, 0.6):
    f3 = appell_f3(*args, x, 0.0)
    g = hyp2f1(args[0], args[2], args[4], x)
    print(f"  x={x}: F3 {f3:.12f}  2F1 {g:.12f}  diff {abs(f3 - g):.1e}")
