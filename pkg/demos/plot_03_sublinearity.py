"""
Sublinear growth of the corrector
=================================

The harmonic cocycle differs from the linear map ``n -> y . n`` by an amount
that is small compared with ``|n|``.  We measure this on growing balls.
"""

# %%
import numpy as np

from corrector_lab import GeneratorModel, TorusShape, generate_environment
from corrector_lab.ergodic import directional_average, max_radius, sublinearity_profile
from corrector_lab.solver import harmonic_cocycle

L = 128
env = generate_environment(TorusShape(2, L), GeneratorModel.iid_uniform(), (1.0, 2.0), 0)
y = np.array([1.0, 0.0])
S, _ = harmonic_cocycle(env, y)

# %%
# ``M(R)`` is the largest ``|S_n - y . n| / R`` over the taxicab ball of radius R.
radii = [1, 2, 4, 8, 16, 32, max_radius(L)]
prof = sublinearity_profile(S, y, radii)
for R, M in prof.rows():
    print(f"R={R:4d}  M(R)={M:.5f}")
print("largest single increment gap:", np.abs(S.increments - y[:, None, None]).max())

# %%
# Averages of increments along a lattice direction converge to the mean.
# After a full period the torus makes the average exact.
for n in [(1, 0), (1, 1), (2, -1)]:
    for k in (4, 32, L):
        avg = directional_average(S, n, k)
        print(f"n={n} k={k:4d} average={avg.value:+.6f} target={np.dot(n, y) / np.abs(n).sum():+.6f}")
