"""Reference values computed independently of the package and then frozen.

Each value carries a short note on how it was obtained.  Nothing here
imports hsphere.
"""

import math

# Jacobi operator of the totally geodesic equator S^2 -> S^3 (unit radii, Dirichlet energy).
# Normal part: -Lap f - |grad u|^2 f = -Lap f - 2 f, eigenvalues l(l+1) - 2, multiplicity 2l+1.
# Tangential part: identity of S^2, eigenvalues l(l+1) - 2 on grad Y_l and *grad Y_l, l >= 1.
def _equator_spectrum(lmax=6):
    ev = []
    for l in range(lmax + 1):
        ev += [l * (l + 1) - 2] * (2 * l + 1)
        if l >= 1:
            ev += [l * (l + 1) - 2] * (2 * (2 * l + 1))
    return ev


EQUATOR_SPECTRUM = _equator_spectrum()
EQUATOR_MORSE_INDEX = sum(1 for v in EQUATOR_SPECTRUM if v < 0)  # 1 (constant normal push)
EQUATOR_NULLITY_RAW = sum(1 for v in EQUATOR_SPECTRUM if v == 0)  # 9
CONFORMAL_GAUGE_DIM = 6  # conformal vector fields of S^2: 3 rotations + 3 dilations
EQUATOR_NULLITY_GAUGED = EQUATOR_NULLITY_RAW - CONFORMAL_GAUGE_DIM  # 3 (rotations into the 4th axis)
EQUATOR_ENERGY = 4 * math.pi  # Dirichlet energy = area of a unit 2-sphere

# Psi_1(r) = r - log(1 + r) at tau = 1
PSI1_AT_1 = 1.0 - math.log(2.0)

# Unit round sphere of R^3 with H0 = 1 (H-surface |H| = 1 <=> radius 1)
CMC_RADIUS = 1.0

# alpha-energy of the identity S^2 -> S^2 at tau = 1: |grad u|^2 = 2, so
# 1/2 (1 + 2)^alpha * 4 pi in the continuum.
def identity_alpha_energy(alpha):
    return 0.5 * 3.0**alpha * 4 * math.pi


# Width/lambda comparison identity for a single frozen map u (lambda1 < lambda2):
# E_a/l1 + W - (E_a/l2 + W) = (l2 - l1)/(l1 l2) E_a
def ratio_difference(e_alpha, l1, l2):
    return (l2 - l1) / (l1 * l2) * e_alpha


ICOSPHERE_COUNTS = {s: (10 * 4**s + 2, 20 * 4**s) for s in range(8)}  # Euler: V - E + F = 2
