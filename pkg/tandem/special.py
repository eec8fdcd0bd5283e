"""
Bessel and Hankel functions used by the Green's-function closed forms and the Mie series.

Thin wrappers over the AMOS/Cephes routines in scipy.special so the solver has one
place that fixes the time convention: exp(+jwt), outgoing waves use H^(2).
"""
import numpy as np
from scipy import special


def j0(x):
    return special.j0(x)


def j1(x):
    return special.j1(x)


def y0(x):
    return special.y0(x)


def y1(x):
    return special.y1(x)


def jn(n, x):
    return special.jv(n, x)


def jn_prime(n, x):
    return special.jvp(n, x)


def h0_2(x):
    return special.hankel2(0, x)


def h1_2(x):
    return special.hankel2(1, x)


def hn_2(n, x):
    return special.hankel2(n, x)


def hn_2_prime(n, x):
    return special.h2vp(n, x)


def green_2d(k0, distance):
    """Free-space 2-D Green's function G = H0^(2)(k0 r) / (4j)."""
    return h0_2(k0 * np.asarray(distance)) / 4j
