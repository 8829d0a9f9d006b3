"""Hydrodynamic projection of the transport velocity and its spectrum.

For a far-field equilibrium with bulk velocity (u1, 0, 0) and temperature T,
the five collision invariants span a subspace of weighted L2; projecting the
slab-direction velocity multiplier ``c p1 / p0`` onto that subspace yields a
symmetric 5x5 matrix whose spectrum separates into an acoustic pair
(bulk -+ sound) and a triple at the bulk transport speed ``c u1 / u0``.
The sign pattern of the eigenvalues -- governed by the Mach number
``u1 / c_sound`` -- sets how many scalar conditions admissible boundary data
must satisfy in the half-space steady problem.

Everything is expressed through three dimensionless Bessel-ratio
coefficients of ``z = c^2 / T`` and four state coefficients that add the
dependence on ``u1 / c``; all are evaluated in scaled form so the cold
regime (large z) does not underflow.
"""

import numpy as np

from .bessel import bessel_k_ratio
from .juttner import Juttner


def dimensionless_coefficients(z):
    """The three positive Bessel-ratio coefficients (a1, a2, a3) of z."""
    z = float(z)
    a1 = bessel_k_ratio(3, 2, z)
    a2 = -a1 * a1 + 6.0 * a1 / z + 1.0
    a3 = -a1**3 + 6.0 * a1 * a1 / z - 6.0 * a1 / z**2 + a1 - 1.0 / z
    return a1, a2, a3


def state_coefficients(u1, T, c=1.0):
    """The four coefficients (A1, A2, A3, A4) of (z, u1/c).

    These normalize the orthonormal invariant basis and appear throughout
    the flux matrix entries.
    """
    z = c * c / T
    a1, a2, a3 = dimensionless_coefficients(z)
    u0 = np.sqrt(c * c + u1 * u1)
    r2 = (u1 / c) ** 2
    A1 = (u0 / c) * (a2 * r2 + a1 / z)
    A2 = a3 * (u0 / c) ** 2 + a2 / z - a1 / z**2
    A3 = ((2.0 * a2 - 6.0 * a1 / z - 1.0) * r2 + a2 - 5.0 * a1 / z - 1.0) / z
    A4 = -a2 * u0 * u0 * u1 / c**3
    return A1, A2, A3, A4


def sound_speed(T, c=1.0):
    """Speed (in the u-parameter sense) at which an acoustic eigenvalue
    crosses zero: sqrt(T (z a2 - a1) / (z a3))."""
    if not (T > 0.0 and c > 0.0):
        raise ValueError("T and c must be positive")
    z = c * c / T
    a1, a2, a3 = dimensionless_coefficients(z)
    return float(np.sqrt(T * (z * a2 - a1) / (z * a3)))


def relativistic_sound_speed(T, c=1.0):
    """Physical sound speed c * cs / sqrt(c^2 + cs^2), always below c."""
    cs = sound_speed(T, c)
    return float(c * cs / np.sqrt(c * c + cs * cs))


def mach_number(u1, T, c=1.0):
    """u1 / sound_speed; negative for incoming far-field flow."""
    return float(u1) / sound_speed(T, c)


def incoming_condition_count(u1, T, c=1.0, tol=1e-12):
    """Number of scalar solvability conditions on boundary data.

    Equals the number of positive flux-matrix eigenvalues: 0, 1, 4 or 5 as
    the Mach number crosses -1, 0, +1.  Raises for degenerate states where
    the Mach number sits within ``tol`` of a transition.
    """
    m = mach_number(u1, T, c)
    if min(abs(m), abs(m - 1.0), abs(m + 1.0)) <= tol:
        raise ValueError(
            "degenerate Mach number %.17g: eigenvalue sign pattern undefined" % m
        )
    if m < -1.0:
        return 0
    if m < 0.0:
        return 1
    if m < 1.0:
        return 4
    return 5


def classify(u1, T, c=1.0, tol=1e-12):
    """Regime summary for a far-field state: speeds, Mach number, counting."""
    m = mach_number(u1, T, c)
    degenerate = min(abs(m), abs(m - 1.0), abs(m + 1.0)) <= tol
    out = {
        "u1": float(u1),
        "T": float(T),
        "c": float(c),
        "z": float(c * c / T),
        "sound_speed": sound_speed(T, c),
        "relativistic_sound_speed": relativistic_sound_speed(T, c),
        "mach": m,
        "degenerate": bool(degenerate),
        "flow": "incoming" if m < 0.0 else ("outgoing" if m > 0.0 else "tangent"),
        "speed_regime": "supersonic" if abs(m) > 1.0 else "subsonic",
    }
    out["n_conditions"] = (
        None if degenerate else incoming_condition_count(u1, T, c, tol)
    )
    return out


def invariant_basis(u1, T, c=1.0):
    """Orthonormal basis of the collision-invariant subspace.

    Returns a callable mapping momenta of shape (3, ...) to the five basis
    functions stacked along a new leading axis, shape (5, ...).  Each is a
    low-degree polynomial in (p0, p1, p2, p3) times the square root of the
    unit-density equilibrium, normalized against the plain L2(dp) inner
    product (continuum normalization; on a finite grid, re-orthonormalize
    in the discrete inner product).
    """
    z = c * c / T
    a1, _, _ = dimensionless_coefficients(z)
    A1, A2, A3, A4 = state_coefficients(u1, T, c)
    u0 = np.sqrt(c * c + u1 * u1)
    eq = Juttner(1.0, u1, T, c)

    n0 = np.sqrt(c / u0)
    n1 = 1.0 / (np.sqrt(A1) * c)
    n23 = np.sqrt(c / (a1 * u0 * T))
    n4 = 1.0 / np.sqrt(A1 * A2 * T)

    def chi(p):
        p = np.asarray(p, dtype=float)
        p0 = np.sqrt(c * c + np.sum(p * p, axis=0))
        root_j = np.exp(0.5 * eq.logpdf(p))
        return np.stack(
            [
                n0 * root_j,
                n1 * (p[0] - a1 * u1) * root_j,
                n23 * p[1] * root_j,
                n23 * p[2] * root_j,
                n4 * (A3 * c + A4 * p[0] + A1 * p0) * root_j,
            ],
            axis=0,
        )

    return chi


def flux_matrix(u1, T, c=1.0):
    """Closed-form 5x5 symmetric matrix of the projected velocity multiplier.

    Entry (i, j) is the L2 pairing of basis function i with
    ``c p1/p0`` times basis function j.  Rows/columns 2 and 3 (transverse
    momenta) decouple with diagonal value ``c u1 / u0``.
    """
    z = c * c / T
    a1, a2, _ = dimensionless_coefficients(z)
    A1, A2, _, _ = state_coefficients(u1, T, c)
    u0 = np.sqrt(c * c + u1 * u1)

    bulk = c * u1 / u0
    b01 = T / np.sqrt(A1 * c * u0)
    b04 = (a1 - z * a2) * u1 * T * T / np.sqrt(A1 * A2 * c**5 * u0 * T)
    b14 = T * T / (c * u0 * np.sqrt(T * A2))
    b44 = bulk + 2.0 * u1 * T * T * (a1 - z * a2) / (c**3 * u0 * A2)

    B = np.diag([bulk, bulk, bulk, bulk, b44])
    B[0, 1] = B[1, 0] = b01
    B[0, 4] = B[4, 0] = b04
    B[1, 4] = B[4, 1] = b14
    return B


def flux_eigenvalues(u1, T, c=1.0):
    """Closed-form spectrum, ascending: [bulk - sound, bulk x3, bulk + sound].

    The acoustic pair is (a3 u0 u1 -+ c^2 M) / (c A2) with
    M = sqrt((a2 - a1/z)(a3 + a2/z - a1/z^2) / z); the triple is c u1/u0.
    """
    z = c * c / T
    a1, a2, a3 = dimensionless_coefficients(z)
    _, A2, _, _ = state_coefficients(u1, T, c)
    u0 = np.sqrt(c * c + u1 * u1)
    M = np.sqrt((a2 - a1 / z) * (a3 + a2 / z - a1 / z**2) / z)
    lo = (a3 * u0 * u1 - c * c * M) / (c * A2)
    hi = (a3 * u0 * u1 + c * c * M) / (c * A2)
    mid = c * u1 / u0
    return np.array([lo, mid, mid, mid, hi])


def acoustic_eigenvalue(u1, T, c=1.0):
    """The slow acoustic eigenvalue (bulk - sound); vanishes at u1 = sound_speed."""
    return float(flux_eigenvalues(u1, T, c)[0])


def sound_speed_from_spectrum(T, c=1.0, bracket_factor=4.0, tol=1e-14):
    """Sound speed recovered by bisecting the slow acoustic eigenvalue in u1.

    Independent route to :func:`sound_speed` used by the verification suite:
    brackets the sign change of the (bulk - sound) eigenvalue on
    (0, bracket_factor * sqrt(T)] and bisects to ``tol`` (relative).
    """
    lo = 0.0
    hi = bracket_factor * np.sqrt(T)
    f_hi = acoustic_eigenvalue(hi, T, c)
    while f_hi <= 0.0:
        hi *= 2.0
        f_hi = acoustic_eigenvalue(hi, T, c)
        if hi > 1e6 * np.sqrt(T):
            raise RuntimeError("failed to bracket the acoustic root")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if acoustic_eigenvalue(mid, T, c) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
