"""Independent numerical oracles used by the test suite.

Everything here is deliberately implemented through a *different* route than
the package itself: defining integrals instead of library special functions,
brute-force momentum quadrature instead of closed-form moment identities.
The package must agree with these to stated tolerances; the oracles were
written and frozen before the corresponding package modules.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad


# ----------------------------------------------------------------------
# Modified Bessel function of the second kind, from its integral
# representation  K_a(z) = int_0^inf exp(-z cosh t) cosh(a t) dt.
# ----------------------------------------------------------------------

def bessel_k_integral_scaled(alpha, z):
    """e^z K_alpha(z) by adaptive quadrature of the defining integral."""

    def f(t):
        # exp(-z(cosh t - 1)) * cosh(alpha t), assembled in log space so the
        # product stays defined where the factors individually under/overflow
        at = abs(alpha * t)
        log_cosh = at + np.log1p(np.exp(-2.0 * at)) - np.log(2.0)
        with np.errstate(over="ignore"):  # exp(-huge) -> 0 is fine
            return np.exp(-z * (np.cosh(t) - 1.0) + log_cosh)

    # Split at the scale where the integrand has turned over; helps QUADPACK
    # at both very small and very large z.
    t_mid = max(1.0, 1.0 / np.sqrt(z))
    v1, e1 = quad(f, 0.0, t_mid, limit=200, epsabs=0.0, epsrel=1e-13)
    v2, e2 = quad(f, t_mid, np.inf, limit=200, epsabs=1e-300, epsrel=1e-13)
    return v1 + v2


# ----------------------------------------------------------------------
# Spherical tensor-product quadrature for momentum-space integrals.
#
# Grid: Gauss-Legendre in radius r on [0, r_max], Gauss-Legendre in
# mu = cos(theta) on [-1, 1] (theta measured from the 1-axis, so the
# bulk-velocity direction for u = (u1, 0, 0) is the polar axis), uniform
# trapezoid in the azimuth phi (exact for trigonometric polynomials of
# degree < n_phi).
# ----------------------------------------------------------------------

def spherical_grid(r_max, n_r=480, n_mu=128, n_phi=32):
    """Nodes (3, N) and weights (N,) for integration over momentum space."""
    xr, wr = leggauss(n_r)
    r = 0.5 * r_max * (xr + 1.0)
    wr = 0.5 * r_max * wr
    mu, wmu = leggauss(n_mu)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    wphi = np.full(n_phi, 2.0 * np.pi / n_phi)

    R, MU, PHI = np.meshgrid(r, mu, phi, indexing="ij")
    W = (
        wr[:, None, None]
        * wmu[None, :, None]
        * wphi[None, None, :]
        * R**2
    )
    s = np.sqrt(1.0 - MU**2)
    p = np.stack(
        [R * MU, R * s * np.cos(PHI), R * s * np.sin(PHI)], axis=0
    )
    return p.reshape(3, -1), W.ravel()


def juttner_pointwise(p, rho, u1, T, c):
    """Juttner density at momentum nodes p (3, N), bulk velocity (u1,0,0).

    Computed with mpmath-free plain numpy but in log form so that large
    z = c^2/T does not overflow; the Bessel factor uses the *integral*
    oracle above, keeping this fully independent of scipy.special.
    """
    z = c * c / T
    u0 = np.sqrt(c * c + u1 * u1)
    p0 = np.sqrt(c * c + np.sum(p * p, axis=0))
    # log of the normalization rho * z / (4 pi c^3 K_2(z))
    log_k2 = np.log(bessel_k_integral_scaled(2, z)) - z
    log_norm = np.log(rho * z) - np.log(4.0 * np.pi * c**3) - log_k2
    log_j = log_norm - z * (p0 * u0 - p[0] * u1) / (c * c)
    return np.exp(log_j)


def juttner_r_max(u1, T, c, log_tail=80.0):
    """Radius beyond which the equilibrium tail is below e^{-log_tail}."""
    z = c * c / T
    u0 = np.sqrt(c * c + u1 * u1)
    rate = z * (u0 - abs(u1)) / (c * c)  # slowest angular decay direction
    return 10.0 * c + log_tail / rate


def moment_quad(func, rho, u1, T, c, log_tail=80.0, n_r=480, n_mu=128,
                n_phi=32):
    """Brute-force integral of func(p, p0) * J(p) over momentum space.

    ``func`` receives the momentum nodes p (3, N) and the energy
    coordinate p0 (N,) and must return the integrand weight (N,).
    """
    r_max = juttner_r_max(u1, T, c, log_tail)
    p, w = spherical_grid(r_max, n_r, n_mu, n_phi)
    p0 = np.sqrt(c * c + np.sum(p * p, axis=0))
    j = juttner_pointwise(p, rho, u1, T, c)
    return float(np.sum(w * func(p, p0) * j))


# Integrand evaluators for the 13-row default moment table, keyed by the
# concrete labels produced by the package ("p0" is the energy coordinate).
MOMENT_INTEGRANDS = {
    "1/p0": lambda p, p0: 1.0 / p0,
    "p1/p0": lambda p, p0: p[0] / p0,
    "p0": lambda p, p0: p0,
    "p1^2/p0": lambda p, p0: p[0] ** 2 / p0,
    "p1": lambda p, p0: p[0],
    "p0*p1/p0": lambda p, p0: p[0],
    "p0^2": lambda p, p0: p0**2,
    "p1^3/p0": lambda p, p0: p[0] ** 3 / p0,
    "p0*p1": lambda p, p0: p0 * p[0],
    "p1^2": lambda p, p0: p[0] ** 2,
    "p2^2*p1/p0": lambda p, p0: p[1] ** 2 * p[0] / p0,
    "p1*p2": lambda p, p0: p[0] * p[1],
    "p1*p2*p3/p0": lambda p, p0: p[0] * p[1] * p[2] / p0,
}


def nu_rest_frame(sigma0, T, c, p_norm=0.0):
    """Collision frequency for a rest-frame equilibrium, by 1D/2D quadrature.

    Uses the closed angular total of the constant kernel (4 pi sigma0) and
    reduces the partner integral to radius (p_norm = 0) or radius x cosine
    (p_norm > 0, p taken along the first axis by isotropy).  Entirely
    independent of the package: plain scipy quadrature plus the
    integral-representation Bessel normalization.
    """
    import scipy.integrate as si

    z = c * c / T
    r_max = juttner_r_max(0.0, T, c)

    def j_scalar(r):
        pts = np.zeros((3, np.size(r)))
        pts[0] = r
        return juttner_pointwise(pts, 1.0, 0.0, T, c)

    if p_norm == 0.0:
        def integrand(r):
            q0 = np.sqrt(c * c + r * r)
            gsq = max(0.5 * (c * q0 - c * c), 0.0)
            g = np.sqrt(gsq)
            val = 4.0 * np.pi * sigma0 * g * np.sqrt(gsq + c * c) / q0
            return 4.0 * np.pi * r * r * val * float(j_scalar(r)[0])

        val, _ = si.quad(integrand, 0.0, r_max, epsabs=0.0, epsrel=1e-11,
                         limit=400)
        return float(val)

    p0 = np.sqrt(c * c + p_norm * p_norm)

    def integrand(mu, r):
        q0 = np.sqrt(c * c + r * r)
        lprod = p0 * q0 - p_norm * r * mu
        gsq = max(0.5 * (lprod - c * c), 0.0)
        g = np.sqrt(gsq)
        v = c * g * np.sqrt(gsq + c * c) / (p0 * q0)
        return (2.0 * np.pi * r * r * 4.0 * np.pi * sigma0 * v
                * float(j_scalar(r)[0]))

    val, _ = si.dblquad(integrand, 0.0, r_max, -1.0, 1.0,
                        epsabs=0.0, epsrel=1e-10)
    return float(val)


def nu_comoving_axis(sigma0, u1, T, c, p1):
    """Collision frequency at p = (p1, 0, 0) for equilibrium drift (u1,0,0).

    2D reduction (radius x cosine against the first axis); constant kernel.
    """
    import scipy.integrate as si

    r_max = juttner_r_max(u1, T, c)
    p0 = np.sqrt(c * c + p1 * p1)

    def integrand(mu, r):
        q0 = np.sqrt(c * c + r * r)
        lprod = p0 * q0 - p1 * r * mu
        gsq = np.maximum(0.5 * (lprod - c * c), 0.0)
        g = np.sqrt(gsq)
        v = c * g * np.sqrt(gsq + c * c) / (p0 * q0)
        pts = np.zeros((3, 1))
        pts[0, 0] = r * mu
        pts[1, 0] = r * np.sqrt(max(1.0 - mu * mu, 0.0))
        j = juttner_pointwise(pts, 1.0, u1, T, c)[0]
        return 2.0 * np.pi * r * r * 4.0 * np.pi * sigma0 * v * j

    val, _ = si.dblquad(integrand, 0.0, r_max, -1.0, 1.0,
                        epsabs=0.0, epsrel=1e-9)
    return float(val)


def transport_profile(x_nodes, mu, v, source, forward=True, tail=None):
    """Reference solution of v h' + mu v h = source along one mode.

    Forward: h(x) = int_0^x exp(-mu (x-t)) source(t)/v dt with h(0) = 0.
    Backward (v is the speed magnitude): anti-causal from the last node,
    h(x) = tail exp(-mu (x_N - x)) + int_x^{x_N} exp(-mu (t-x)) source(t)/v dt,
    where ``tail`` is the closure value at the last node.  Adaptive
    quadrature per node; ``source`` is a callable of x.
    """
    import scipy.integrate as si

    x_nodes = np.asarray(x_nodes, dtype=float)
    out = np.empty_like(x_nodes)
    if forward:
        for k, xx in enumerate(x_nodes):
            val, _ = si.quad(
                lambda t: np.exp(-mu * (xx - t)) * source(t) / v,
                0.0, xx, epsabs=1e-14, epsrel=1e-12, limit=200)
            out[k] = val
        return out
    x_end = x_nodes[-1]
    for k, xx in enumerate(x_nodes):
        val, _ = si.quad(
            lambda t: np.exp(-mu * (t - xx)) * source(t) / v,
            xx, x_end, epsabs=1e-14, epsrel=1e-12, limit=200)
        out[k] = val + tail * np.exp(-mu * (x_end - xx))
    return out
