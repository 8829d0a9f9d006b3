"""Binary collision kinematics, scattering kernels, and collision operators.

Layers, bottom to top:

* pairwise Lorentz invariants (s, g), the Moller velocity, and the
  center-of-momentum parametrization of post-collision momenta -- all
  vectorized and broadcastable, so a single implementation serves both
  per-pair checks and (n x m) operator assembly;
* :class:`ScatteringKernel` -- the concrete differential cross sections
  (constant, and the hard power-law family), with the admissibility
  constraints on the exponents enforced at construction;
* quadrature-driven actions: collision frequency, the compact part K of the
  linearized operator, the full linearized operator L = -nu + K, the
  bilinear form, and the plain collision integral with its gain/loss split
  (all taking callables, so the caller decides how off-grid values are
  produced);
* :class:`DiscreteCollisionOperator` -- the dense matrix form of L on a
  :class:`~relkin.quadrature.MomentumGrid`, with optional symmetrization in
  the discrete weighted inner product and exact projection around the five
  discrete collision invariants.

Post-collision momenta use the boost form

    p' = (p+q)/2 + g (omega + (p+q) ((p+q).omega) / (sqrt(s)(p0+q0+sqrt(s))))

which is the textbook (gamma-1)/|p+q|^2 expression with the singular factor
rewritten through (p0+q0)^2 - s = |p+q|^2; the |p+q| -> 0 limit is then a
regular point and needs no special casing.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import gammaln

from .lorentz import boost_to_rest, four_momentum
from .quadrature import spherical_grid, unit_sphere_rule

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# Kinematics
# ----------------------------------------------------------------------

def pair_invariants(p, q, c):
    """Total invariant s and relative momentum g for momenta (3, ...).

    ``s = 2 (P.Q + c^2) = 4 g^2 + 4 c^2``; inputs broadcast, so pairwise
    matrices come from p of shape (3, n, 1) against q of shape (3, 1, m).

    g is evaluated from the spacelike difference, -(P-Q).(P-Q) = 4 g^2,
    with the energy gap written as (|p|^2 - |q|^2)/(p0 + q0); unlike the
    direct P.Q - c^2 form this has no cancellation for p close to q, and
    coincident momenta give exactly g = 0.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p0 = np.sqrt(c * c + np.sum(p * p, axis=0))
    q0 = np.sqrt(c * c + np.sum(q * q, axis=0))
    d = p - q
    dsq = np.sum(d * d, axis=0)
    egap = np.sum(d * (p + q), axis=0) / (p0 + q0)
    gsq = 0.25 * np.maximum(dsq - egap * egap, 0.0)
    g = np.sqrt(gsq)
    s = 4.0 * (gsq + c * c)
    return s, g


def moller_velocity(p, q, c):
    """v = (c/2) g sqrt(s) / (p0 q0); bounded by c."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p0 = np.sqrt(c * c + np.sum(p * p, axis=0))
    q0 = np.sqrt(c * c + np.sum(q * q, axis=0))
    s, g = pair_invariants(p, q, c)
    return 0.5 * c * g * np.sqrt(s) / (p0 * q0)


def post_collision_momenta(p, q, omega, c):
    """Outgoing momenta and energies for scattering direction omega.

    All arguments broadcast over trailing axes (leading axis = components).
    Returns (p_out, q_out, p0_out, q0_out).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    omega = np.asarray(omega, dtype=float)
    p0 = np.sqrt(c * c + np.sum(p * p, axis=0))
    q0 = np.sqrt(c * c + np.sum(q * q, axis=0))
    s, g = pair_invariants(p, q, c)
    rs = np.sqrt(s)
    w = p + q
    w_dot_omega = np.sum(w * omega, axis=0)
    # (gamma_tilde - 1)/|w|^2 == 1/(sqrt(s)(p0 + q0 + sqrt(s)))
    shift = g * (omega + w * (w_dot_omega / (rs * (p0 + q0 + rs))))
    p_out = 0.5 * w + shift
    q_out = 0.5 * w - shift
    e_shift = (g / rs) * w_dot_omega
    p0_out = 0.5 * (p0 + q0) + e_shift
    q0_out = 0.5 * (p0 + q0) - e_shift
    return p_out, q_out, p0_out, q0_out


def scattering_cosine(p, q, p_out, q_out, c):
    """cos(theta) = -(P-Q).(P'-Q') / (4 g^2); 1.0 at zero relative momentum."""
    P = four_momentum(p, c)
    Q = four_momentum(q, c)
    Pp = four_momentum(p_out, c)
    Qp = four_momentum(q_out, c)
    d = P - Q
    dp = Pp - Qp
    num = -(d[0] * dp[0] - np.sum(d[1:] * dp[1:], axis=0))
    _, g = pair_invariants(p, q, c)
    gsq = g * g
    return np.where(gsq > 0.0, num / np.where(gsq > 0.0, 4.0 * gsq, 1.0), 1.0)


class CollisionPair:
    """One (or a batch of) binary collision(s), fully resolved.

    Built by :func:`post_collision`; carries the ingoing momenta, the
    scattering direction, the invariants, and the outgoing state, and can
    produce the scattering cosine by two independent routes.
    """

    def __init__(self, p, q, omega, c):
        self.p = np.asarray(p, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        norm = np.sum(self.omega * self.omega, axis=0)
        if not np.allclose(norm, 1.0, rtol=0, atol=1e-12):
            raise ValueError("omega must be a unit vector")
        self.c = float(c)
        self.s, self.g = pair_invariants(self.p, self.q, c)
        (self.p_out, self.q_out,
         self.p0_out, self.q0_out) = post_collision_momenta(
            self.p, self.q, self.omega, c
        )

    @property
    def p_four(self):
        return four_momentum(self.p, self.c)

    @property
    def q_four(self):
        return four_momentum(self.q, self.c)

    @property
    def p_out_four(self):
        return np.concatenate([self.p0_out[None], self.p_out], axis=0)

    @property
    def q_out_four(self):
        return np.concatenate([self.q0_out[None], self.q_out], axis=0)

    @property
    def cos_theta(self):
        """Scattering cosine from the Lorentz products of the differences."""
        return scattering_cosine(self.p, self.q, self.p_out, self.q_out, self.c)

    def cos_theta_boosted(self):
        """Same angle computed in the center-of-momentum frame.

        Boosts P - Q into the rest frame of P + Q; the spatial part pbar
        satisfies |pbar| = 2 g and cos(theta) = pbar.omega / |pbar|.
        """
        P = four_momentum(self.p, self.c)
        Q = four_momentum(self.q, self.c)
        pbar = boost_to_rest(P + Q, P - Q)[1:]
        norm = np.sqrt(np.sum(pbar * pbar, axis=0))
        return np.sum(pbar * self.omega, axis=0) / norm


def post_collision(p, q, omega, c=1.0):
    """Resolve a binary collision; see :class:`CollisionPair`."""
    return CollisionPair(p, q, omega, c)


# ----------------------------------------------------------------------
# Scattering kernels
# ----------------------------------------------------------------------

class ScatteringKernel:
    """Differential cross section sigma(g, theta) = sigma0 (g/c)^a sin^vs(theta).

    Parameters
    ----------
    sigma0 : float
        Overall positive magnitude.
    a : float
        Hard growth exponent, 0 <= a < 2 - 2b.
    b : float
        Soft-part exponent entering the admissibility window and the
        envelope bounds, 0 <= b < 1/2 (the concrete models here carry no
        soft factor; b widens/narrows the allowed (a, varsigma) range
        and the bound envelope only).
    varsigma : float
        Angular exponent; either >= 0, or negative with
        |varsigma| < min(2 - a, 1/2 - b, (2 - 2b - a)/3).
    c1, c2 : float, optional
        Positive constants of the two-sided envelope; default sigma0 for
        both (valid for either model since g/sqrt(s) <= 1/2).

    The derived index ``eta = 1 - (3|varsigma| + a + 2b)/2`` lies in (0, 1]
    and controls the regularizing gain of the compact part of the
    linearized operator.
    """

    def __init__(self, sigma0=1.0, a=0.0, b=0.0, varsigma=0.0, c1=None, c2=None):
        if not (sigma0 > 0.0):
            raise ValueError("sigma0 must be positive")
        if not (0.0 <= b < 0.5):
            raise ValueError("need 0 <= b < 1/2")
        if not (0.0 <= a < 2.0 - 2.0 * b):
            raise ValueError("need 0 <= a < 2 - 2b")
        if varsigma < 0.0:
            lim = min(2.0 - a, 0.5 - b, (2.0 - 2.0 * b - a) / 3.0)
            if not (abs(varsigma) < lim):
                raise ValueError(
                    "negative varsigma must satisfy |varsigma| < %g" % lim
                )
        eta = 1.0 - 0.5 * (3.0 * abs(varsigma) + a + 2.0 * b)
        if not (0.0 < eta <= 1.0):
            raise ValueError("derived regularity index eta = %g not in (0, 1]" % eta)
        self.sigma0 = float(sigma0)
        self.a = float(a)
        self.b = float(b)
        self.varsigma = float(varsigma)
        self.eta = float(eta)
        self.c1 = self.sigma0 if c1 is None else float(c1)
        self.c2 = self.sigma0 if c2 is None else float(c2)
        if self.c1 <= 0.0 or self.c2 <= 0.0:
            raise ValueError("bound constants must be positive")
        self.model = (
            "constant" if (a == 0.0 and b == 0.0 and varsigma == 0.0)
            else "power-law"
        )

    @classmethod
    def constant(cls, sigma0=1.0):
        return cls(sigma0)

    @classmethod
    def power_law(cls, sigma0=1.0, a=1.0, varsigma=0.0, b=0.0):
        return cls(sigma0, a=a, b=b, varsigma=varsigma)

    def radial(self, g, c=1.0):
        """The g-dependent factor sigma0 (g/c)^a."""
        g = np.asarray(g, dtype=float)
        if self.a == 0.0:
            return self.sigma0 * np.ones_like(g)
        return self.sigma0 * (g / c) ** self.a

    def evaluate(self, g, cos_theta, c=1.0):
        """sigma(g, theta); nonnegative wherever defined."""
        val = self.radial(g, c)
        if self.varsigma != 0.0:
            sin_sq = np.clip(1.0 - np.asarray(cos_theta, dtype=float) ** 2,
                             0.0, 1.0)
            val = val * sin_sq ** (0.5 * self.varsigma)
        return val

    __call__ = evaluate

    def angular_constant(self):
        """Integral of sin^varsigma(theta) over the unit sphere.

        Equals 2 pi sqrt(pi) Gamma(vs/2 + 1) / Gamma(vs/2 + 3/2); 4 pi for
        an isotropic kernel.
        """
        v = self.varsigma
        return float(
            2.0 * np.pi * np.sqrt(np.pi)
            * np.exp(gammaln(0.5 * v + 1.0) - gammaln(0.5 * v + 1.5))
        )

    def angular_total(self, g, c=1.0):
        """Cross section integrated over scattering directions."""
        return self.angular_constant() * self.radial(g, c)

    def lower_bound(self, g, cos_theta, c=1.0):
        """c1 (g/c)^{a+1} / (sqrt(s)/c) sin^vs(theta), the envelope floor."""
        g = np.asarray(g, dtype=float)
        rs = 2.0 * np.sqrt(g * g + c * c)
        val = self.c1 * (g / c) ** (self.a + 1.0) / (rs / c)
        if self.varsigma != 0.0:
            sin_sq = np.clip(1.0 - np.asarray(cos_theta, dtype=float) ** 2,
                             0.0, 1.0)
            val = val * sin_sq ** (0.5 * self.varsigma)
        return val

    def upper_bound(self, g, cos_theta, c=1.0):
        """c2 ((g/c)^a + (g/c)^{-b}) sin^vs(theta), the envelope ceiling."""
        g = np.asarray(g, dtype=float)
        r = g / c
        with np.errstate(divide="ignore"):
            val = self.c2 * (r**self.a + r ** (-self.b))
        if self.varsigma != 0.0:
            sin_sq = np.clip(1.0 - np.asarray(cos_theta, dtype=float) ** 2,
                             0.0, 1.0)
            val = val * sin_sq ** (0.5 * self.varsigma)
        return val


# ----------------------------------------------------------------------
# Quadrature bundles
# ----------------------------------------------------------------------

class CollisionQuadrature:
    """Momentum rule for the partner integral plus a scattering-sphere rule.

    ``q_nodes`` (3, M) with weights (M,) integrate functions against the
    equilibrium tail; the sphere rule is a Gauss-Legendre x uniform product
    with antipodally symmetric nodes (even azimuth count).
    """

    def __init__(self, q_nodes, q_weights, n_polar=3, n_azimuth=6):
        self.q = np.asarray(q_nodes, dtype=float)
        self.qw = np.asarray(q_weights, dtype=float)
        if self.q.ndim != 2 or self.q.shape[0] != 3:
            raise ValueError("q_nodes must have shape (3, M)")
        if self.qw.shape != (self.q.shape[1],):
            raise ValueError("q_weights length mismatch")
        if n_azimuth % 2 != 0:
            raise ValueError("azimuth count must be even (antipodal symmetry)")
        self.omega, self.omega_w = unit_sphere_rule(n_polar, n_azimuth)

    @classmethod
    def for_equilibrium(cls, eq, n_r=64, n_mu=32, n_phi=16, log_tail=36.0,
                        n_polar=3, n_azimuth=6):
        """Spherical rule sized to the equilibrium's slowest decay direction."""
        u_norm = float(np.linalg.norm(eq.u))
        rate = eq.z * (eq.u0 - u_norm) / (eq.c * eq.c)
        r_max = 2.0 * eq.c + log_tail / rate
        nodes, weights = spherical_grid(r_max, n_r=n_r, n_mu=n_mu, n_phi=n_phi)
        return cls(nodes, weights, n_polar, n_azimuth)

    @classmethod
    def from_grid(cls, grid, n_polar=3, n_azimuth=6):
        """Use a Cartesian momentum grid's own nodes as the partner rule."""
        return cls(grid.p, grid.w, n_polar, n_azimuth)


# ----------------------------------------------------------------------
# Quadrature-driven operator actions (callable-based)
# ----------------------------------------------------------------------

def _sqrt_equilibrium(eq):
    """W_0 = sqrt(J) as a callable on momenta (3, ...)."""
    return lambda pts: np.exp(0.5 * eq.logpdf(pts))


def collision_frequency(kernel, eq, p, quad, chunk=512):
    """nu(p): the multiplication part of the linearized operator.

    Integrates the Moller velocity times the angular-integrated cross
    section against the equilibrium over the partner momentum.  ``p`` has
    shape (3,) or (3, n); returns a float or an (n,) array.  Positive.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[:, None] if single else p
    c = eq.c
    jq = eq.pdf(quad.q)
    out = np.empty(pts.shape[1])
    for start in range(0, pts.shape[1], chunk):
        blk = pts[:, start:start + chunk]
        _, g = pair_invariants(blk[:, :, None], quad.q[:, None, :], c)
        v = moller_velocity(blk[:, :, None], quad.q[:, None, :], c)
        out[start:start + chunk] = (
            v * kernel.angular_total(g, c)
        ) @ (quad.qw * jq)
    return float(out[0]) if single else out


def apply_K(kernel, eq, f, p, quad, chunk=32):
    """Action of the compact part K of the linearized operator at p.

    ``f`` must be a callable accepting momenta of shape (3, m) (supply an
    interpolator for gridded data).  The loss ("exchange") term couples f
    at the partner nodes; the gain term evaluates f at the outgoing momenta
    of every (partner, direction) pair, with the equilibrium square root
    evaluated exactly there.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[:, None] if single else p
    c = eq.c
    w0 = _sqrt_equilibrium(eq)
    w0_q = w0(quad.q)
    f_q = np.asarray(f(quad.q), dtype=float)
    out = np.empty(pts.shape[1])
    for start in range(0, pts.shape[1], chunk):
        blk = pts[:, start:start + chunk]
        m = blk.shape[1]
        pb = blk[:, :, None]
        qb = quad.q[:, None, :]
        _, g = pair_invariants(pb, qb, c)
        v = moller_velocity(pb, qb, c)
        # loss: - int v sigma_bar W0(p) W0(q) f(q) dq
        loss = (v * kernel.angular_total(g, c)) @ (quad.qw * w0_q * f_q)
        loss *= w0(blk)
        gain = np.zeros(m)
        for widx in range(quad.omega.shape[1]):
            omega = quad.omega[:, widx][:, None, None]
            p_out, q_out, _, _ = post_collision_momenta(pb, qb, omega, c)
            if kernel.varsigma != 0.0:
                ct = scattering_cosine(pb, qb, p_out, q_out, c)
            else:
                ct = None
            coef = (
                quad.omega_w[widx] * (quad.qw * w0_q)[None, :]
                * v * kernel.evaluate(g, ct, c)
            )
            p_flat = p_out.reshape(3, -1)
            q_flat = q_out.reshape(3, -1)
            term = (
                w0(q_flat) * np.asarray(f(p_flat), dtype=float)
                + w0(p_flat) * np.asarray(f(q_flat), dtype=float)
            ).reshape(m, -1)
            gain += np.sum(coef * term, axis=1)
        out[start:start + chunk] = gain - loss
    return float(out[0]) if single else out


def apply_L(kernel, eq, f, p, quad, chunk=32):
    """Full linearized operator L f = -nu f + K f at momenta p."""
    p = np.asarray(p, dtype=float)
    pts = p[:, None] if p.ndim == 1 else p
    val = apply_K(kernel, eq, f, pts, quad, chunk) - collision_frequency(
        kernel, eq, pts, quad
    ) * np.asarray(f(pts), dtype=float)
    return float(val[0]) if p.ndim == 1 else val


def apply_Gamma(kernel, eq, h1, h2, p, quad, chunk=32):
    """Bilinear collision form at momenta p for perturbations h1, h2.

    Gamma(h1, h2)(p) = int v sigma W0(q) [h1(p')h2(q') - h1(p)h2(q)],
    the quadratic remainder of the collision integral around the
    equilibrium after the square-root weighting.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[:, None] if single else p
    c = eq.c
    w0 = _sqrt_equilibrium(eq)
    w0_q = w0(quad.q)
    h2_q = np.asarray(h2(quad.q), dtype=float)
    out = np.empty(pts.shape[1])
    for start in range(0, pts.shape[1], chunk):
        blk = pts[:, start:start + chunk]
        m = blk.shape[1]
        pb = blk[:, :, None]
        qb = quad.q[:, None, :]
        _, g = pair_invariants(pb, qb, c)
        v = moller_velocity(pb, qb, c)
        loss = (v * kernel.angular_total(g, c)) @ (quad.qw * w0_q * h2_q)
        loss *= np.asarray(h1(blk), dtype=float)
        gain = np.zeros(m)
        for widx in range(quad.omega.shape[1]):
            omega = quad.omega[:, widx][:, None, None]
            p_out, q_out, _, _ = post_collision_momenta(pb, qb, omega, c)
            if kernel.varsigma != 0.0:
                ct = scattering_cosine(pb, qb, p_out, q_out, c)
            else:
                ct = None
            coef = (
                quad.omega_w[widx] * (quad.qw * w0_q)[None, :]
                * v * kernel.evaluate(g, ct, c)
            )
            p_flat = p_out.reshape(3, -1)
            q_flat = q_out.reshape(3, -1)
            term = (
                np.asarray(h1(p_flat), dtype=float)
                * np.asarray(h2(q_flat), dtype=float)
            ).reshape(m, -1)
            gain += np.sum(coef * term, axis=1)
        out[start:start + chunk] = gain - loss
    return float(out[0]) if single else out


def collision_integral(kernel, c, F1, F2, p, quad, parts=False, chunk=32):
    """Plain collision integral Q(F1, F2) at momenta p, by quadrature.

    With ``parts=True`` returns (gain, loss) where
    loss(p) = F1(p) * int v sigma F2(q) domega dq.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p[:, None] if single else p
    f2_q = np.asarray(F2(quad.q), dtype=float)
    gain_out = np.empty(pts.shape[1])
    loss_out = np.empty(pts.shape[1])
    for start in range(0, pts.shape[1], chunk):
        blk = pts[:, start:start + chunk]
        m = blk.shape[1]
        pb = blk[:, :, None]
        qb = quad.q[:, None, :]
        _, g = pair_invariants(pb, qb, c)
        v = moller_velocity(pb, qb, c)
        loss = (v * kernel.angular_total(g, c)) @ (quad.qw * f2_q)
        loss *= np.asarray(F1(blk), dtype=float)
        gain = np.zeros(m)
        for widx in range(quad.omega.shape[1]):
            omega = quad.omega[:, widx][:, None, None]
            p_out, q_out, _, _ = post_collision_momenta(pb, qb, omega, c)
            if kernel.varsigma != 0.0:
                ct = scattering_cosine(pb, qb, p_out, q_out, c)
            else:
                ct = None
            coef = (
                quad.omega_w[widx] * quad.qw[None, :]
                * v * kernel.evaluate(g, ct, c)
            )
            p_flat = p_out.reshape(3, -1)
            q_flat = q_out.reshape(3, -1)
            term = (
                np.asarray(F1(p_flat), dtype=float)
                * np.asarray(F2(q_flat), dtype=float)
            ).reshape(m, -1)
            gain += np.sum(coef * term, axis=1)
        gain_out[start:start + chunk] = gain
        loss_out[start:start + chunk] = loss
    if parts:
        if single:
            return float(gain_out[0]), float(loss_out[0])
        return gain_out, loss_out
    q_val = gain_out - loss_out
    return float(q_val[0]) if single else q_val


def kernel_bound_check(kernel, eq, p, q):
    """Exchange-kernel value against its envelope bound; returns (k1, bound).

    k1(p, q) = v sigma_bar(g) W0(p) W0(q) is the explicit (loss-exchange)
    part of the integral kernel of K.  The envelope is

        (c + |q|)^{(3|vs| + a + 2b)/2} exp(-rate |p - q|)
        / (sqrt(|p x q|^2 + c^2 |p - q|^2) |p - q|^{b + |vs|})

    with decay rate (u0 - |u|)/(4 T): half the sharp decay rate of the
    square-root equilibrium product, so the exponential retains enough
    slack to dominate the algebraic prefactors at large separation (the
    envelope's constants are only required to exist, not to be sharp).
    A multiplicative constant is left to the caller to fit.  Both
    arguments may be batched (3, n).  Raises for coincident momenta
    (singular denominator).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    single = p.ndim == 1
    if single:
        p = p[:, None]
        q = q[:, None]
    c = eq.c
    diff = p - q
    dist = np.sqrt(np.sum(diff * diff, axis=0))
    if np.any(dist < 1e-14):
        raise ValueError("kernel bound is singular at coincident momenta")
    _, g = pair_invariants(p, q, c)
    v = moller_velocity(p, q, c)
    w0 = _sqrt_equilibrium(eq)
    k1 = v * kernel.angular_total(g, c) * w0(p) * w0(q)

    cross = np.cross(p.T, q.T).T
    cross_sq = np.sum(cross * cross, axis=0)
    u_norm = float(np.linalg.norm(eq.u))
    rate = (eq.u0 - u_norm) / (4.0 * eq.T)
    expo = 0.5 * (3.0 * abs(kernel.varsigma) + kernel.a + 2.0 * kernel.b)
    qn = np.sqrt(np.sum(q * q, axis=0))
    bound = (
        (c + qn) ** expo
        * np.exp(-rate * dist)
        / (np.sqrt(cross_sq + c * c * dist * dist)
           * dist ** (kernel.b + abs(kernel.varsigma)))
    )
    if single:
        return float(k1[0]), float(bound[0])
    return k1, bound


# ----------------------------------------------------------------------
# Dense matrix form on a Cartesian momentum grid
# ----------------------------------------------------------------------

def discrete_invariants(grid, eq):
    """Grid-orthonormal basis of the five discrete collision invariants.

    Columns span {W0, p1 W0, p2 W0, p3 W0, p0 W0} at the nodes,
    orthonormalized (twice-iterated modified Gram-Schmidt) in the inner
    product weighted by the grid quadrature weights.
    """
    p0 = np.sqrt(eq.c**2 + np.sum(grid.p**2, axis=0))
    w0 = np.exp(0.5 * eq.logpdf(grid.p))
    X = np.stack([w0, grid.p[0] * w0, grid.p[1] * w0, grid.p[2] * w0,
                  p0 * w0], axis=1)
    w = grid.w
    for _ in range(2):  # repeated MGS for orthogonality to rounding level
        for k in range(X.shape[1]):
            for j in range(k):
                X[:, k] -= (w * X[:, j]) @ X[:, k] * X[:, j]
            nrm = np.sqrt((w * X[:, k]) @ X[:, k])
            if nrm <= 0.0:
                raise RuntimeError("degenerate invariant basis on this grid")
            X[:, k] /= nrm
    return X


class DiscreteCollisionOperator:
    """Dense matrix of the linearized collision operator on a momentum grid.

    The partner integral uses the grid's own nodes and weights (so the
    kernel matrix is symmetric in the weighted inner product up to
    interpolation and box truncation), and the gain term scatters through
    the grid's trilinear stencil.  Options restore the structure the
    continuum operator has exactly:

    * ``symmetrize``: replace K by its weighted-inner-product
      symmetrization;
    * ``micro_project``: sandwich L between projections onto the
      orthogonal complement of the five discrete invariants, making the
      discrete null space exact.

    Attributes
    ----------
    nu : ndarray (N,)
        Collision frequency at the nodes.
    matrix : ndarray (N, N)
        The operator L; ``gain_matrix`` is L + diag(nu).
    invariants : ndarray (N, 5)
        Discrete-orthonormal invariant basis.
    """

    def __init__(self, grid, eq, kernel, n_polar=3, n_azimuth=6,
                 symmetrize=True, micro_project=True, workers=1,
                 row_chunk=128):
        self.grid = grid
        self.eq = eq
        self.kernel = kernel
        self.omega, self.omega_w = unit_sphere_rule(n_polar, n_azimuth)
        self.invariants = discrete_invariants(grid, eq)
        self._w0_nodes = np.exp(0.5 * eq.logpdf(grid.p))
        self._assemble(symmetrize, micro_project, workers, row_chunk)

    def _gain_rows(self, start, stop):
        """Scatter-assembled gain rows [start, stop) of the matrix K2."""
        grid, eq, kernel = self.grid, self.eq, self.kernel
        c = eq.c
        N = grid.size
        m = stop - start
        pb = grid.p[:, start:stop, None]
        qb = grid.p[:, None, :]
        _, g = pair_invariants(pb, qb, c)
        v = moller_velocity(pb, qb, c)
        base = (grid.w * self._w0_nodes)[None, :] * v
        out = np.zeros((m, N))
        rows = np.repeat(np.arange(m), N)
        for widx in range(self.omega.shape[1]):
            omega = self.omega[:, widx][:, None, None]
            p_out, q_out, _, _ = post_collision_momenta(pb, qb, omega, c)
            if kernel.varsigma != 0.0:
                ct = scattering_cosine(pb, qb, p_out, q_out, c)
            else:
                ct = None
            coef = (self.omega_w[widx] * base * kernel.evaluate(g, ct, c)).ravel()
            p_flat = p_out.reshape(3, -1)
            q_flat = q_out.reshape(3, -1)
            w0_pout = np.exp(0.5 * eq.logpdf(p_flat))
            w0_qout = np.exp(0.5 * eq.logpdf(q_flat))
            for pts, partner_w0 in ((p_flat, w0_qout), (q_flat, w0_pout)):
                idx, wgt = grid.trilinear(pts)
                flat = rows[None, :] * N + idx
                out += np.bincount(
                    flat.ravel(),
                    weights=(wgt * (coef * partner_w0)[None, :]).ravel(),
                    minlength=m * N,
                ).reshape(m, N)
        return out

    def _assemble(self, symmetrize, micro_project, workers, row_chunk):
        grid, eq, kernel = self.grid, self.eq, self.kernel
        c = eq.c
        N = grid.size
        w0_nodes = self._w0_nodes
        j_nodes = w0_nodes**2

        # loss-exchange part and collision frequency share the pair sweep
        K = np.zeros((N, N))
        nu = np.empty(N)
        for start in range(0, N, row_chunk):
            stop = min(start + row_chunk, N)
            pb = grid.p[:, start:stop, None]
            qb = grid.p[:, None, :]
            _, g = pair_invariants(pb, qb, c)
            v = moller_velocity(pb, qb, c)
            vs = v * kernel.angular_total(g, c)
            nu[start:stop] = vs @ (grid.w * j_nodes)
            K[start:stop] = -(
                vs * (grid.w * w0_nodes)[None, :] * w0_nodes[start:stop, None]
            )

        # gain part, parallel over disjoint row slabs (deterministic:
        # each slab is assembled independently and written to its rows)
        slabs = [(s, min(s + row_chunk, N)) for s in range(0, N, row_chunk)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda ab: self._gain_rows(*ab), slabs))
        else:
            results = [self._gain_rows(s, t) for s, t in slabs]
        for (s, t), rows in zip(slabs, results):
            K[s:t] += rows

        if symmetrize:
            K = 0.5 * (K + (K * grid.w[:, None]).T / grid.w[:, None])

        L = K - np.diag(nu)
        if micro_project:
            X = self.invariants
            XtW = X.T * grid.w[None, :]
            L = L - X @ (XtW @ L)
            L = L - (L @ X) @ XtW
        self.nu = nu
        self.matrix = L

    @property
    def gain_matrix(self):
        """The operator plus the multiplication part: L + diag(nu)."""
        return self.matrix + np.diag(self.nu)

    def apply(self, h):
        """L h for a flat nodal vector (or a stack of them, last axis N)."""
        return np.asarray(h) @ self.matrix.T
