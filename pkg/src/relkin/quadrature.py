"""Quadrature rules, momentum-space grids, trilinear interpolation.

Two kinds of discretization live here:

* dense spherical tensor rules used for high-accuracy moment integrals and
  the dual-route verification checks (Gauss-Legendre in radius and polar
  cosine, uniform-periodic in azimuth);
* the Cartesian ``MomentumGrid`` that carries the kinetic solver -- a
  per-axis sinh-stretched Gauss-Legendre rule, clustering nodes near the
  origin where the equilibrium weight concentrates while still reaching the
  tail, with an even node count per axis so that no node sits on the
  ``p1 = 0`` interface between in- and outgoing directions.
"""

import logging

import numpy as np
from numpy.polynomial.legendre import leggauss

log = logging.getLogger(__name__)


def gauss_legendre(n, a=-1.0, b=1.0):
    """Gauss-Legendre nodes and weights transplanted to [a, b]."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = leggauss(int(n))
    mid, half = 0.5 * (b + a), 0.5 * (b - a)
    return mid + half * x, half * w


def uniform_periodic(n, period=2.0 * np.pi):
    """Equispaced rule on a periodic interval (exact for trig degree < n)."""
    if n < 1:
        raise ValueError("need at least one node")
    x = period * np.arange(n) / n
    w = np.full(n, period / n)
    return x, w


def sinh_stretched_axis(n, p_max, kappa=2.2):
    """Symmetric 1-d momentum axis on (-p_max, p_max), dense near zero.

    Gauss-Legendre nodes t on [-1, 1] pushed through
    ``p = p_max sinh(kappa t) / sinh(kappa)``; weights carry the Jacobian.
    Even ``n`` keeps 0 out of the node set.
    """
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    t, wt = leggauss(int(n))
    s = np.sinh(kappa)
    p = p_max * np.sinh(kappa * t) / s
    w = wt * p_max * kappa * np.cosh(kappa * t) / s
    return p, w


class MomentumGrid:
    """Tensor-product Cartesian grid in momentum space.

    Parameters
    ----------
    n : int
        Nodes per axis (even keeps p1 = 0 off the grid).
    p_max : float
        Half-width of the box on every axis.
    kappa : float
        Sinh stretching strength; 0.0 < kappa, larger packs more nodes
        near the origin.

    Attributes
    ----------
    axes : list of ndarray
        The three identical 1-d node arrays (sorted ascending).
    p : ndarray, shape (3, n**3)
        Flattened node coordinates, C-order over (i, j, k).
    w : ndarray, shape (n**3,)
        Product quadrature weights.
    """

    def __init__(self, n, p_max, kappa=2.2):
        if n % 2 != 0:
            raise ValueError("node count per axis must be even")
        x, wx = sinh_stretched_axis(n, p_max, kappa)
        self.n = int(n)
        self.p_max = float(p_max)
        self.kappa = float(kappa)
        self.axes = [x, x.copy(), x.copy()]
        self.axis_weights = [wx, wx.copy(), wx.copy()]
        P1, P2, P3 = np.meshgrid(x, x, x, indexing="ij")
        self.p = np.stack([P1.ravel(), P2.ravel(), P3.ravel()], axis=0)
        self.w = (wx[:, None, None] * wx[None, :, None] * wx[None, None, :]).ravel()

    @property
    def size(self):
        return self.n**3

    def reshape(self, field):
        """View a flat nodal field as an (n, n, n) array."""
        return np.asarray(field).reshape(self.n, self.n, self.n)

    def integrate(self, field):
        """Quadrature sum of a flat nodal field."""
        return float(np.dot(self.w, np.asarray(field)))

    def trilinear(self, pts):
        """Trilinear interpolation stencil for arbitrary points.

        Parameters
        ----------
        pts : ndarray, shape (3, M)
            Query points.

        Returns
        -------
        idx : ndarray of int, shape (8, M)
            Flat node indices of the enclosing cell corners.
        wgt : ndarray, shape (8, M)
            Corner weights; columns for points outside the box are all
            zero (fields are treated as vanishing beyond the grid).
        """
        pts = np.asarray(pts, dtype=float)
        x = self.axes[0]
        n = self.n
        lo = np.empty((3, pts.shape[1]), dtype=np.intp)
        t = np.empty((3, pts.shape[1]))
        inside = np.ones(pts.shape[1], dtype=bool)
        for ax in range(3):
            hi = np.searchsorted(x, pts[ax], side="right")
            inside &= (hi > 0) & (hi < n)
            hi = np.clip(hi, 1, n - 1)
            lo[ax] = hi - 1
            t[ax] = (pts[ax] - x[hi - 1]) / (x[hi] - x[hi - 1])
        t = np.clip(t, 0.0, 1.0)
        idx = np.empty((8, pts.shape[1]), dtype=np.intp)
        wgt = np.empty((8, pts.shape[1]))
        corner = 0
        for d1 in (0, 1):
            w1 = t[0] if d1 else 1.0 - t[0]
            for d2 in (0, 1):
                w2 = t[1] if d2 else 1.0 - t[1]
                for d3 in (0, 1):
                    w3 = t[2] if d3 else 1.0 - t[2]
                    idx[corner] = ((lo[0] + d1) * n + lo[1] + d2) * n + lo[2] + d3
                    wgt[corner] = w1 * w2 * w3
                    corner += 1
        wgt *= inside
        return idx, wgt

    def interpolator(self, field, quiet=False):
        """Callable mapping points (3, M) to trilinearly interpolated values.

        Points beyond the box evaluate to 0; a warning is logged (once per
        call) with the clamp count unless ``quiet``.
        """
        field = np.asarray(field, dtype=float).ravel()
        if field.size != self.size:
            raise ValueError("field length does not match grid size")

        def evaluate(pts):
            idx, wgt = self.trilinear(pts)
            if not quiet:
                n_out = int(np.count_nonzero(~np.any(wgt != 0.0, axis=0)))
                if n_out:
                    log.warning(
                        "%d of %d interpolation points outside the momentum "
                        "box; values clamped to zero", n_out, wgt.shape[1],
                    )
            return np.sum(field[idx] * wgt, axis=0)

        return evaluate


def spherical_grid(r_max, n_r=480, n_mu=128, n_phi=32):
    """Dense spherical rule for momentum-space integrals.

    Polar axis along component 1 (the slab direction), so axisymmetric
    weights with bulk velocity (u1, 0, 0) vary only in (r, mu).  Returns
    nodes of shape (3, N) and weights (N,) that include the r^2 factor.
    """
    r, wr = gauss_legendre(n_r, 0.0, r_max)
    mu, wmu = leggauss(int(n_mu))
    phi, wphi = uniform_periodic(n_phi)

    R, MU, PHI = np.meshgrid(r, mu, phi, indexing="ij")
    W = wr[:, None, None] * wmu[None, :, None] * wphi[None, None, :] * R**2
    s = np.sqrt(1.0 - MU**2)
    p = np.stack([R * MU, R * s * np.cos(PHI), R * s * np.sin(PHI)], axis=0)
    return p.reshape(3, -1), W.ravel()


def unit_sphere_rule(n_mu=3, n_phi=6):
    """Product rule for the scattering direction on the unit sphere.

    Gauss-Legendre in the polar cosine, uniform in azimuth.  With even
    ``n_phi`` the node set is antipodally symmetric (mu -> -mu pairs with
    phi -> phi + pi), which the discrete collision operator exploits.
    Returns unit vectors (3, M) and weights (M,) summing to 4 pi.
    """
    mu, wmu = leggauss(int(n_mu))
    phi, wphi = uniform_periodic(n_phi)
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    W = wmu[:, None] * wphi[None, :]
    s = np.sqrt(1.0 - MU**2)
    omega = np.stack([MU, s * np.cos(PHI), s * np.sin(PHI)], axis=0)
    return omega.reshape(3, -1), W.ravel()
