"""Four-vectors on the mass shell and canonical pure boosts.

Conventions used throughout the package:

* momenta are arrays with the *leading* axis holding the three spatial
  components, i.e. shape ``(3,)`` or ``(3, N)`` or ``(3, ...)``;
* four-vectors prepend the energy coordinate, shape ``(4, ...)``;
* the Minkowski product is ``P * Q = p0 q0 - p . q`` (signature +---),
  so a particle of unit mass satisfies ``P * P = c**2`` with
  ``p0 = sqrt(c**2 + |p|**2)``.
"""

import numpy as np


def mass_shell_energy(p, c):
    """Energy coordinate p0 = sqrt(c^2 + |p|^2) for momenta p of shape (3, ...)."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(c * c + np.sum(p * p, axis=0))


def hat_velocity(p, c):
    """Relativistic velocity c p / p0; bounded by c in norm, shape (3, ...)."""
    p = np.asarray(p, dtype=float)
    return c * p / mass_shell_energy(p, c)


def four_momentum(p, c):
    """Stack the energy coordinate onto spatial momenta: (3, ...) -> (4, ...)."""
    p = np.asarray(p, dtype=float)
    return np.concatenate([mass_shell_energy(p, c)[None], p], axis=0)


def minkowski_product(P, Q):
    """Lorentz product p0 q0 - p . q for four-vectors of shape (4, ...)."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return P[0] * Q[0] - np.sum(P[1:] * Q[1:], axis=0)


def invariant_mass(W):
    """sqrt(W * W) for a timelike four-vector, shape (4, ...) -> (...)."""
    s = minkowski_product(W, W)
    if np.any(s <= 0.0):
        raise ValueError("four-vector is not timelike")
    return np.sqrt(s)


def boost_to_rest(W, V):
    """Apply the canonical pure boost into the rest frame of W to V.

    The boost is the unique symmetric (rotation-free) Lorentz map taking the
    timelike four-vector W to (sqrt(W*W), 0, 0, 0).  Both arguments have
    shape (4, ...) and broadcast over trailing axes.

    Returns the transformed four-vector, same shape as V.
    """
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    M = invariant_mass(W)
    w0, w = W[0], W[1:]
    v0, v = V[0], V[1:]
    wv = np.sum(w * v, axis=0)
    out0 = (w0 * v0 - wv) / M
    outs = v + w * (wv / (M * (w0 + M)) - v0 / M)
    return np.concatenate([out0[None], outs], axis=0)


def pure_boost_matrix(W):
    """4x4 matrix of the canonical pure boost into the rest frame of W.

    Single four-vector only; the vectorized path is :func:`boost_to_rest`.
    """
    W = np.asarray(W, dtype=float)
    if W.shape != (4,):
        raise ValueError("pure_boost_matrix expects a single four-vector (4,)")
    M = invariant_mass(W)
    w0, w = W[0], W[1:]
    lam = np.empty((4, 4))
    lam[0, 0] = w0 / M
    lam[0, 1:] = -w / M
    lam[1:, 0] = -w / M
    lam[1:, 1:] = np.eye(3) + np.outer(w, w) / (M * (w0 + M))
    return lam


MINKOWSKI_METRIC = np.diag([1.0, -1.0, -1.0, -1.0])
