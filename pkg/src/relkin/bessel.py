"""Modified Bessel functions of the second kind.

Every closed-form expression in this package (equilibrium normalization,
moment identities, sound speed, the 5x5 macroscopic flux matrix) funnels
through ratios and values of ``K_alpha(z)`` with small integer order and
``z = c**2 / T``.  Cold, desk-top plasmas push ``z`` to 1e4 and beyond, where
``K_alpha(z) ~ sqrt(pi/(2z)) e^{-z}`` underflows double precision around
``z = 705``; the scaled and log variants below stay finite there, and ratios
always cancel the exponential before it is formed.

The integral representation

    K_alpha(z) = int_0^inf exp(-z cosh t) cosh(alpha t) dt

is deliberately *not* used as the implementation; it serves as the
independent oracle in the test suite.
"""

import numpy as np
from scipy import special

# Orders actually consumed by the rest of the package.
ORDER_MIN = 0
ORDER_MAX = 5
ARG_MIN = 1e-6
ARG_MAX = 1e6

# Largest argument for which e^{-z} is representable in float64.
UNDERFLOW_Z = 705.0


def _validate(alpha, z):
    alpha = np.asarray(alpha)
    z = np.asarray(z, dtype=float)
    if not np.issubdtype(alpha.dtype, np.integer):
        if not np.all(np.equal(np.mod(alpha, 1), 0)):
            raise ValueError("order alpha must be integer-valued")
        alpha = alpha.astype(int)
    if np.any(alpha < ORDER_MIN) or np.any(alpha > ORDER_MAX):
        raise ValueError(
            "order alpha=%s outside supported range [%d, %d]"
            % (alpha, ORDER_MIN, ORDER_MAX)
        )
    if np.any(z < ARG_MIN) or np.any(z > ARG_MAX):
        raise ValueError(
            "argument z=%s outside supported range [%g, %g]" % (z, ARG_MIN, ARG_MAX)
        )
    return alpha, z


def bessel_k(alpha, z):
    """K_alpha(z) for integer order 0..5 and z in [1e-6, 1e6].

    Parameters
    ----------
    alpha : int or array_like of int
        Order.
    z : float or array_like
        Argument.

    Returns
    -------
    float or ndarray
        The function value.  Positive throughout the domain; for
        ``z >~ 705`` the true value lies below the smallest normal
        float64 and the result underflows to 0.0 (use
        :func:`bessel_k_scaled` or :func:`log_bessel_k` there).
    """
    alpha, z = _validate(alpha, z)
    out = special.kv(alpha, z)
    if np.ndim(out) == 0:
        return float(out)
    return out


def bessel_k_scaled(alpha, z):
    """Exponentially scaled value ``e^z K_alpha(z)``.

    Finite and well-conditioned over the whole supported argument range,
    including where :func:`bessel_k` underflows.
    """
    alpha, z = _validate(alpha, z)
    out = special.kve(alpha, z)
    if np.ndim(out) == 0:
        return float(out)
    return out


def log_bessel_k(alpha, z):
    """Natural log of K_alpha(z), computed as ``log(kve) - z``."""
    alpha, z = _validate(alpha, z)
    out = np.log(special.kve(alpha, z)) - z
    if np.ndim(out) == 0:
        return float(out)
    return out


def bessel_k_ratio(alpha_num, alpha_den, z):
    """Ratio ``K_num(z) / K_den(z)`` with the e^{-z} factors cancelled.

    The workhorse for the coefficient algebra: e.g. ``a1 = K3/K2`` at
    ``z = 1e4`` where both numerator and denominator underflow separately.
    """
    num, z = _validate(alpha_num, z)
    den, _ = _validate(alpha_den, z)
    out = special.kve(num, z) / special.kve(den, z)
    if np.ndim(out) == 0:
        return float(out)
    return out


def recurrence_residual(alpha, z):
    """Relative defect of K_{alpha+1} = (2 alpha / z) K_alpha + K_{alpha-1}.

    Evaluated in scaled form so it is meaningful for large z.  Returns
    |lhs - rhs| / lhs.  Used by the verification suite; should sit at
    rounding level for a correct implementation.
    """
    alpha = int(alpha)
    if alpha < 1 or alpha + 1 > ORDER_MAX:
        raise ValueError("recurrence needs 1 <= alpha <= %d" % (ORDER_MAX - 1))
    lhs = bessel_k_scaled(alpha + 1, z)
    rhs = (2.0 * alpha / np.asarray(z, dtype=float)) * bessel_k_scaled(
        alpha, z
    ) + bessel_k_scaled(alpha - 1, z)
    return np.abs(lhs - rhs) / np.abs(lhs)
