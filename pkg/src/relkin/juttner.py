"""Juttner (relativistic Maxwellian) equilibria and their moment identities.

The density with particle density ``rho``, bulk four-velocity spatial part
``u`` (an unbounded 3-vector; the physical bulk speed is ``c|u|/u0 < c``
with ``u0 = sqrt(c^2 + |u|^2)``) and temperature ``T`` is

    J(p) = rho * z / (4 pi c^3 K_2(z)) * exp(-z (p0 u0 - p.u) / c^2),

with ``z = c^2 / T`` and ``p0 = sqrt(c^2 + |p|^2)``.  Note the momentum
integral of J is ``rho * u0 / c`` -- it equals ``rho`` only for a fluid at
rest; ``rho`` is the density in the fluid's own frame.

Thirteen families of moments (monomials in the energy coordinate and the
momentum components, divided by at most one power of p0) admit closed forms
in ``K_3(z)/K_2(z)``; they are tabulated in :data:`MOMENT_KINDS` and
evaluated by :func:`moment`.  All are computed through exponentially scaled
Bessel ratios so they survive deep into the cold regime (large z).
"""

import numpy as np

from .bessel import bessel_k_ratio, log_bessel_k


def _as_bulk_velocity(u):
    """Accept a scalar (meaning (u, 0, 0)) or a 3-vector."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return np.array([float(u), 0.0, 0.0])
    if u.shape != (3,):
        raise ValueError("bulk velocity must be a scalar or a 3-vector")
    return u


def _validate_state(rho, T, c):
    if not (rho > 0.0):
        raise ValueError("density rho must be positive")
    if not (T > 0.0):
        raise ValueError("temperature T must be positive")
    if not (c > 0.0):
        raise ValueError("light speed c must be positive")


class Juttner:
    """Equilibrium state with cached derived quantities.

    Parameters
    ----------
    rho : float
        Rest-frame particle density.
    u : float or array_like, shape (3,)
        Spatial part of the bulk four-velocity (a scalar means the
        1-direction).  Unbounded; the bulk speed ``c|u|/u0`` stays below c.
    T : float
        Temperature.
    c : float
        Light speed.
    """

    def __init__(self, rho, u, T, c=1.0):
        _validate_state(rho, T, c)
        self.rho = float(rho)
        self.u = _as_bulk_velocity(u)
        self.T = float(T)
        self.c = float(c)
        self.z = c * c / self.T
        self.u0 = float(np.sqrt(c * c + self.u @ self.u))
        # log of rho z / (4 pi c^3 K_2(z)); log-space Bessel keeps it finite
        # for z far beyond the kv underflow point.
        self.log_norm = (
            np.log(self.rho * self.z)
            - np.log(4.0 * np.pi * c**3)
            - log_bessel_k(2, self.z)
        )

    def logpdf(self, p):
        """log J at momenta p of shape (3, ...)."""
        p = np.asarray(p, dtype=float)
        p0 = np.sqrt(self.c**2 + np.sum(p * p, axis=0))
        drift = np.tensordot(self.u, p, axes=(0, 0))
        return self.log_norm - self.z * (p0 * self.u0 - drift) / self.c**2

    def pdf(self, p):
        """J at momenta p of shape (3, ...)."""
        return np.exp(self.logpdf(p))

    __call__ = pdf

    def moment(self, kind, i=None, j=None):
        return moment(kind, self.rho, self.u, self.T, self.c, i=i, j=j)

    def moment_table(self):
        return moment_table(self.rho, self.u, self.T, self.c)


# ----------------------------------------------------------------------
# Closed-form moments.
#
# Each entry maps an integrand family to its closed form; "i"/"j" are
# component indices where index 0 denotes the energy coordinate p0 (only
# where the family admits it).  Values are per unit rho.
# ----------------------------------------------------------------------

MOMENT_KINDS = (
    "1/p0",          # needs no indices
    "pi/p0",         # i in 0..3
    "p0",
    "pi^2/p0",       # i in 1..3
    "pi",            # i in 1..3
    "pi*pj/p0",      # i != j in 0..3
    "p0^2",
    "pi^3/p0",       # i in 1..3
    "p0*pi",         # i in 1..3
    "pi^2",          # i in 1..3
    "pi^2*pj/p0",    # i != j in 1..3
    "pi*pj",         # i != j in 1..3
    "p1*p2*p3/p0",
)

# Default component choices used by the 13-row summary table (axis 1 is the
# distinguished slab direction, so defaults favor it).
DEFAULT_INDICES = {
    "1/p0": (None, None),
    "pi/p0": (1, None),
    "p0": (None, None),
    "pi^2/p0": (1, None),
    "pi": (1, None),
    "pi*pj/p0": (0, 1),
    "p0^2": (None, None),
    "pi^3/p0": (1, None),
    "p0*pi": (1, None),
    "pi^2": (1, None),
    "pi^2*pj/p0": (2, 1),
    "pi*pj": (1, 2),
    "p1*p2*p3/p0": (None, None),
}


def _u_component(u, u0, i):
    """u_i with index 0 meaning the time component u0."""
    return u0 if i == 0 else u[i - 1]


def _check_index(i, name, lo):
    if i is None or not (lo <= int(i) <= 3) or int(i) != i:
        raise ValueError("%s must be an integer in [%d, 3], got %r" % (name, lo, i))
    return int(i)


def moment(kind, rho, u, T, c=1.0, i=None, j=None):
    """Closed-form momentum moment of the Juttner density.

    Parameters
    ----------
    kind : str
        One of :data:`MOMENT_KINDS`, naming the integrand as a monomial in
        the momentum components p1, p2, p3 and the energy coordinate p0
        (generic indices written "pi", "pj").
    rho, u, T, c :
        Equilibrium parameters as in :class:`Juttner`.
    i, j : int, optional
        Component indices for the generic families.  Index 0 denotes the
        energy coordinate where the family allows it ("pi/p0", "pi*pj/p0").

    Returns
    -------
    float
        The integral of (integrand * J) over momentum space.
    """
    _validate_state(rho, T, c)
    u = _as_bulk_velocity(u)
    z = c * c / T
    u0 = np.sqrt(c * c + u @ u)
    usq = float(u @ u)
    k32 = bessel_k_ratio(3, 2, z)

    if kind == "1/p0":
        val = bessel_k_ratio(1, 2, z) / c
    elif kind == "pi/p0":
        i = _check_index(i, "i", 0)
        val = _u_component(u, u0, i) / c
    elif kind == "p0":
        val = (u0 * u0 / c) * k32 - c / z
    elif kind == "pi^2/p0":
        i = _check_index(i, "i", 1)
        val = (u[i - 1] ** 2 / c) * k32 + c / z
    elif kind == "pi":
        i = _check_index(i, "i", 1)
        val = (u0 * u[i - 1] / c) * k32
    elif kind == "pi*pj/p0":
        i = _check_index(i, "i", 0)
        j = _check_index(j, "j", 0)
        if i == j:
            raise ValueError("pi*pj/p0 requires distinct indices")
        val = (_u_component(u, u0, i) * _u_component(u, u0, j) / c) * k32
    elif kind == "p0^2":
        val = (u0 / c) * (u0 * u0 + (3.0 * u0 * u0 + 3.0 * usq) * k32 / z)
    elif kind == "pi^3/p0":
        i = _check_index(i, "i", 1)
        ui = u[i - 1]
        val = (ui / c) * (ui * ui + (6.0 * ui * ui + 3.0 * c * c) * k32 / z)
    elif kind == "p0*pi":
        i = _check_index(i, "i", 1)
        val = (u[i - 1] / c) * (u0 * u0 + (6.0 * u0 * u0 - c * c) * k32 / z)
    elif kind == "pi^2":
        i = _check_index(i, "i", 1)
        ui = u[i - 1]
        val = (u0 / c) * (ui * ui + (6.0 * ui * ui + c * c) * k32 / z)
    elif kind == "pi^2*pj/p0":
        i = _check_index(i, "i", 1)
        j = _check_index(j, "j", 1)
        if i == j:
            raise ValueError("pi^2*pj/p0 requires distinct indices")
        ui = u[i - 1]
        val = (u[j - 1] / c) * (ui * ui + (6.0 * ui * ui + c * c) * k32 / z)
    elif kind == "pi*pj":
        i = _check_index(i, "i", 1)
        j = _check_index(j, "j", 1)
        if i == j:
            raise ValueError("pi*pj requires distinct indices")
        val = (u0 * u[i - 1] * u[j - 1] / c**3) * (c * c + 6.0 * T * k32)
    elif kind == "p1*p2*p3/p0":
        val = (u[0] * u[1] * u[2] / c**3) * (c * c + 6.0 * T * k32)
    else:
        raise ValueError("unknown moment kind %r" % (kind,))
    return rho * float(val)


def _concrete_label(kind, i, j):
    label = kind
    if i is not None:
        label = label.replace("pi", "p0" if i == 0 else "p%d" % i)
    if j is not None:
        label = label.replace("pj", "p0" if j == 0 else "p%d" % j)
    return label


def moment_table(rho, u, T, c=1.0):
    """All 13 moment families at their default component choices.

    Returns a list of (label, value) with concrete labels such as
    "p1^2/p0"; the order follows :data:`MOMENT_KINDS`.
    """
    rows = []
    for kind in MOMENT_KINDS:
        i, j = DEFAULT_INDICES[kind]
        rows.append(
            (_concrete_label(kind, i, j), moment(kind, rho, u, T, c, i=i, j=j))
        )
    return rows
