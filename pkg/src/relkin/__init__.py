"""Relativistic kinetic theory on the mass shell.

Modules cover the special-function layer, equilibrium (Juttner)
distributions and their moment identities, the hyperbolic structure of the
macroscopic flux (sound speed, Mach number, boundary-condition counting),
binary collision kinematics, linearized and bilinear collision operators on
a momentum grid, and a damped steady-state solver for the half-space
transport problem.
"""

from .bessel import bessel_k, bessel_k_scaled, log_bessel_k, bessel_k_ratio
from .lorentz import (
    mass_shell_energy,
    hat_velocity,
    four_momentum,
    minkowski_product,
    invariant_mass,
    boost_to_rest,
    pure_boost_matrix,
)
from .quadrature import MomentumGrid, spherical_grid, unit_sphere_rule
from .juttner import Juttner, moment, moment_table, MOMENT_KINDS
from .macro import (
    dimensionless_coefficients,
    state_coefficients,
    sound_speed,
    relativistic_sound_speed,
    mach_number,
    incoming_condition_count,
    classify,
    invariant_basis,
    flux_matrix,
    flux_eigenvalues,
    sound_speed_from_spectrum,
)
from .collision import (
    pair_invariants,
    moller_velocity,
    post_collision,
    CollisionPair,
    ScatteringKernel,
    CollisionQuadrature,
    collision_frequency,
    apply_K,
    apply_L,
    apply_Gamma,
    collision_integral,
    kernel_bound_check,
    DiscreteCollisionOperator,
)
from .halfspace import (
    HalfspaceGrid,
    DistributionField,
    SolverConfig,
    HalfspaceOperator,
    TransportSweep,
    FixedPointDivergence,
    sweep_U,
    solve_linear_damped,
    solve_nonlinear_damped,
    fixed_point_residual,
    damping_decay_check,
    solvability_residual,
    envelope_decay_rate,
    singular_weight,
    data_energy,
    data_energy_weighted,
    gaussian_incoming_data,
)

__version__ = "0.1.0"

__all__ = [
    "bessel_k",
    "bessel_k_scaled",
    "log_bessel_k",
    "bessel_k_ratio",
    "mass_shell_energy",
    "hat_velocity",
    "four_momentum",
    "minkowski_product",
    "invariant_mass",
    "boost_to_rest",
    "pure_boost_matrix",
    "MomentumGrid",
    "spherical_grid",
    "unit_sphere_rule",
    "Juttner",
    "moment",
    "moment_table",
    "MOMENT_KINDS",
    "dimensionless_coefficients",
    "state_coefficients",
    "sound_speed",
    "relativistic_sound_speed",
    "mach_number",
    "incoming_condition_count",
    "classify",
    "invariant_basis",
    "flux_matrix",
    "flux_eigenvalues",
    "sound_speed_from_spectrum",
    "pair_invariants",
    "moller_velocity",
    "post_collision",
    "CollisionPair",
    "ScatteringKernel",
    "CollisionQuadrature",
    "collision_frequency",
    "apply_K",
    "apply_L",
    "apply_Gamma",
    "collision_integral",
    "kernel_bound_check",
    "DiscreteCollisionOperator",
    "HalfspaceGrid",
    "DistributionField",
    "SolverConfig",
    "HalfspaceOperator",
    "TransportSweep",
    "FixedPointDivergence",
    "sweep_U",
    "solve_linear_damped",
    "solve_nonlinear_damped",
    "fixed_point_residual",
    "damping_decay_check",
    "solvability_residual",
    "envelope_decay_rate",
    "singular_weight",
    "data_energy",
    "data_energy_weighted",
    "gaussian_incoming_data",
    "__version__",
]
