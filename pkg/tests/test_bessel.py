"""Special-function layer: values, scaling, recurrence, domain policing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relkin.bessel import (
    bessel_k,
    bessel_k_scaled,
    log_bessel_k,
    bessel_k_ratio,
    recurrence_residual,
)

from oracles import bessel_k_integral_scaled

# Scaled values e^z K_alpha(z) from the defining-integral oracle
# (adaptive quadrature, rel. tol 1e-13), computed once and frozen.
# [DERIVED] oracles.bessel_k_integral_scaled
FROZEN_SCALED = {
    (0, 0.1): 2.682326102262894,
    (1, 1.0): 1.6361534862632583,
    (2, 1.0): 4.416770052333412,
    (3, 1.0): 19.3032336955969,
    (2, 10.0): 0.47378524855575643,
    (3, 100.0): 0.13090761530632702,
    (2, 1000.0): 0.039707617862380036,
    (5, 0.1): 42412050.199178256,
}


class TestValues:
    @pytest.mark.parametrize("key", sorted(FROZEN_SCALED))
    def test_frozen_oracle_values(self, key):
        alpha, z = key
        ref = FROZEN_SCALED[key]
        assert abs(bessel_k_scaled(alpha, z) - ref) / ref <= 1e-12

    @pytest.mark.parametrize("alpha", [0, 1, 2, 3, 4, 5])
    @pytest.mark.parametrize("z", [0.1, 1.0, 10.0, 100.0, 1000.0])
    def test_scaled_value_matches_live_integral(self, alpha, z):
        ref = bessel_k_integral_scaled(alpha, z)
        assert abs(bessel_k_scaled(alpha, z) - ref) / ref <= 1e-10

    def test_unscaled_consistency(self):
        z = np.array([0.5, 2.0, 50.0])
        assert np.allclose(
            bessel_k(2, z), bessel_k_scaled(2, z) * np.exp(-z), rtol=1e-14
        )

    def test_log_variant_beyond_underflow(self):
        # kv itself underflows past z ~ 705; the log form must stay finite
        # and match the leading asymptotic log K ~ -z + 0.5 log(pi/(2z)).
        for z in [1e3, 1e5, 1e6]:
            lg = log_bessel_k(2, z)
            assert np.isfinite(lg)
            asym = -z + 0.5 * np.log(np.pi / (2.0 * z))
            # relative correction is O(1/z)
            assert abs(lg - asym) <= 10.0 / z * abs(asym) + 5.0 / z

    def test_ratio_cancels_underflow(self):
        # K_3/K_2 ~ 1 + 5/(2z) for large z; both factors underflow alone.
        z = 1e4
        assert bessel_k(3, z) == 0.0  # demonstrates why the ratio route exists
        r = bessel_k_ratio(3, 2, z)
        assert abs(r - (1.0 + 2.5 / z)) <= 5.0 / z**2


class TestStructure:
    @pytest.mark.parametrize("alpha", [1, 2, 3])
    @pytest.mark.parametrize("z", [0.1, 1.0, 10.0, 100.0])
    def test_three_term_recurrence(self, alpha, z):
        assert recurrence_residual(alpha, z) <= 1e-12

    @given(
        alpha=st.integers(min_value=1, max_value=4),
        z=st.floats(min_value=1e-6, max_value=1e6),
    )
    @settings(max_examples=200, deadline=None)
    def test_recurrence_everywhere(self, alpha, z):
        assert recurrence_residual(alpha, z) <= 1e-11

    def test_positive_on_representable_range(self):
        # sqrt(pi/2z) e^{-z} drops below the normal float64 floor near 700
        z = np.logspace(-6, np.log10(650.0), 200)
        for alpha in range(6):
            assert np.all(bessel_k(alpha, z) > 0.0)
            assert np.all(bessel_k_scaled(alpha, z) > 0.0)

    def test_monotone_decreasing_in_argument(self):
        z = np.logspace(-6, 2.8, 100)
        for alpha in range(6):
            assert np.all(np.diff(bessel_k(alpha, z)) < 0.0)

    def test_monotone_increasing_in_order(self):
        for z in [0.1, 1.0, 10.0]:
            vals = [bessel_k(a, z) for a in range(6)]
            assert np.all(np.diff(vals) > 0.0)

    def test_vectorized_matches_scalar(self):
        z = np.array([0.3, 3.0, 30.0])
        vec = bessel_k_scaled(2, z)
        assert vec.shape == (3,)
        for i, zi in enumerate(z):
            assert vec[i] == bessel_k_scaled(2, float(zi))


class TestDomain:
    @pytest.mark.parametrize("alpha", [-1, 6, 2.5])
    def test_rejects_bad_order(self, alpha):
        with pytest.raises(ValueError):
            bessel_k(alpha, 1.0)

    @pytest.mark.parametrize("z", [1e-7, 2e6, 0.0, -1.0])
    def test_rejects_bad_argument(self, z):
        with pytest.raises(ValueError):
            bessel_k(2, z)

    def test_rejects_bad_array_entries(self):
        with pytest.raises(ValueError):
            bessel_k(2, np.array([1.0, 1e-8]))
        with pytest.raises(ValueError):
            bessel_k(np.array([1, 7]), 1.0)

    def test_recurrence_order_bounds(self):
        with pytest.raises(ValueError):
            recurrence_residual(0, 1.0)
        with pytest.raises(ValueError):
            recurrence_residual(5, 1.0)
