import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lpmv

from hoadoa.sh import (
    Direction,
    ShIndex,
    SphericalPoint,
    acn,
    acn_to_index,
    angular_distance,
    cart_to_sph,
    encode_direction,
    equiangular_quadrature,
    fibonacci_grid,
    fibonacci_vectors,
    n_channels,
    real_sh,
    sh_matrix,
    sph_to_cart,
)

Y00 = 1.0 / math.sqrt(4.0 * math.pi)

angles = st.floats(-10.0, 10.0, allow_nan=False)
elevations = st.floats(-math.pi / 2, math.pi / 2)


def reference_sh(n, m, el, az):
    """SN3D real SH from scipy's Legendre functions with the phase removed."""
    am = abs(m)
    p = lpmv(am, n, math.sin(el)) * (-1) ** am
    norm = math.sqrt((2 - (m == 0)) / (4 * math.pi) * math.factorial(n - am) / math.factorial(n + am))
    return norm * p * (math.sin(am * az) if m < 0 else math.cos(am * az))


class TestDirection:
    @given(angles, angles)
    def test_normalized_ranges(self, el, az):
        d = Direction(el, az)
        assert -math.pi / 2 <= d.elevation <= math.pi / 2
        assert -math.pi < d.azimuth <= math.pi
        assert abs(np.linalg.norm(d.to_vector()) - 1.0) < 1e-12

    @given(angles, angles)
    def test_same_point_after_folding(self, el, az):
        d = Direction(el, az)
        raw = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        assert np.allclose(d.to_vector(), raw, atol=1e-12)

    def test_azimuth_wraps_to_half_open_range(self):
        assert Direction(0.0, -math.pi).azimuth == math.pi
        assert Direction(0.0, 3 * math.pi).azimuth == pytest.approx(math.pi)

    def test_poles_canonical(self):
        assert Direction(math.pi / 2, 1.3) == Direction(math.pi / 2, -2.0)
        assert Direction(math.pi / 2, 1.3).azimuth == 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Direction(float("nan"), 0.0)

    def test_from_vector_zero_rejected(self):
        with pytest.raises(ValueError):
            Direction.from_vector([0.0, 0.0, 0.0])


class TestCoordinates:
    @pytest.mark.parametrize(
        "r, el, az, expected",
        [(1.0, 0.0, 0.0, (1, 0, 0)), (1.0, 0.0, math.pi / 2, (0, 1, 0)), (2.0, math.pi / 2, 0.7, (0, 0, 2))],
    )
    def test_axes(self, r, el, az, expected):
        assert np.allclose(sph_to_cart(SphericalPoint(r, Direction(el, az))), expected, atol=1e-12)

    @given(st.floats(0.01, 100.0), elevations, angles)
    def test_round_trip(self, r, el, az):
        p = SphericalPoint(r, Direction(el, az))
        q = cart_to_sph(sph_to_cart(p))
        assert q.radius == pytest.approx(r, rel=1e-12)
        assert np.allclose(sph_to_cart(q), sph_to_cart(p), atol=1e-12 * r)

    def test_origin_rejected(self):
        with pytest.raises(ValueError):
            cart_to_sph([0.0, 0.0, 0.0])

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            SphericalPoint(-1.0, Direction(0.0, 0.0))


class TestAcn:
    @pytest.mark.parametrize("n, m, k", [(0, 0, 0), (1, -1, 1), (4, 4, 24)])
    def test_examples(self, n, m, k):
        assert acn(ShIndex(n, m)) == k

    def test_bijection_up_to_order_8(self):
        seen = set()
        for n in range(9):
            for m in range(-n, n + 1):
                k = acn(ShIndex(n, m))
                assert acn_to_index(k) == ShIndex(n, m)
                seen.add(k)
        assert seen == set(range(81))

    def test_invalid(self):
        with pytest.raises(ValueError):
            acn_to_index(-1)
        with pytest.raises(ValueError):
            ShIndex(1, 2)


class TestRealSh:
    def test_examples(self):
        assert real_sh(ShIndex(0, 0), Direction(0.3, 1.0)) == pytest.approx(Y00, abs=1e-7)
        assert real_sh(ShIndex(1, 1), Direction(0.0, 0.0)) == pytest.approx(Y00, abs=1e-12)
        assert real_sh(ShIndex(1, -1), Direction(0.0, math.pi / 2)) == pytest.approx(Y00, abs=1e-12)

    @settings(max_examples=50)
    @given(elevations, angles)
    def test_matches_scipy_legendre(self, el, az):
        row = sh_matrix(4, np.array([el]), np.array([az]))[0]
        for k in range(25):
            idx = acn_to_index(k)
            assert row[k] == pytest.approx(reference_sh(idx.n, idx.m, el, az), abs=1e-12)

    def test_no_condon_shortley_phase(self):
        # X channel is positive toward the front
        assert real_sh(ShIndex(1, 1), Direction(0.0, 0.0)) > 0


class TestEncode:
    def test_examples(self):
        v = encode_direction(4, Direction(0.2, 0.4))
        assert v.shape == (25,)
        assert v[0] == pytest.approx(0.2820948, abs=1e-7)
        assert np.allclose(encode_direction(1, Direction(0.0, 0.0))[1:], [0.0, 0.0, Y00], atol=1e-12)
        top = encode_direction(1, Direction(math.pi / 2, 0.0))
        assert top[2] == pytest.approx(Y00) and abs(top[1]) < 1e-12 and abs(top[3]) < 1e-12

    @given(elevations, angles)
    def test_prefix_property(self, el, az):
        d = Direction(el, az)
        for k in range(4):
            assert np.array_equal(encode_direction(k, d), encode_direction(k + 1, d)[: n_channels(k)])

    def test_order_range(self):
        with pytest.raises(ValueError):
            encode_direction(5, Direction(0, 0))
        with pytest.raises(ValueError):
            encode_direction(-1, Direction(0, 0))

    def test_element_is_real_sh(self, rng):
        d = Direction(0.5, -2.0)
        v = encode_direction(3, d)
        for k in range(16):
            assert v[k] == real_sh(acn_to_index(k), d)


class TestAngularDistance:
    def test_examples(self):
        a = Direction(0.0, 0.0)
        assert angular_distance(a, a) == 0.0
        assert angular_distance(a, Direction(0.0, math.pi)) == pytest.approx(math.pi)
        assert angular_distance(a, Direction(0.0, math.pi / 2)) == pytest.approx(math.pi / 2)

    @settings(max_examples=200)
    @given(elevations, angles, elevations, angles, elevations, angles)
    def test_metric(self, e1, a1, e2, a2, e3, a3):
        x, y, z = Direction(e1, a1), Direction(e2, a2), Direction(e3, a3)
        assert angular_distance(x, y) == angular_distance(y, x)
        assert 0.0 <= angular_distance(x, y) <= math.pi
        assert angular_distance(x, z) <= angular_distance(x, y) + angular_distance(y, z) + 1e-9

    @given(elevations, angles, elevations, angles)
    def test_matches_arccos_formula(self, e1, a1, e2, a2):
        x, y = Direction(e1, a1), Direction(e2, a2)
        c = math.sin(x.elevation) * math.sin(y.elevation) + math.cos(x.elevation) * math.cos(y.elevation) * math.cos(
            x.azimuth - y.azimuth
        )
        ref = math.acos(min(1.0, max(-1.0, c)))
        # arccos loses precision near 0 and pi; compare with a tolerance that reflects that
        assert angular_distance(x, y) == pytest.approx(ref, abs=1e-7)


class TestFibonacci:
    def test_single_point(self):
        assert len(fibonacci_grid(1)) == 1

    def test_deterministic_unit(self):
        v = fibonacci_vectors(500)
        assert np.array_equal(v, fibonacci_vectors(500))
        assert np.all(np.abs(np.linalg.norm(v, axis=1) - 1.0) < 1e-12)

    def test_spacing_2562(self):
        v = fibonacci_vectors(2562)
        # brute-force nearest neighbour over all pairs
        cos = np.clip(v @ v.T, -1.0, 1.0)
        np.fill_diagonal(cos, -2.0)
        nn = np.degrees(np.arccos(np.clip(cos.max(axis=1), -1.0, 1.0)))
        assert nn.min() > 2.0 and nn.max() < 5.0

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            fibonacci_vectors(0)


def test_quadrature_weights_sum_to_sphere_area():
    _, _, w = equiangular_quadrature()
    assert w.sum() == pytest.approx(4 * math.pi, rel=1e-13)
