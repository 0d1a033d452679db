"""Rotation utilities: round trips, projections, geodesics, hull elements."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rodlimit.rotation import (
    ConvexRotation,
    GeodesicAmbiguityWarning,
    conv_combination,
    exp_so3,
    geodesic_interpolate,
    is_rotation,
    log_so3,
    matrix_from_quat,
    project_to_rotation,
    quat_from_matrix,
    quat_multiply,
    random_rotation,
    skew,
    unskew,
)

EX, EY, EZ = np.eye(3)


def rotvec_strategy(max_angle=np.pi - 0.1):
    """Rotation vectors with norm strictly below the log-chart boundary."""
    axis = st.tuples(
        st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0)
    ).filter(lambda v: np.linalg.norm(v) > 1e-3)
    angle = st.floats(0.0, max_angle)

    def build(pair):
        (ax, ay, az), theta = pair
        v = np.array([ax, ay, az])
        return theta * v / np.linalg.norm(v)

    return st.tuples(axis, angle).map(build)


class TestExpLog:
    @settings(max_examples=80, deadline=None)
    @given(rotvec_strategy())
    def test_log_of_exp_recovers_the_vector(self, w):
        back = log_so3(exp_so3(w))
        assert np.max(np.abs(back - w)) <= 1e-9

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_exp_of_log_recovers_the_matrix(self, seed):
        R = random_rotation(np.random.default_rng(seed))
        assert np.max(np.abs(exp_so3(log_so3(R)) - R)) <= 1e-12

    def test_exp_of_zero_is_identity(self):
        assert np.array_equal(exp_so3(np.zeros(3)), np.eye(3))

    def test_quarter_turn_about_z_maps_x_to_y(self):
        R = exp_so3(0.5 * np.pi * EZ)
        np.testing.assert_allclose(R @ EX, EY, atol=1e-15)

    def test_log_angle_stays_in_zero_pi(self):
        rng = np.random.default_rng(3)
        R = np.stack([random_rotation(rng) for _ in range(64)])
        angles = np.linalg.norm(log_so3(R), axis=-1)
        assert np.all(angles >= 0.0) and np.all(angles <= np.pi + 1e-12)

    def test_exp_is_smooth_through_zero(self):
        # tiny vectors hit the series branch; compare against a plain
        # Rodrigues evaluation at a nearby angle that does not.
        w = 1e-8 * np.array([1.0, -2.0, 0.5])
        R = exp_so3(w)
        np.testing.assert_allclose(R, np.eye(3) + skew(w), atol=1e-15)

    def test_half_turn_log_is_deterministic(self):
        R = exp_so3(np.pi * EZ)
        w1 = log_so3(R)
        w2 = log_so3(R.copy())
        assert np.array_equal(w1, w2)
        assert abs(np.linalg.norm(w1) - np.pi) <= 1e-12


class TestQuaternions:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matrix_quat_round_trip(self, seed):
        R = random_rotation(np.random.default_rng(seed))
        q = quat_from_matrix(R)
        assert q[0] >= 0.0
        np.testing.assert_allclose(matrix_from_quat(q), R, atol=1e-13)

    def test_hamilton_product_matches_matrix_product(self):
        rng = np.random.default_rng(11)
        R1, R2 = random_rotation(rng), random_rotation(rng)
        q = quat_multiply(quat_from_matrix(R1), quat_from_matrix(R2))
        np.testing.assert_allclose(matrix_from_quat(q), R1 @ R2, atol=1e-13)


class TestSkew:
    @settings(max_examples=40, deadline=None)
    @given(
        st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)),
        st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)),
    )
    def test_skew_acts_as_cross_product(self, w, x):
        w, x = np.array(w), np.array(x)
        np.testing.assert_allclose(skew(w) @ x, np.cross(w, x), atol=1e-12)

    def test_unskew_inverts_skew_and_symmetrizes(self):
        w = np.array([0.3, -1.2, 0.7])
        assert np.array_equal(unskew(skew(w)), w)
        # a symmetric part must not leak into the result
        S = skew(w) + np.diag([1.0, 2.0, 3.0])
        np.testing.assert_allclose(unskew(S), w, atol=1e-15)


class TestProjection:
    def test_projection_fixes_rotations(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            R = random_rotation(rng)
            assert np.max(np.abs(project_to_rotation(R) - R)) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
    def test_projection_is_scale_invariant(self, seed, c):
        M = np.random.default_rng(seed).normal(size=(3, 3))
        np.testing.assert_allclose(
            project_to_rotation(c * M), project_to_rotation(M), atol=1e-9
        )

    def test_double_identity_projects_to_identity(self):
        np.testing.assert_allclose(project_to_rotation(2.0 * np.eye(3)), np.eye(3))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_projection_output_is_a_rotation(self, seed):
        M = np.random.default_rng(seed).normal(size=(3, 3))
        R, unique = project_to_rotation(M, return_unique=True)
        assert is_rotation(R)

    def test_negative_determinant_input_still_gives_det_plus_one(self):
        M = np.diag([1.0, 1.0, -1.0])
        R = project_to_rotation(M)
        assert is_rotation(R)
        assert np.linalg.det(R) > 0.9

    def test_rank_one_input_is_flagged_non_unique(self):
        M = np.outer(EX, EY)
        R, unique = project_to_rotation(M, return_unique=True)
        assert not unique
        assert is_rotation(R)

    def test_generic_input_is_flagged_unique(self):
        M = np.random.default_rng(0).normal(size=(3, 3)) + 3.0 * np.eye(3)
        _, unique = project_to_rotation(M, return_unique=True)
        assert unique


class TestIsRotation:
    def test_accepts_exact_rotations(self):
        assert is_rotation(np.eye(3))
        assert is_rotation(exp_so3([0.1, 0.4, -0.2]))

    def test_rejects_reflections_and_scalings(self):
        assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
        assert not is_rotation(1.01 * np.eye(3))


class TestGeodesic:
    def test_endpoints(self):
        rng = np.random.default_rng(21)
        R0, R1 = random_rotation(rng), random_rotation(rng)
        np.testing.assert_allclose(geodesic_interpolate(R0, R1, 0.0), R0, atol=1e-14)
        np.testing.assert_allclose(geodesic_interpolate(R0, R1, 1.0), R1, atol=1e-12)

    def test_midpoint_of_quarter_turn_is_eighth_turn(self):
        R1 = exp_so3(0.5 * np.pi * EZ)
        mid = geodesic_interpolate(np.eye(3), R1, 0.5)
        np.testing.assert_allclose(mid, exp_so3(0.25 * np.pi * EZ), atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.0, 1.0))
    def test_relabeling_the_endpoints_reverses_the_parameter(self, seed, tau):
        rng = np.random.default_rng(seed)
        R0, R1 = random_rotation(rng), random_rotation(rng)
        a = geodesic_interpolate(R0, R1, tau)
        b = geodesic_interpolate(R1, R0, 1.0 - tau)
        assert np.max(np.abs(a - b)) <= 1e-9

    def test_parameter_derivative_converges_at_second_order(self):
        rng = np.random.default_rng(33)
        R0 = random_rotation(rng)
        R1 = random_rotation(rng)
        c = log_so3(R0.T @ R1)
        tau0 = 0.37
        exact = geodesic_interpolate(R0, R1, tau0) @ skew(c)

        def fd_error(h):
            num = (
                geodesic_interpolate(R0, R1, tau0 + h)
                - geodesic_interpolate(R0, R1, tau0 - h)
            ) / (2.0 * h)
            return np.max(np.abs(num - exact))

        e1, e2 = fd_error(1e-3), fd_error(5e-4)
        assert e1 / e2 == pytest.approx(4.0, rel=0.2)

    def test_half_turn_emits_ambiguity_warning(self):
        with pytest.warns(GeodesicAmbiguityWarning):
            geodesic_interpolate(np.eye(3), exp_so3(np.pi * EX), 0.5)


class TestConvexHull:
    def test_quarter_weights_over_the_klein_rotations_give_zero(self):
        rots = np.stack(
            [
                np.eye(3),
                np.diag([1.0, -1.0, -1.0]),
                np.diag([-1.0, 1.0, -1.0]),
                np.diag([-1.0, -1.0, 1.0]),
            ]
        )
        hull = conv_combination(rots, np.full(4, 0.25))
        np.testing.assert_allclose(hull.matrix, np.zeros((3, 3)), atol=1e-15)
        assert hull.max_singular_value <= 1e-12

    def test_half_identity_half_flip_collapses_two_axes(self):
        rots = np.stack([np.eye(3), exp_so3(np.pi * EZ)])
        hull = conv_combination(rots, np.array([0.5, 0.5]))
        np.testing.assert_allclose(hull.matrix, np.diag([0.0, 0.0, 1.0]), atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 6))
    def test_hull_elements_never_exceed_unit_singular_value(self, seed, k):
        rng = np.random.default_rng(seed)
        rots = np.stack([random_rotation(rng) for _ in range(k)])
        w = rng.dirichlet(np.ones(k))
        hull = conv_combination(rots, w)
        assert hull.max_singular_value <= 1.0 + 1e-10

    def test_negative_weights_are_rejected(self):
        rots = np.stack([np.eye(3), exp_so3(0.3 * EX)])
        with pytest.raises(ValueError, match="nonnegative"):
            conv_combination(rots, np.array([1.2, -0.2]))

    def test_weights_must_sum_to_one(self):
        rots = np.stack([np.eye(3), exp_so3(0.3 * EX)])
        with pytest.raises(ValueError, match="sum"):
            conv_combination(rots, np.array([0.7, 0.2]))

    def test_non_rotation_certificate_is_rejected(self):
        rots = np.stack([np.eye(3), 1.5 * np.eye(3)])
        with pytest.raises(ValueError, match="not a rotation"):
            conv_combination(rots, np.array([0.5, 0.5]))

    def test_tampered_matrix_fails_validation(self):
        rots = np.stack([np.eye(3), exp_so3(0.3 * EX)])
        hull = conv_combination(rots, np.array([0.5, 0.5]))
        bad = ConvexRotation(
            matrix=hull.matrix + 1e-3, weights=hull.weights, rotations=hull.rotations
        )
        with pytest.raises(ValueError, match="certificate"):
            bad.validate()
