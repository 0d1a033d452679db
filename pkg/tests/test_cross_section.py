"""Disk mesh, corrector problems and the homogenized stiffness matrix."""

import numpy as np
import pytest
import scipy.linalg

from rodlimit.cross_section import (
    brute_force_cell_min,
    build_disk_mesh,
    compute_A,
    h1_gram,
    imposed_strain_fields,
    solve_correctors,
    strain_stiffness,
    w_constraints,
)
from rodlimit.material import SvkMaterial, isotropic_q6


def nodal_integral(mesh, nodal_scalar):
    vals = mesh.node_values_at_quad(nodal_scalar)
    return float((mesh.quad_w * vals).sum())


def antipodal_index(mesh):
    """Index array mapping each node to the node at the opposite point."""
    # +0.0 normalizes any -0.0 produced by the negation
    key = {tuple(p): i for i, p in enumerate(mesh.nodes + 0.0)}
    return np.array([key[tuple(p)] for p in -mesh.nodes + 0.0])


class TestDiskMesh:
    def test_coarse_area_is_close_to_the_disk(self):
        mesh = build_disk_mesh(0)
        assert mesh.area() == pytest.approx(np.pi, rel=0.05)

    def test_fine_area_converges(self, disk_meshes):
        assert disk_meshes[4].area() == pytest.approx(np.pi, rel=1e-3)

    def test_polar_second_moment(self, disk_meshes):
        mesh = disk_meshes[4]
        val = mesh.integrate(lambda p: p[:, 0] ** 2 + p[:, 1] ** 2)
        assert val == pytest.approx(np.pi / 2.0, rel=5e-3)

    def test_quadrature_is_exact_for_quadratics(self, disk_meshes):
        # the edge-midpoint rule integrates x*y exactly over every triangle,
        # so the mesh integral must equal the exact polygon integral: zero by
        # the central symmetry
        mesh = disk_meshes[2]
        assert abs(mesh.integrate(lambda p: p[:, 0] * p[:, 1])) <= 1e-14

    def test_nodes_stay_inside_the_closed_disk(self, disk_meshes):
        for mesh in disk_meshes.values():
            r = np.linalg.norm(mesh.nodes, axis=1)
            assert np.max(r) <= 1.0 + 1e-12

    def test_node_set_is_exactly_centrally_symmetric(self, disk_meshes):
        mesh = disk_meshes[3]
        idx = antipodal_index(mesh)  # raises KeyError if any antipode missing
        assert np.all(idx[idx] == np.arange(mesh.node_count))

    def test_refinement_grows_the_mesh(self, disk_meshes):
        counts = [disk_meshes[r].node_count for r in (2, 3, 4)]
        assert counts[0] < counts[1] < counts[2]

    def test_invalid_refinement_is_rejected(self):
        with pytest.raises(ValueError):
            build_disk_mesh(-1)
        with pytest.raises(ValueError):
            build_disk_mesh(9)


class TestImposedStrains:
    def test_the_three_limit_strain_profiles(self):
        pts = np.array([[0.3, -0.2], [0.0, 0.5], [-0.4, -0.1]])
        V = imposed_strain_fields(pts)
        assert V.shape == (3, 3, 6)
        y2, y3 = pts[:, 0], pts[:, 1]
        # twist: pure shear growing linearly with the radius
        np.testing.assert_allclose(V[0, :, 1], -0.5 * y3)
        np.testing.assert_allclose(V[0, :, 2], 0.5 * y2)
        assert np.all(V[0][:, [0, 3, 4, 5]] == 0.0)
        # bending about the normal: axial strain linear in y3
        np.testing.assert_allclose(V[1, :, 0], y3)
        assert np.all(V[1][:, 1:] == 0.0)
        # bending about the binormal: axial strain linear in -y2
        np.testing.assert_allclose(V[2, :, 0], -y2)
        assert np.all(V[2][:, 1:] == 0.0)


class TestCorrectors:
    def test_solve_residuals_are_tiny(self, unit_correctors):
        for sol in unit_correctors.values():
            assert np.all(sol.residuals <= 1e-10)

    def test_fields_satisfy_the_mean_constraints(self, unit_correctors):
        sol = unit_correctors[4]
        mesh = sol.mesh
        scale = np.max(np.abs(sol.fields)) + 1e-30
        for i in range(3):
            for c in range(3):
                assert abs(nodal_integral(mesh, sol.fields[i, :, c])) <= 1e-10 * max(
                    1.0, scale
                )

    def test_fields_carry_no_inplane_rotational_moment(self, unit_correctors):
        sol = unit_correctors[4]
        mesh = sol.mesh
        y2 = mesh.nodes[:, 0]
        y3 = mesh.nodes[:, 1]
        for i in range(3):
            mom = nodal_integral(
                mesh, y3 * sol.fields[i, :, 1] - y2 * sol.fields[i, :, 2]
            )
            assert abs(mom) <= 1e-10

    def test_fields_are_even_under_point_reflection(self, unit_correctors):
        sol = unit_correctors[3]
        idx = antipodal_index(sol.mesh)
        scale = np.max(np.abs(sol.fields)) + 1e-30
        for i in range(3):
            diff = np.max(np.abs(sol.fields[i][idx] - sol.fields[i]))
            assert diff <= 1e-9 * max(1.0, scale)

    def test_twist_needs_no_relaxation_for_isotropic_disks(self, unit_correctors):
        sol = unit_correctors[4]
        scale = np.max(np.abs(sol.fields)) + 1e-30
        assert np.max(np.abs(sol.fields[0])) <= 1e-8 * scale

    def test_bending_correctors_match_the_poisson_profiles(
        self, unit_material, unit_correctors
    ):
        # in-plane parts: (-nu y2 y3, -nu (y3^2 - y2^2)/2) for bending about
        # the normal and (nu (y2^2 - y3^2)/2, nu y2 y3) about the binormal
        nu = unit_material.poisson_ratio
        sol = unit_correctors[4]
        y2 = sol.mesh.nodes[:, 0]
        y3 = sol.mesh.nodes[:, 1]
        exact_n = np.column_stack([-nu * y2 * y3, -0.5 * nu * (y3**2 - y2**2)])
        exact_b = np.column_stack([0.5 * nu * (y2**2 - y3**2), nu * y2 * y3])

        def rel_l2(nodal_diff, nodal_exact):
            num = sum(nodal_integral(sol.mesh, d * d) for d in nodal_diff.T)
            den = sum(nodal_integral(sol.mesh, e * e) for e in nodal_exact.T)
            return np.sqrt(num / den)

        assert rel_l2(sol.fields[1][:, 1:] - exact_n, exact_n) <= 0.02
        assert rel_l2(sol.fields[2][:, 1:] - exact_b, exact_b) <= 0.02


class TestStiffnessMatrix:
    def test_matrix_is_symmetric_positive_definite(self, unit_A):
        A = unit_A[4].matrix
        assert np.max(np.abs(A - A.T)) <= 1e-12 * np.linalg.norm(A)
        assert np.min(np.linalg.eigvalsh(A)) > 0.0

    def test_isotropic_diagonal_for_unit_lame(self, unit_A, unit_material):
        A = unit_A[4].matrix
        E = unit_material.youngs_modulus
        np.testing.assert_allclose(
            np.diag(A), [np.pi / 4.0, np.pi * E / 4.0, np.pi * E / 4.0], rtol=0.01
        )
        off = A - np.diag(np.diag(A))
        assert np.max(np.abs(off)) <= 1e-3 * np.linalg.norm(A)

    def test_energy_method_evaluates_the_quadratic_form(self, unit_A):
        A = unit_A[2]
        g = np.array([0.3, -1.1, 0.7])
        assert A.energy(g) == pytest.approx(g @ A.matrix @ g, rel=1e-14)

    def test_compute_without_precomputed_correctors(self, unit_form, disk_meshes):
        direct = compute_A(unit_form, disk_meshes[2])
        assert direct.refinement == 2
        np.testing.assert_allclose(
            direct.matrix, compute_A(unit_form, disk_meshes[2]).matrix, rtol=1e-14
        )

    def test_refinement_moves_the_matrix_by_less_than_half_a_percent(
        self, unit_form, unit_A
    ):
        mesh5 = build_disk_mesh(5)
        A5 = compute_A(unit_form, mesh5).matrix
        A4 = unit_A[4].matrix
        assert np.max(np.abs(A5 - A4)) <= 5e-3 * np.linalg.norm(A4)

    def test_direct_cell_minimum_equals_the_quadratic_form(
        self, unit_form, disk_meshes, unit_A, rng_factory
    ):
        rng = rng_factory(17)
        mesh = disk_meshes[2]
        A = unit_A[2]
        for _ in range(3):
            gamma = rng.standard_normal(3)
            direct = brute_force_cell_min(unit_form, mesh, gamma)
            quad = float(A.energy(gamma))
            assert abs(direct - quad) <= 1e-8 * (1.0 + abs(quad))


class TestCoercivityConstant:
    def test_strain_energy_h1_equivalence_is_stable_under_refinement(self, unit_form):
        # smallest generalized eigenvalue of the strain form against the H1
        # inner product on the constrained corrector space; refinement must
        # not move it by more than ten percent
        def smallest(level):
            mesh = build_disk_mesh(level)
            K = strain_stiffness(mesh, unit_form).toarray()
            G = h1_gram(mesh).toarray()
            C = w_constraints(mesh)
            basis = scipy.linalg.null_space(C)
            Kp = basis.T @ K @ basis
            Gp = basis.T @ G @ basis
            vals = scipy.linalg.eigh(
                Kp, Gp, subset_by_index=[0, 0], eigvals_only=True
            )
            return float(vals[0])

        k1, k2 = smallest(2), smallest(3)
        assert k1 > 0.0 and k2 > 0.0
        assert abs(k1 - k2) <= 0.1 * k2
