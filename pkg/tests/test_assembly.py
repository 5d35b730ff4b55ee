import numpy as np
import pytest

import wgelast.polyspace as ps
from wgelast import oracles
from wgelast.assembly import (SolverError, assemble, dof_map, local_load,
                              local_stiffness, matrix_parts, solve)
from wgelast.kernels import edge_slice, interior_slice, local_dim
from wgelast.localops import element_operators
from wgelast.mesh import build_square_mesh
from wgelast.study import (errors_against, example_problem, patch_suite,
                           polynomial_problem)

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def translation_dofs(k, cx, cy):
    v = np.zeros(local_dim(k))
    v[interior_slice(k, 0).start] = cx
    v[interior_slice(k, 1).start] = cy
    for e in range(3):
        v[edge_slice(k, e, 0).start] = cx
        v[edge_slice(k, e, 1).start] = cy
    return v


class TestLocalStiffness:
    def test_translations_in_kernel(self):
        a = local_stiffness(REF, 1, 1.0, 1.0)
        v = translation_dofs(1, 3.0, -2.0)
        assert np.abs(a @ v).max() < 1e-12 * np.abs(a).max()

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_symmetry(self, k, rng):
        coords = oracles.random_triangle(rng)
        a = local_stiffness(coords, k, 2.0, 5.0)
        assert np.abs(a - a.T).max() <= 1e-12 * np.abs(a).max()

    def test_reference_element_against_oracle(self):
        got = local_stiffness(REF, 1, 1.0, 1.0)
        want = oracles.oracle_local_stiffness(REF, 1, 1.0, 1.0)
        assert np.abs(got - want).max() <= 1e-10 * np.abs(want).max()

    def test_psd(self, rng):
        a = local_stiffness(oracles.random_triangle(rng), 2, 1.0, 10.0)
        assert np.linalg.eigvalsh(a).min() > -1e-10 * np.abs(a).max()


class TestLocalLoad:
    def test_zero_force(self):
        out = local_load(REF, 1, lambda p: np.zeros(p.shape), "robust")
        assert np.abs(out).max() == 0.0

    def test_constant_force_constant_test_function(self):
        # R(v) = v0 for constants, so the entry is f . c * |T|
        f = lambda p: np.broadcast_to(np.array([2.0, -1.0]), p.shape).copy()
        out = local_load(REF, 1, f, "robust")
        v = translation_dofs(1, 1.0, 0.0)
        assert abs(out @ v - 2.0 * 0.5) < 1e-13
        v = translation_dofs(1, 0.0, 1.0)
        assert abs(out @ v - (-1.0) * 0.5) < 1e-13

    def test_standard_variant_has_no_edge_entries(self):
        prob = example_problem(1, 1.0, 1.0)
        out = local_load(REF, 2, prob.f, "standard")
        assert np.abs(out[interior_dim_of(2):]).max() == 0.0

    def test_manufactured_force_against_quadrature(self):
        # unit-sized element, so both sides need high exactness to meet the
        # tight tolerance; rules of different degree keep them independent
        prob = example_problem(1, 1.0, 1.0)
        k = 1
        out = local_load(REF, k, prob.f, "robust", quad_degree=18)
        recon = oracles.oracle_rt_reconstruction(REF, k)
        pts, wts = ps.map_triangle_rule(ps.triangle_rule(19), REF)
        centroid = REF.mean(axis=0)
        h = np.sqrt(2.0)
        rt = ps.eval_rt_basis(k, centroid, h, pts)
        fv = prob.f(pts)
        want = np.einsum("q,qbc,qc,bl->l", wts, rt, fv, recon)
        assert np.abs(out - want).max() < 1e-11 * max(1.0, np.abs(want).max())


def interior_dim_of(k):
    return (k + 1) * (k + 2)


class TestAssemble:
    def test_zero_data_gives_zero_solution(self):
        mesh = build_square_mesh(1)
        zero = lambda p: np.zeros(p.shape)
        system, dm, bvals = assemble(mesh, 1, 1.0, 1.0, "robust", zero, zero)
        u = solve(system)
        assert np.abs(u.values).max() == 0.0

    def test_dof_count_formula(self):
        for level, k in ((1, 1), (2, 2), (3, 1)):
            mesh = build_square_mesh(level)
            dm = dof_map(mesh, k)
            n = 2 ** level
            expect = 2 * n * n * (k + 1) * (k + 2) + (3 * n * n + 2 * n) * 2 * (k + 1)
            assert dm.total == expect

    def test_spd_at_large_lambda(self, mesh_level2):
        prob = example_problem(1, 1.0, 1e6)
        system, _, _ = assemble(mesh_level2, 1, 1.0, 1e6, "robust", prob.f, prob.ghat)
        dense = system.matrix.toarray()
        assert np.abs(dense - dense.T).max() <= 1e-12 * np.abs(dense).max()
        assert np.linalg.eigvalsh(dense).min() > 0

    @pytest.mark.parametrize("level,k", [(3, 1), (4, 1), (3, 2), (3, 3)])
    def test_factorization_succeeds(self, level, k):
        mesh = build_square_mesh(level)
        for lam in (1.0, 1e6):
            prob = example_problem(1, 1.0, lam)
            system, _, _ = assemble(mesh, k, 1.0, lam, "robust", prob.f, prob.ghat)
            solve(system)

    def test_lambda_scaling_structure(self, mesh_level2):
        kg, kd, ks = matrix_parts(mesh_level2, 1)
        prob = example_problem(1, 1.0, 1.0)
        s1, _, _ = assemble(mesh_level2, 1, 1.0, 1.0, "robust", prob.f, prob.ghat)
        s2, _, _ = assemble(mesh_level2, 1, 1.0, 1e6, "robust", prob.f, prob.ghat)
        diff = (s2.matrix_full - s1.matrix_full) - (1e6 - 1.0) * kd
        assert np.abs(diff.data).max() <= 1e-12 * np.abs(s2.matrix_full.data).max()

    def test_variants_share_matrix(self, mesh_level2):
        prob = example_problem(1, 1.0, 3.0)
        sr, _, _ = assemble(mesh_level2, 1, 1.0, 3.0, "robust", prob.f, prob.ghat)
        ss, _, _ = assemble(mesh_level2, 1, 1.0, 3.0, "standard", prob.f, prob.ghat)
        assert np.array_equal(sr.matrix.indptr, ss.matrix.indptr)
        assert np.array_equal(sr.matrix.indices, ss.matrix.indices)
        assert np.array_equal(sr.matrix.data, ss.matrix.data)
        assert np.abs(sr.rhs - ss.rhs).max() > 0  # loads differ

    def test_assembly_determinism(self, mesh_level2):
        prob = example_problem(2, 1.0, 10.0)
        a, _, _ = assemble(mesh_level2, 2, 1.0, 10.0, "robust", prob.f, prob.ghat)
        b, _, _ = assemble(mesh_level2, 2, 1.0, 10.0, "robust", prob.f, prob.ghat)
        assert np.array_equal(a.matrix.data, b.matrix.data)
        assert np.array_equal(a.rhs, b.rhs)

    def test_rejects_bad_input(self, mesh_level2):
        zero = lambda p: np.zeros(p.shape)
        with pytest.raises(ValueError):
            assemble(mesh_level2, 1, -1.0, 1.0, "robust", zero, zero)
        with pytest.raises(ValueError):
            assemble(mesh_level2, 1, 1.0, 1.0, "other", zero, zero)
        with pytest.raises(ValueError):
            assemble(mesh_level2, 9, 1.0, 1.0, "robust", zero, zero)
        nan = lambda p: np.full(p.shape, np.nan)
        with pytest.raises(ValueError):
            assemble(mesh_level2, 1, 1.0, 1.0, "robust", nan, zero)


class TestSolve:
    def test_zero_rhs(self, mesh_level2):
        zero = lambda p: np.zeros(p.shape)
        system, _, _ = assemble(mesh_level2, 1, 1.0, 1.0, "robust", zero, zero)
        assert np.abs(solve(system).values).max() == 0.0

    def test_recovers_manufactured_coefficients(self, rng):
        mesh = build_square_mesh(3)
        prob = example_problem(1, 1.0, 1.0)
        system, dm, _ = assemble(mesh, 1, 1.0, 1.0, "robust", prob.f, prob.ghat)
        x_ref = rng.standard_normal(dm.n_free)
        system.rhs = system.matrix @ x_ref
        got = solve(system).values[dm.free]
        assert np.linalg.norm(got - x_ref) <= 1e-9 * np.linalg.norm(x_ref)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_patch_exactness(self, k, mesh_level2):
        # global polynomial solutions of degree <= k are reproduced exactly
        prob = polynomial_problem({(1, 0): 1.0, (0, 1): 2.0},
                                  {(1, 0): 3.0, (0, 1): -1.0}, 1.0, 1.0,
                                  "linear patch")
        ops = element_operators(mesh_level2, k)
        system, dm, _ = assemble(mesh_level2, k, 1.0, 1.0, "robust",
                                 prob.f, prob.ghat, ops=ops)
        uh = solve(system)
        energy, l2 = errors_against(prob.u, uh, mesh_level2, k, ops)
        assert energy <= 1e-9 * max(1.0, np.linalg.norm(uh.values))
        assert l2 <= 1e-10 * max(1.0, np.linalg.norm(uh.values))

    def test_patch_with_zero_force(self, mesh_level2):
        # linear displacement solves the homogeneous equation
        prob = polynomial_problem({(1, 0): 1.0, (0, 1): 2.0},
                                  {(1, 0): 3.0, (0, 1): -1.0}, 1.0, 1.0)
        pts = np.array([[0.3, 0.4]])
        assert np.abs(prob.f(pts)).max() == 0.0

    def test_indefinite_matrix_reported(self, mesh_level2):
        zero = lambda p: np.zeros(p.shape)
        system, _, _ = assemble(mesh_level2, 1, 1.0, 1.0, "robust", zero, zero)
        system.matrix = -system.matrix
        system.rhs = np.ones(system.matrix.shape[0])
        with pytest.raises(SolverError):
            solve(system)


class TestCondensation:
    @pytest.mark.parametrize("k,lam,tol", [
        (1, 1.0, 1e-10), (2, 1e2, 1e-10),
        # beyond lambda ~ 1e3 the agreement between two roundings of the
        # same operator is limited by cond(A) * eps, not by either solver
        (2, 1e4, 1e-7),
    ])
    def test_matches_direct_path(self, k, lam, tol, mesh_level2):
        prob = example_problem(2, 1.0, lam)
        ops = element_operators(mesh_level2, k)
        direct, _, _ = assemble(mesh_level2, k, 1.0, lam, "robust",
                                prob.f, prob.ghat, ops=ops)
        cond, _, _ = assemble(mesh_level2, k, 1.0, lam, "robust",
                              prob.f, prob.ghat, ops=ops, condense=True)
        ud = solve(direct).values
        uc = solve(cond).values
        assert np.abs(ud - uc).max() <= tol * max(1.0, np.abs(ud).max())

    def test_condensed_system_is_smaller(self, mesh_level2):
        prob = example_problem(1, 1.0, 1.0)
        cond, dm, _ = assemble(mesh_level2, 1, 1.0, 1.0, "robust",
                               prob.f, prob.ghat, condense=True)
        assert cond.matrix.shape[0] < dm.n_free
