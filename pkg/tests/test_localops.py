from pathlib import Path

import numpy as np
import pytest

import wgelast.polyspace as ps
from wgelast import oracles
from wgelast.kernels import edge_slice, interior_slice, local_dim
from wgelast.localops import (RtSpace, divergence_identity_check,
                              divergence_identity_gap, element_operators,
                              normal_trace_gap, operators_for_triangle,
                              rt_reconstruction, stabilizer, weak_divergence,
                              weak_gradient)
from wgelast.mesh import build_square_mesh

DATA = Path(__file__).parent / "data"
REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def constant_dofs(k, cx, cy):
    v = np.zeros(local_dim(k))
    v[interior_slice(k, 0).start] = cx
    v[interior_slice(k, 1).start] = cy
    for e in range(3):
        v[edge_slice(k, e, 0).start] = cx
        v[edge_slice(k, e, 1).start] = cy
    return v


def linear_field_dofs(coords, k):
    """Dof vector of v0 = (x, y) with matching edge traces."""
    c = coords.mean(axis=0)
    h = np.linalg.norm(coords[[1, 2, 0]] - coords, axis=1).max()
    v = np.zeros(local_dim(k))
    v[interior_slice(k, 0)][:3] = [c[0], h, 0.0]
    v[interior_slice(k, 1)][:3] = [c[1], 0.0, h]
    edges = np.stack([coords[[0, 1]], coords[[1, 2]], coords[[2, 0]]])
    for e in range(3):
        mid = edges[e].mean(axis=0)
        half = 0.5 * (edges[e][1] - edges[e][0])
        v[edge_slice(k, e, 0)][:2] = [mid[0], half[0]]
        v[edge_slice(k, e, 1)][:2] = [mid[1], half[1]]
    return v


class TestWeakGradient:
    def test_constant_field_has_zero_gradient(self):
        g = weak_gradient(REF, 1)
        assert np.abs(g @ constant_dofs(1, 2.0, -3.0)).max() < 1e-13

    def test_linear_field_gives_identity(self):
        coords = np.array([[0.2, 0.1], [1.1, 0.3], [0.4, 1.2]])
        g = weak_gradient(coords, 1)
        out = g @ linear_field_dofs(coords, 1)
        assert np.allclose(out, [1.0, 0.0, 0.0, 1.0], atol=1e-12)

    def test_matches_oracle(self, rng):
        for k in (1, 2, 3):
            for _ in range(5):
                coords = oracles.random_triangle(rng)
                got = weak_gradient(coords, k)
                want = oracles.oracle_weak_gradient(coords, k)
                assert np.abs(got - want).max() <= 1e-10 * max(1.0, np.abs(want).max())


class TestWeakDivergence:
    def test_constant_field(self):
        d = weak_divergence(REF, 2)
        assert np.abs(d @ constant_dofs(2, 1.0, 1.0)).max() < 1e-12

    def test_linear_field_gives_two(self):
        coords = np.array([[0.0, 0.0], [1.3, 0.2], [0.3, 0.9]])
        d = weak_divergence(coords, 1)
        out = d @ linear_field_dofs(coords, 1)
        assert np.allclose(out, [2.0, 0.0, 0.0], atol=1e-12)

    def test_matches_oracle(self, rng):
        for k in (1, 2, 3):
            for _ in range(5):
                coords = oracles.random_triangle(rng)
                got = weak_divergence(coords, k)
                want = oracles.oracle_weak_divergence(coords, k)
                assert np.abs(got - want).max() <= 1e-10 * max(1.0, np.abs(want).max())


class TestReconstruction:
    def test_constants_are_reproduced(self):
        k = 2
        r = rt_reconstruction(REF, k)
        out = r @ constant_dofs(k, 2.0, -1.0)
        m = ps.tri_dim(k)
        expect = np.zeros(ps.rt_dim(k))
        expect[0] = 2.0
        expect[m] = -1.0
        assert np.allclose(out, expect, atol=1e-12)

    def test_matching_traces_reproduce_interior(self, rng):
        # v0 in [P_k]^2 lies in the flux space and matches every functional
        for k in (1, 2):
            coords = oracles.random_triangle(rng)
            v = linear_field_dofs(coords, k)
            r = rt_reconstruction(coords, k)
            out = r @ v
            m = ps.tri_dim(k)
            expect = np.zeros(ps.rt_dim(k))
            expect[:m] = v[interior_slice(k, 0)]
            expect[m:2 * m] = v[interior_slice(k, 1)]
            assert np.allclose(out, expect, atol=1e-11)

    def test_matches_oracle(self, rng):
        for k in (1, 2, 3):
            for _ in range(5):
                coords = oracles.random_triangle(rng)
                got = rt_reconstruction(coords, k)
                want = oracles.oracle_rt_reconstruction(coords, k)
                assert np.abs(got - want).max() <= 1e-10 * max(1.0, np.abs(want).max())

    def test_defining_moments(self, rng):
        # both moment sets of the definition, checked by direct quadrature
        k = 2
        coords = oracles.random_triangle(rng)
        ops = operators_for_triangle(coords, k)
        v = rng.standard_normal(local_dim(k))
        rc = ops.recon[0] @ v
        centroid = coords.mean(axis=0)
        h = float(np.linalg.norm(coords[[1, 2, 0]] - coords, axis=1).max())
        pts, wts = ps.map_triangle_rule(ps.triangle_rule(12), coords)
        rt = ps.eval_rt_basis(k, centroid, h, pts)
        field = np.einsum("qbc,b->qc", rt, rc)
        vk = ps.eval_monomials(ps.tri_exponents(k), centroid, h, pts)
        v0 = np.stack([vk @ v[interior_slice(k, 0)], vk @ v[interior_slice(k, 1)]], axis=-1)
        vg = ps.eval_monomials(ps.tri_exponents(k - 1), centroid, h, pts)
        gap = np.einsum("q,qi,qc->ic", wts, vg, field - v0)
        assert np.abs(gap).max() < 1e-10 * max(1.0, np.abs(v0).max())

    def test_normal_trace_identity(self, mesh_level3):
        for k in (1, 2, 3):
            assert normal_trace_gap(mesh_level3, k) < 1e-10


class TestStabilizer:
    def test_matching_trace_in_kernel(self, rng):
        coords = oracles.random_triangle(rng)
        s = stabilizer(coords, 1)
        v = linear_field_dofs(coords, 1)
        assert abs(v @ s @ v) < 1e-13 * max(1.0, np.abs(v).max() ** 2)

    def test_single_edge_constant(self):
        # v0 = 0, one edge carries constant c: v'Sv = |e| ||c||^2 / h
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        k = 1
        s = stabilizer(coords, k)
        c = np.array([0.7, -0.4])
        v = np.zeros(local_dim(k))
        v[edge_slice(k, 0, 0).start] = c[0]
        v[edge_slice(k, 0, 1).start] = c[1]
        h = np.sqrt(2.0)
        expect = 1.0 * (c @ c) / h
        assert abs(v @ s @ v - expect) < 1e-13

    def test_matches_oracle(self, rng):
        for k in (1, 2, 3):
            coords = oracles.random_triangle(rng)
            v = rng.standard_normal(local_dim(k))
            got = v @ stabilizer(coords, k) @ v
            want = v @ oracles.oracle_stabilizer(coords, k) @ v
            assert abs(got - want) <= 1e-11 * max(1.0, abs(want))

    def test_symmetric_psd(self, rng):
        s = stabilizer(oracles.random_triangle(rng), 2)
        assert np.abs(s - s.T).max() < 1e-14 * max(1.0, np.abs(s).max())
        assert np.linalg.eigvalsh(s).min() > -1e-12


class TestDivergenceIdentity:
    def test_level2_mesh(self, mesh_level2):
        ops = element_operators(mesh_level2, 1)
        assert divergence_identity_gap(ops) < 1e-10

    def test_random_triangle_k2(self, rng):
        assert divergence_identity_check(oracles.random_triangle(rng), 2)

    def test_detects_perturbation(self, rng):
        coords = oracles.random_triangle(rng)
        ops = operators_for_triangle(coords, 2)
        recon = ops.recon.copy()
        recon[0, 1, 2] += 1e-3
        div_map = ps.rt_divergence_matrix(2, ops.diameters)
        gap = np.abs(div_map @ recon - ops.div).max() / max(np.abs(ops.div).max(), 1.0)
        assert gap > 1e-6


class TestExactness:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_weak_gradient_exact_on_projected_polynomials(self, k, rng):
        # grad_w(Q_h p) = grad p for polynomial p of degree <= k
        from wgelast.assembly import dof_map
        from wgelast.study import polynomial_problem, project_onto_space

        mesh = build_square_mesh(2)
        ops = element_operators(mesh, k)
        dm = dof_map(mesh, k)
        exps = [(a, d - a) for d in range(k + 1) for a in range(d + 1)]
        prob = polynomial_problem({e: rng.standard_normal() for e in exps},
                                  {e: rng.standard_normal() for e in exps}, 1.0, 1.0)
        qh = project_onto_space(prob.u, mesh, k)
        z = qh[dm.element_dofs]
        gw = np.einsum("tab,tb->ta", ops.grad, z)
        mg = ps.tri_dim(k - 1)
        pts = mesh.tri_coords.mean(axis=1)
        vals = np.einsum("tcm,tm->tc",
                         gw.reshape(-1, 4, mg),
                         ps.eval_monomials(ps.tri_exponents(k - 1), ops.centroids,
                                           ops.diameters, pts))
        exact = prob.grad_u(pts).reshape(-1, 4)
        assert np.abs(vals - exact).max() < 1e-11 * max(1.0, np.abs(exact).max())

    def test_reconstruction_proximity_endpoint(self, rng):
        # matching traces make the reconstruction reproduce v0 exactly
        k = 2
        coords = oracles.random_triangle(rng)
        ops = operators_for_triangle(coords, k)
        v = linear_field_dofs(coords, k)
        rc = ops.recon[0] @ v
        pts, wts = ps.map_triangle_rule(ps.triangle_rule(10), coords)
        centroid, h = ops.centroids[0], float(ops.diameters[0])
        rt = ps.eval_rt_basis(k, centroid, h, pts)
        field = np.einsum("qbc,b->qc", rt, rc)
        vk = ps.eval_monomials(ps.tri_exponents(k), centroid, h, pts)
        v0 = np.stack([vk @ v[interior_slice(k, 0)], vk @ v[interior_slice(k, 1)]], axis=-1)
        assert np.sqrt(np.einsum("q,qc->", wts, (field - v0) ** 2)) < 1e-12


class TestGoldenReference:
    @pytest.mark.parametrize("k", [1, 2])
    def test_reference_triangle_operators(self, k):
        data = np.load(DATA / f"ref_ops_k{k}.npz")
        ops = operators_for_triangle(REF, k)
        for name, got in (("grad", ops.grad[0]), ("div", ops.div[0]),
                          ("recon", ops.recon[0]), ("stab", ops.stab[0])):
            want = data[name]
            assert np.abs(got - want).max() <= 1e-11 * max(1.0, np.abs(want).max())


class TestRtSpace:
    def test_dimension(self):
        for k in (1, 2, 3):
            assert RtSpace(k, REF).dim == (k + 1) * (k + 3)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_functional_matrix_conditioning(self, k):
        # interior moments scale with the area, edge moments with the edge
        # length, so the conditioning grows like 1/h; it stays finite with
        # ample headroom for double-precision solves
        worst = 0.0
        for level in (1, 2, 3, 4):
            mesh = build_square_mesh(level)
            space = RtSpace(k, mesh.tri_coords[0])
            worst = max(worst, space.condition_number())
        assert np.isfinite(worst) and worst < 1e9

    def test_divergence_matrix_against_quadrature(self, rng):
        k = 2
        coords = oracles.random_triangle(rng)
        space = RtSpace(k, coords)
        c = rng.standard_normal(space.dim)
        div_coeff = space.divergence_matrix() @ c
        pts = coords.mean(axis=0) + 0.05 * rng.standard_normal((10, 2))
        vk = ps.eval_monomials(ps.tri_exponents(k), space.centroid, space.diameter, pts)
        got = vk @ div_coeff
        eps = 1e-6
        ex = np.array([eps, 0.0])
        ey = np.array([0.0, eps])
        fd = ((np.einsum("qbc,b->qc", space.eval(pts + ex), c)[:, 0]
               - np.einsum("qbc,b->qc", space.eval(pts - ex), c)[:, 0])
              + (np.einsum("qbc,b->qc", space.eval(pts + ey), c)[:, 1]
                 - np.einsum("qbc,b->qc", space.eval(pts - ey), c)[:, 1])) / (2 * eps)
        assert np.abs(got - fd).max() < 1e-5 * max(1.0, np.abs(fd).max())
