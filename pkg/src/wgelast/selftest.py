"""Built-in verification suite behind ``wgelast run --selftest``.

Each check returns (name, passed, detail). The same invariants are covered
in more depth by the pytest suite; this module keeps the package
self-verifying without a test runner installed.
"""

from __future__ import annotations

import numpy as np

from . import kernels, oracles, polyspace as ps
from .assembly import assemble, dof_map, local_stiffness, matrix_parts, solve
from .kernels import available_backends, edge_slice, interior_slice, local_dim
from .localops import (divergence_identity_gap, element_operators,
                       normal_trace_gap, operators_for_triangle)
from .mesh import build_square_mesh, edge_geometry, export_mesh, import_mesh
from .study import (errors_against, error_equation_residual, example_problem,
                    patch_suite, polynomial_problem, project_onto_space,
                    triple_bar_norm)

REF_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _check_mesh():
    m1 = build_square_mesh(1)
    m2 = build_square_mesh(2)
    ok = (m1.n_triangles, m1.n_vertices, m1.n_edges) == (8, 9, 16)
    ok &= (m2.n_triangles, m2.n_vertices, m2.n_edges) == (32, 25, 56)
    ok &= abs(m2.tri_areas.sum() - 1.0) < 1e-12
    for lvl in (1, 2, 3):
        build_square_mesh(lvl).validate()
    node, ele = export_mesh(m1)
    m1b = import_mesh(node, ele)
    ok &= np.array_equal(np.sort(m1b.triangles, axis=1), np.sort(m1.triangles, axis=1))
    _, _, n = edge_geometry(m1, 0)
    ok &= abs(np.linalg.norm(n) - 1.0) < 1e-14
    return "mesh invariants", bool(ok), f"counts/Euler/areas/round-trip on levels 1-3"


def _check_quadrature():
    worst = 0.0
    for deg in range(1, 15):
        rule = ps.triangle_rule(deg)
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                num = float(np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b))
                import math
                exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                worst = max(worst, abs(num - exact) / exact)
        erule = ps.edge_rule(deg)
        for a in range(deg + 1):
            num = float(np.sum(erule.weights * erule.points ** a))
            exact = 0.0 if a % 2 else 2.0 / (a + 1)
            worst = max(worst, abs(num - exact))
    return "quadrature exactness", worst < 1e-13, f"max monomial defect {worst:.2e}"


def _check_projections():
    rng = np.random.default_rng(11)
    mesh = build_square_mesh(1)
    worst_val = worst_idem = 0.0
    for k in (1, 2, 3):
        # value reproduction of an in-space function on a random triangle
        coords = oracles.random_triangle(rng)
        coeff = rng.standard_normal((2, ps.tri_dim(k)))
        basis = ps.TriBasis(k, coords)
        f = lambda p: np.einsum("rm,...m->...r", coeff, basis.eval(p))
        proj = ps.project_element(f, coords, k)
        pts = coords.mean(axis=0) + 0.1 * rng.standard_normal((20, 2))
        got = np.einsum("rm,...m->...r", proj, basis.eval(pts))
        worst_val = max(worst_val, np.abs(got - f(pts)).max()
                        / max(1.0, np.abs(f(pts)).max()))
        # coefficient idempotence on mesh elements
        tcoords = mesh.tri_coords[0]
        tb = ps.TriBasis(k, tcoords)
        p1 = ps.project_element(lambda p: np.sin(3 * p[..., :1] + p[..., 1:]) * np.array([1.0, -2.0]),
                                tcoords, k)
        p2 = ps.project_element(lambda p: np.einsum("rm,...m->...r", p1, tb.eval(p)),
                                tcoords, k)
        worst_idem = max(worst_idem, np.abs(p2 - p1).max() / max(1.0, np.abs(p1).max()))
    ok = worst_val < 1e-12 and worst_idem < 1e-12
    return ("projection reproduction/idempotence", ok,
            f"value defect {worst_val:.2e}, idempotence defect {worst_idem:.2e}")


def _check_commutation():
    mesh = build_square_mesh(2)
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in (1, 2):
        ops = element_operators(mesh, k)
        dm = dof_map(mesh, k)
        for deg in range(1, k + 4):
            exps = [(a, d - a) for d in range(deg + 1) for a in range(d + 1)]
            prob = polynomial_problem({e: rng.standard_normal() for e in exps},
                                      {e: rng.standard_normal() for e in exps}, 1.0, 1.0)
            qh = project_onto_space(prob.u, mesh, k)
            z = qh[dm.element_dofs]
            gw = np.einsum("tab,tb->ta", ops.grad, z)
            dw = np.einsum("tab,tb->ta", ops.div, z)
            pig = ps.project_elements(prob.grad_u, mesh.tri_coords, k - 1, "matrix")
            pid = ps.project_elements(prob.div_u, mesh.tri_coords, k, "scalar")
            worst = max(worst, np.abs(gw - pig.reshape(gw.shape)).max()
                        / max(1.0, np.abs(pig).max()))
            worst = max(worst, np.abs(dw - pid[:, 0]).max() / max(1.0, np.abs(pid).max()))
    return "projection commutation", worst < 1e-10, f"max coefficient gap {worst:.2e}"


def _check_mass_spd():
    mesh = build_square_mesh(2)
    worst = np.inf
    for k in (1, 2, 3, 4):
        ops = element_operators(mesh, k)
        worst = min(worst, np.linalg.eigvalsh(ops.mass_k).min())
    return "element mass SPD", worst > 0, f"smallest eigenvalue {worst:.3e}"


def _check_operator_oracles(n_trials=30):
    rng = np.random.default_rng(42)
    worst = 0.0
    for k in (1, 2, 3):
        for _ in range(n_trials):
            coords = oracles.random_triangle(rng)
            ops = operators_for_triangle(coords, k)
            pairs = [
                (ops.grad[0], oracles.oracle_weak_gradient(coords, k)),
                (ops.div[0], oracles.oracle_weak_divergence(coords, k)),
                (ops.recon[0], oracles.oracle_rt_reconstruction(coords, k)),
                (ops.stab[0], oracles.oracle_stabilizer(coords, k)),
            ]
            for got, want in pairs:
                worst = max(worst, np.abs(got - want).max() / max(1.0, np.abs(want).max()))
    return "operator oracles", worst < 1e-10, f"max relative gap {worst:.2e} ({n_trials}/degree)"


def _check_flux_identities():
    mesh = build_square_mesh(3)
    worst_div = worst_tr = 0.0
    for k in (1, 2, 3):
        ops = element_operators(mesh, k)
        worst_div = max(worst_div, divergence_identity_gap(ops))
        worst_tr = max(worst_tr, normal_trace_gap(mesh, k, ops))
    ok = worst_div < 1e-10 and worst_tr < 1e-10
    return "flux identities", ok, f"div gap {worst_div:.2e}, normal-trace gap {worst_tr:.2e}"


def _check_backends():
    if "compiled" not in available_backends():
        return "kernel backends", True, "compiled core not built; python fallback only"
    mesh = build_square_mesh(2)
    worst = 0.0
    for k in (1, 2, 3):
        a = element_operators(mesh, k, backend="python")
        b = element_operators(mesh, k, backend="compiled")
        for name in ("grad", "div", "recon", "stab", "grad_form", "div_form"):
            x, y = getattr(a, name), getattr(b, name)
            worst = max(worst, np.abs(x - y).max() / max(1.0, np.abs(x).max()))
    return "kernel backends", worst < 1e-12, f"max backend difference {worst:.2e}"


def _check_local_stiffness():
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in (1, 2):
        for coords in (REF_TRIANGLE, oracles.random_triangle(rng)):
            got = local_stiffness(coords, k, 1.0, 1.0)
            want = oracles.oracle_local_stiffness(coords, k, 1.0, 1.0)
            worst = max(worst, np.abs(got - want).max() / max(1.0, np.abs(want).max()))
            worst = max(worst, np.abs(got - got.T).max() / max(1.0, np.abs(got).max()))
    return "local stiffness oracle", worst < 1e-10, f"max relative gap {worst:.2e}"


def _check_assembled_structure():
    mesh = build_square_mesh(2)
    k = 1
    prob = example_problem(1, 1.0, 1e6)
    system, dm, _ = assemble(mesh, k, 1.0, 1e6, "robust", prob.f, prob.ghat)
    dense = system.matrix.toarray()
    sym = np.abs(dense - dense.T).max() / np.abs(dense).max()
    lam_min = np.linalg.eigvalsh(dense).min()
    n = 2 ** 2
    expect = 2 * n * n * (k + 1) * (k + 2) + (3 * n * n + 2 * n) * 2 * (k + 1)
    kg, kd, ks = matrix_parts(mesh, k)
    a1 = (1.0 * kg + 2.0 * kd + ks).toarray()
    a2 = (1.0 * kg + (1e6 + 1) * kd + ks).toarray()
    gap = np.abs((a2 - a1) - (1e6 - 1) * kd.toarray()).max() / np.abs(a2).max()
    sysr, _, _ = assemble(mesh, k, 1.0, 7.0, "robust", prob.f, prob.ghat)
    syss, _, _ = assemble(mesh, k, 1.0, 7.0, "standard", prob.f, prob.ghat)
    same = (sysr.matrix != syss.matrix).nnz == 0
    ok = sym < 1e-12 and lam_min > 0 and dm.total == expect and gap < 1e-12 and same
    return ("assembled matrix structure", bool(ok),
            f"sym {sym:.1e}, min eig {lam_min:.3e}, dofs {dm.total}=={expect}, "
            f"lambda-split gap {gap:.1e}, variants share matrix: {same}")


def _check_patch_tests():
    worst = 0.0
    for k in (1, 2, 3):
        for cx, cy in patch_suite(k):
            prob = polynomial_problem(cx, cy, 1.0, 1.0)
            for level in (1, 2, 3):
                mesh = build_square_mesh(level)
                ops = element_operators(mesh, k)
                system, dm, _ = assemble(mesh, k, 1.0, 1.0, "robust",
                                         prob.f, prob.ghat, ops=ops)
                uh = solve(system)
                energy, _ = errors_against(prob.u, uh, mesh, k, ops)
                bound = 1e-9 * max(1.0, np.linalg.norm(uh.values))
                worst = max(worst, energy / bound)
    return "patch tests", worst < 1.0, f"worst energy/bound ratio {worst:.2e}"


def _check_manufactured():
    rng = np.random.default_rng(9)
    pts = rng.uniform(0.05, 0.95, size=(50, 2))
    worst = 0.0
    for ex in (1, 2, 3):
        for lam in (1.0, 1e6):
            prob = example_problem(ex, 1.0, lam)
            worst = max(worst, prob.pde_residual(pts))
    # finite-difference cross-check of the closures
    eps = 1e-5
    fd_worst = 0.0
    for ex in (1, 2, 3):
        prob = example_problem(ex, 1.0, 2.0)
        e1 = np.array([eps, 0.0])
        e2 = np.array([0.0, eps])
        lap_fd = (prob.u(pts + e1) + prob.u(pts - e1) + prob.u(pts + e2)
                  + prob.u(pts - e2) - 4 * prob.u(pts)) / eps ** 2
        fd_worst = max(fd_worst, np.abs(lap_fd - prob.laplacian_u(pts)).max()
                       / max(1.0, np.abs(lap_fd).max()))
        div_fd = ((prob.u(pts + e1) - prob.u(pts - e1))[..., 0]
                  + (prob.u(pts + e2) - prob.u(pts - e2))[..., 1]) / (2 * eps)
        fd_worst = max(fd_worst, np.abs(div_fd - prob.div_u(pts)).max()
                       / max(1.0, np.abs(div_fd).max()))
    ok = worst < 1e-9 and fd_worst < 1e-5
    return "manufactured solutions", ok, f"pde residual {worst:.2e}, fd gap {fd_worst:.2e}"


def _check_triple_bar():
    mesh = build_square_mesh(1)
    k = 2
    dm = dof_map(mesh, k)
    rng = np.random.default_rng(19)
    values = rng.standard_normal(dm.total)
    got = triple_bar_norm(values, mesh, k)
    want = oracles.oracle_triple_bar(values, mesh, k)
    gap = abs(got - want) / want
    return "energy seminorm oracle", gap < 1e-10, f"relative gap {gap:.2e}"


def _check_error_equation():
    worst = 0.0
    for k, coeffs in ((1, ({(2, 0): 1.0}, {(1, 1): 1.0})),
                      (2, ({(3, 0): 1.0}, {(0, 3): 1.0}))):
        for lam in (1.0, 1e4):
            prob = polynomial_problem(coeffs[0], coeffs[1], 1.0, lam)
            for level in (2, 3):
                mesh = build_square_mesh(level)
                worst = max(worst, error_equation_residual(prob, mesh, k))
    return "error-equation audit", worst < 1e-9, f"max residual {worst:.2e}"


def _check_solver():
    mesh = build_square_mesh(3)
    k = 1
    prob = example_problem(1, 1.0, 1.0)
    ops = element_operators(mesh, k)
    system, dm, _ = assemble(mesh, k, 1.0, 1.0, "robust", prob.f, prob.ghat, ops=ops)
    rng = np.random.default_rng(2)
    x_ref = rng.standard_normal(dm.n_free)
    system.rhs = system.matrix @ x_ref
    x = solve(system).values[dm.free]
    gap = np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref)
    # condensation agrees with the direct path
    sys_c, _, _ = assemble(mesh, k, 1.0, 1.0, "robust", prob.f, prob.ghat,
                           ops=ops, condense=True)
    sys_d, _, _ = assemble(mesh, k, 1.0, 1.0, "robust", prob.f, prob.ghat, ops=ops)
    uc = solve(sys_c).values
    ud = solve(sys_d).values
    cgap = np.abs(uc - ud).max() / max(1.0, np.abs(ud).max())
    ok = gap < 1e-9 and cgap < 1e-10
    return "solver and condensation", ok, f"recovery gap {gap:.2e}, condensation gap {cgap:.2e}"


_CHECKS = [
    _check_mesh, _check_quadrature, _check_projections, _check_commutation,
    _check_mass_spd, _check_operator_oracles, _check_flux_identities,
    _check_backends, _check_local_stiffness, _check_assembled_structure,
    _check_patch_tests, _check_manufactured, _check_triple_bar,
    _check_error_equation, _check_solver,
]


def run_selftest():
    """Run every check; returns a list of (name, passed, detail)."""
    results = []
    for check in _CHECKS:
        try:
            results.append(check())
        except Exception as exc:
            results.append((check.__name__, False, f"raised {exc!r}"))
    return results
