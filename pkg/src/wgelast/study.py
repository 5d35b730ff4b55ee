"""Manufactured problems, discrete norms, and convergence studies.

The three built-in problems on the unit square (all with Dirichlet data
equal to the exact trace):

1. smooth sinusoidal displacement, the basic convergence test;
2. a divergence-free field plus a 1/(lam+mu)-scaled compressible part,
   the classic near-incompressibility test;
3. equal-component sinusoidal displacement whose divergence does not
   vanish, so the grad-div term grows linearly with lam and exposes
   locking of the standard scheme.

Errors are measured against the element/edge L2 projections of the exact
solution: the discrete energy seminorm combines weak-gradient norms with
the scaled boundary penalty, and the displacement error is the element L2
norm of the interior mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import polyspace as ps
from .assembly import (DofMap, WgField, _scatter, assemble, dof_map, load_vector,
                       solve)
from .kernels import ElementOperators, edge_slice, interior_dim, interior_slice, local_dim
from .localops import element_operators
from .mesh import Mesh, build_square_mesh

_CHUNK = 8192


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact solution closures plus the matching body force and boundary data.

    All callables are vectorized over a trailing coordinate axis:
    u(pts[..., 2]) -> (..., 2), grad_u -> (..., 2, 2) with entry (i, j)
    holding du_i/dx_j, div_u -> (...), laplacian_u / grad_div_u / f / ghat
    -> (..., 2).
    """

    label: str
    mu: float
    lam: float
    u: callable
    grad_u: callable
    div_u: callable
    laplacian_u: callable
    grad_div_u: callable
    f: callable
    ghat: callable

    def pde_residual(self, pts) -> float:
        """Relative mismatch of -mu*lap(u) - (lam+mu)*grad(div u) against f."""
        lhs = -self.mu * self.laplacian_u(pts) - (self.lam + self.mu) * self.grad_div_u(pts)
        rhs = self.f(pts)
        scale = max(float(np.abs(rhs).max()), 1.0)
        return float(np.abs(lhs - rhs).max() / scale)


def example_problem(example_id: int, mu: float, lam: float) -> ManufacturedProblem:
    """One of the three built-in manufactured problems."""
    if not (mu > 0 and lam > 0):
        raise ValueError("Lame constants must be positive")
    pi = np.pi
    if example_id == 1:
        def u(p):
            x, y = p[..., 0], p[..., 1]
            return np.stack([np.sin(pi * x) * np.cos(pi * y),
                             np.cos(pi * x) * np.sin(pi * y)], axis=-1)

        def grad_u(p):
            x, y = p[..., 0], p[..., 1]
            cc = pi * np.cos(pi * x) * np.cos(pi * y)
            ss = -pi * np.sin(pi * x) * np.sin(pi * y)
            return np.stack([np.stack([cc, ss], axis=-1),
                             np.stack([ss, cc], axis=-1)], axis=-2)

        def div_u(p):
            x, y = p[..., 0], p[..., 1]
            return 2 * pi * np.cos(pi * x) * np.cos(pi * y)

        lap = lambda p: -2 * pi ** 2 * u(p)
        gdiv = lambda p: -2 * pi ** 2 * u(p)
        f = lambda p: 2 * pi ** 2 * (lam + 2 * mu) * u(p)
        return ManufacturedProblem("smooth sinusoidal", mu, lam,
                                   u, grad_u, div_u, lap, gdiv, f, u)

    if example_id == 2:
        c = 1.0 / (lam + mu)

        def u(p):
            x, y = p[..., 0], p[..., 1]
            s = np.sin(pi * x) * np.sin(pi * y)
            return np.stack([-(1 - np.cos(2 * pi * x)) * np.sin(2 * pi * y) + c * s,
                             (1 - np.cos(2 * pi * y)) * np.sin(2 * pi * x) + c * s], axis=-1)

        def grad_u(p):
            x, y = p[..., 0], p[..., 1]
            sx, cx = np.sin(pi * x), np.cos(pi * x)
            sy, cy = np.sin(pi * y), np.cos(pi * y)
            s2x, c2x = np.sin(2 * pi * x), np.cos(2 * pi * x)
            s2y, c2y = np.sin(2 * pi * y), np.cos(2 * pi * y)
            d11 = -2 * pi * s2x * s2y + c * pi * cx * sy
            d12 = -2 * pi * c2y + 2 * pi * c2x * c2y + c * pi * sx * cy
            d21 = 2 * pi * c2x - 2 * pi * c2x * c2y + c * pi * cx * sy
            d22 = 2 * pi * s2x * s2y + c * pi * sx * cy
            return np.stack([np.stack([d11, d12], axis=-1),
                             np.stack([d21, d22], axis=-1)], axis=-2)

        def div_u(p):
            x, y = p[..., 0], p[..., 1]
            return c * pi * (np.cos(pi * x) * np.sin(pi * y)
                             + np.sin(pi * x) * np.cos(pi * y))

        def laplacian_u(p):
            x, y = p[..., 0], p[..., 1]
            s = np.sin(pi * x) * np.sin(pi * y)
            s2x, c2x = np.sin(2 * pi * x), np.cos(2 * pi * x)
            s2y, c2y = np.sin(2 * pi * y), np.cos(2 * pi * y)
            l1 = 4 * pi ** 2 * s2y - 8 * pi ** 2 * c2x * s2y - 2 * pi ** 2 * c * s
            l2 = -4 * pi ** 2 * s2x + 8 * pi ** 2 * s2x * c2y - 2 * pi ** 2 * c * s
            return np.stack([l1, l2], axis=-1)

        def grad_div_u(p):
            x, y = p[..., 0], p[..., 1]
            g = c * pi ** 2 * (np.cos(pi * x) * np.cos(pi * y)
                               - np.sin(pi * x) * np.sin(pi * y))
            return np.stack([g, g], axis=-1)

        def f(p):
            x, y = p[..., 0], p[..., 1]
            s = np.sin(pi * x) * np.sin(pi * y)
            s2x, c2x = np.sin(2 * pi * x), np.cos(2 * pi * x)
            s2y, c2y = np.sin(2 * pi * y), np.cos(2 * pi * y)
            f1 = -4 * pi ** 2 * mu * (-c2x * s2y - s2y * (c2x - 1))
            f2 = -4 * pi ** 2 * mu * (c2y * s2x + s2x * (c2y - 1))
            grd = pi ** 2 * (np.cos(pi * x) * np.cos(pi * y) - s)
            add = 2 * pi ** 2 * mu * c * s
            return np.stack([f1 + add - grd, f2 + add - grd], axis=-1)

        return ManufacturedProblem("divergence-free plus compressible", mu, lam,
                                   u, grad_u, div_u, laplacian_u, grad_div_u, f, u)

    if example_id == 3:
        def u(p):
            x, y = p[..., 0], p[..., 1]
            s = np.sin(pi * x) * np.sin(pi * y)
            return np.stack([s, s], axis=-1)

        def grad_u(p):
            x, y = p[..., 0], p[..., 1]
            gx = pi * np.cos(pi * x) * np.sin(pi * y)
            gy = pi * np.sin(pi * x) * np.cos(pi * y)
            return np.stack([np.stack([gx, gy], axis=-1),
                             np.stack([gx, gy], axis=-1)], axis=-2)

        def div_u(p):
            x, y = p[..., 0], p[..., 1]
            return pi * (np.cos(pi * x) * np.sin(pi * y)
                         + np.sin(pi * x) * np.cos(pi * y))

        lap = lambda p: -2 * pi ** 2 * u(p)

        def grad_div_u(p):
            x, y = p[..., 0], p[..., 1]
            g = pi ** 2 * (np.cos(pi * x) * np.cos(pi * y)
                           - np.sin(pi * x) * np.sin(pi * y))
            return np.stack([g, g], axis=-1)

        def f(p):
            x, y = p[..., 0], p[..., 1]
            s = np.sin(pi * x) * np.sin(pi * y)
            g = pi ** 2 * (np.cos(pi * x) * np.cos(pi * y) - s)
            f1 = -mu * (-2 * pi ** 2 * s) - (lam + mu) * g
            return np.stack([f1, f1], axis=-1)

        return ManufacturedProblem("nonzero divergence", mu, lam,
                                   u, grad_u, div_u, lap, grad_div_u, f, u)

    raise ValueError(f"unknown example id {example_id!r} (expected 1, 2, or 3)")


# ---------------------------------------------------------------------------
# polynomial exact solutions (patch tests, error-equation audit)
# ---------------------------------------------------------------------------

def _poly_diff(coeffs: dict, axis: int) -> dict:
    out = {}
    for (a, b), c in coeffs.items():
        if axis == 0 and a > 0:
            out[(a - 1, b)] = out.get((a - 1, b), 0.0) + a * c
        elif axis == 1 and b > 0:
            out[(a, b - 1)] = out.get((a, b - 1), 0.0) + b * c
    return out


def _poly_add(*terms) -> dict:
    out = {}
    for scale, coeffs in terms:
        for key, c in coeffs.items():
            out[key] = out.get(key, 0.0) + scale * c
    return out


def _poly_eval(coeffs: dict, x, y):
    out = np.zeros(np.broadcast(x, y).shape)
    for (a, b), c in coeffs.items():
        out += c * x ** a * y ** b
    return out


def polynomial_problem(coeff_x: dict, coeff_y: dict, mu: float, lam: float,
                       label: str = "polynomial") -> ManufacturedProblem:
    """Manufactured problem for u = (sum c x^a y^b, ...), with the body
    force derived from the operator so every closure is exact."""
    cx, cy = dict(coeff_x), dict(coeff_y)
    dx_cx, dy_cx = _poly_diff(cx, 0), _poly_diff(cx, 1)
    dx_cy, dy_cy = _poly_diff(cy, 0), _poly_diff(cy, 1)
    div_c = _poly_add((1.0, dx_cx), (1.0, dy_cy))
    lap_x = _poly_add((1.0, _poly_diff(dx_cx, 0)), (1.0, _poly_diff(dy_cx, 1)))
    lap_y = _poly_add((1.0, _poly_diff(dx_cy, 0)), (1.0, _poly_diff(dy_cy, 1)))
    gd_x, gd_y = _poly_diff(div_c, 0), _poly_diff(div_c, 1)
    f_x = _poly_add((-mu, lap_x), (-(lam + mu), gd_x))
    f_y = _poly_add((-mu, lap_y), (-(lam + mu), gd_y))

    def vec(cu, cv):
        return lambda p: np.stack([_poly_eval(cu, p[..., 0], p[..., 1]),
                                   _poly_eval(cv, p[..., 0], p[..., 1])], axis=-1)

    u = vec(cx, cy)

    def grad_u(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([
            np.stack([_poly_eval(dx_cx, x, y), _poly_eval(dy_cx, x, y)], axis=-1),
            np.stack([_poly_eval(dx_cy, x, y), _poly_eval(dy_cy, x, y)], axis=-1),
        ], axis=-2)

    return ManufacturedProblem(
        label, mu, lam, u, grad_u,
        lambda p: _poly_eval(div_c, p[..., 0], p[..., 1]),
        vec(lap_x, lap_y), vec(gd_x, gd_y), vec(f_x, f_y), u)


def patch_suite(k: int):
    """Five global polynomial solutions of degree <= k."""
    one = {(0, 0): 1.0}
    x, y = {(1, 0): 1.0}, {(0, 1): 1.0}
    suites = {
        1: [
            (one, {(0, 0): -2.0}),
            (x, y),
            (y, {(1, 0): -1.0}),
            ({(1, 0): 1.0, (0, 1): 2.0}, {(1, 0): 3.0, (0, 1): -1.0}),
            ({(0, 0): 1.0, (1, 0): 2.0, (0, 1): -1.0}, {(0, 0): -3.0, (1, 0): 1.0, (0, 1): 4.0}),
        ],
        2: [
            ({(2, 0): 1.0}, {(1, 1): 1.0}),
            ({(2, 0): 1.0, (0, 2): -1.0}, {(1, 1): 2.0}),
            ({(1, 1): 1.0}, {(0, 2): 1.0}),
            ({(2, 0): 1.0, (0, 2): 1.0}, {(1, 0): 1.0, (0, 2): -1.0}),
            ({(0, 0): 2.0, (1, 0): 1.0, (0, 1): -1.0, (2, 0): 1.0},
             {(0, 1): 1.0, (1, 1): 1.0, (0, 2): -1.0}),
        ],
        3: [
            ({(3, 0): 1.0}, {(0, 3): 1.0}),
            ({(2, 1): 1.0}, {(1, 2): 1.0}),
            ({(3, 0): 1.0, (1, 2): -3.0}, {(2, 1): 3.0, (0, 3): -1.0}),
            ({(1, 0): 1.0, (3, 0): 1.0}, {(0, 1): 1.0, (0, 3): -1.0}),
            ({(2, 0): 1.0, (0, 3): 1.0}, {(3, 0): 1.0, (0, 1): -1.0}),
        ],
    }
    if k not in suites:
        raise ValueError(f"no patch suite for degree {k}")
    return suites[k]


# ---------------------------------------------------------------------------
# norms, errors, projections
# ---------------------------------------------------------------------------

def project_onto_space(u, mesh: Mesh, k: int, quad_degree: int | None = None) -> np.ndarray:
    """Global coefficient vector of the element/edge L2 projections of u."""
    dm = dof_map(mesh, k)
    out = np.empty(dm.total)
    coords = mesh.tri_coords
    ni = interior_dim(k)
    for lo in range(0, mesh.n_triangles, _CHUNK):
        hi = min(lo + _CHUNK, mesh.n_triangles)
        coeffs = ps.project_elements(u, coords[lo:hi], k, "vector", quad_degree)
        out[lo * ni:hi * ni] = coeffs.reshape(-1)
    eb = 2 * (k + 1)
    pts = mesh.vertices[mesh.edges]
    for lo in range(0, mesh.n_edges, 4 * _CHUNK):
        hi = min(lo + 4 * _CHUNK, mesh.n_edges)
        coeffs = ps.project_edges(u, k, pts[lo:hi, 0], pts[lo:hi, 1], quad_degree)
        out[dm.interior_total + lo * eb:dm.interior_total + hi * eb] = coeffs.reshape(-1)
    return out


def triple_bar_norm(values, mesh: Mesh, k: int,
                    ops: ElementOperators | None = None) -> float:
    """Discrete energy seminorm: weak-gradient L2 norms plus the scaled
    boundary penalty (a norm on the zero-trace subspace)."""
    if isinstance(values, WgField):
        values = values.values
    if ops is None:
        ops = element_operators(mesh, k)
    dm = dof_map(mesh, k)
    z = values[dm.element_dofs]
    sq = (np.einsum("tl,tlm,tm->", z, ops.grad_form, z, optimize=True)
          + np.einsum("tl,tlm,tm->", z, ops.stab, z, optimize=True))
    return math.sqrt(max(sq, 0.0))


def errors_against(u_exact, u_h: WgField, mesh: Mesh, k: int,
                   ops: ElementOperators | None = None,
                   quad_degree: int | None = None):
    """(energy_error, l2_error) of a discrete solution against an exact one.

    Both errors are measured relative to the projection of the exact
    solution: the energy error in the discrete seminorm, the displacement
    error as the element-wise L2 norm of the interior coefficient mismatch.
    """
    if ops is None:
        ops = element_operators(mesh, k)
    qh = project_onto_space(u_exact, mesh, k, quad_degree)
    diff = qh - u_h.values
    energy = triple_bar_norm(diff, mesh, k, ops)

    dm = u_h.dofmap
    m = ps.tri_dim(k)
    d_int = diff[:dm.interior_total].reshape(dm.n_elements, 2, m)
    l2sq = np.einsum("trm,tmn,trn->", d_int, ops.mass_k, d_int, optimize=True)
    return energy, math.sqrt(max(l2sq, 0.0))


# ---------------------------------------------------------------------------
# error-equation audit
# ---------------------------------------------------------------------------

def _theta_vector(problem: ManufacturedProblem, mesh: Mesh, k: int,
                  ops: ElementOperators, dm: DofMap, qh: np.ndarray,
                  stab_matrix: sp.csr_matrix) -> np.ndarray:
    """Consistency functional: boundary gradient-gap term, minus the
    reconstruction-gap term, plus the stabilizer acting on the projection."""
    mu = problem.mu
    qd = ps.data_exactness(k)
    coords = mesh.tri_coords
    theta = stab_matrix @ qh

    # projection of grad u onto the matrix polynomial space, per element
    pi_grad = ps.project_elements(problem.grad_u, coords, k - 1, "matrix", qd)

    erule = ps.edge_rule(qd)
    tvals = ps.eval_edge_monomials(k, erule.points)
    expg = ps.tri_exponents(k - 1)
    expk = ps.tri_exponents(k)
    ecoords = mesh.tri_edge_coords
    loc = np.zeros((mesh.n_triangles, local_dim(k)))
    for e in range(3):
        pts, wts = ps.map_edge_rule(erule, ecoords[:, e, 0], ecoords[:, e, 1])
        vg = ps.eval_monomials(expg, ops.centroids[:, None], ops.diameters[:, None], pts)
        vk = ps.eval_monomials(expk, ops.centroids[:, None], ops.diameters[:, None], pts)
        mats = np.einsum("tcm,tqm->tqc", pi_grad, vg, optimize=True)
        gap = problem.grad_u(pts) - mats.reshape(mats.shape[:2] + (2, 2))
        gn = np.einsum("tqrc,tc->tqr", gap, ops.normals_out[:, e], optimize=True)
        mint = mu * np.einsum("tq,tqj,tqr->trj", wts, vk, gn, optimize=True)
        medge = mu * np.einsum("tq,ql,tqr->trl", wts, tvals, gn, optimize=True)
        for r in range(2):
            loc[:, interior_slice(k, r)] += mint[:, r]
            loc[:, edge_slice(k, e, r)] -= medge[:, r]

    # reconstruction-gap term (Delta u, v0 - R(v))
    trule = ps.triangle_rule(qd)
    pts, wts = ps.map_triangle_rule(trule, coords)
    vk = ps.eval_monomials(expk, ops.centroids[:, None], ops.diameters[:, None], pts)
    rt = ps.eval_rt_basis(k, ops.centroids[:, None], ops.diameters[:, None], pts)
    lap = problem.laplacian_u(pts)
    mint = np.einsum("tq,tqj,tqr->trj", wts, vk, lap, optimize=True)
    mrt = np.einsum("tq,tqbc,tqc->tb", wts, rt, lap, optimize=True)
    kappa = -np.einsum("tb,tbl->tl", mrt, ops.recon, optimize=True)
    kappa[:, :interior_dim(k)] += mint.reshape(mesh.n_triangles, -1)
    loc -= mu * kappa

    np.add.at(theta, dm.element_dofs, loc)
    return theta


def error_equation_residual(problem: ManufacturedProblem, mesh: Mesh, k: int,
                            ops: ElementOperators | None = None) -> float:
    """Largest free-dof mismatch between A(e_h, v) and the consistency
    functional, relative to the largest matrix entry. For exact solutions
    polynomial of degree <= k+1 every underlying integral is computed
    exactly, so this is a machine-precision identity."""
    if ops is None:
        ops = element_operators(mesh, k)
    system, dm, _ = assemble(mesh, k, problem.mu, problem.lam, "robust",
                             problem.f, problem.ghat, ops=ops)
    uh = solve(system)
    qh = project_onto_space(problem.u, mesh, k)
    eh = qh - uh.values

    stab = _scatter(0.5 * (ops.stab + np.swapaxes(ops.stab, 1, 2)), dm)
    theta = _theta_vector(problem, mesh, k, ops, dm, qh, stab)
    lhs = system.matrix_full @ eh
    scale = float(np.abs(system.matrix_full.data).max()) if system.matrix_full.nnz else 1.0
    return float(np.abs((lhs - theta)[dm.free]).max() / scale)


# ---------------------------------------------------------------------------
# convergence tables
# ---------------------------------------------------------------------------

@dataclass
class TableRow:
    level: int
    h: float
    ndof: int
    energy_err: float
    energy_order: float | None
    l2_err: float
    l2_order: float | None


@dataclass
class ConvergenceTable:
    example: int
    label: str
    degree: int
    mu: float
    lam: float
    variant: str
    rows: list = field(default_factory=list)

    def add(self, level: int, h: float, ndof: int, energy: float, l2: float):
        eo = lo = None
        if self.rows:
            prev = self.rows[-1]
            eo = math.log2(prev.energy_err / energy) if energy > 0 and prev.energy_err > 0 else None
            lo = math.log2(prev.l2_err / l2) if l2 > 0 and prev.l2_err > 0 else None
        self.rows.append(TableRow(level, h, ndof, energy, eo, l2, lo))


def convergence_study(example_id: int, k: int, levels, mu: float, lam: float,
                      variant: str = "robust", condense: bool = False,
                      backend: str | None = None,
                      residual_tol: float = 1e-11) -> ConvergenceTable:
    """Solve the chosen problem on a sequence of mesh levels and tabulate
    errors and observed orders (log2 ratios, since each level halves h)."""
    levels = list(levels)
    if levels != sorted(levels):
        raise ValueError("levels must be ascending")
    problem = example_problem(example_id, mu, lam)
    table = ConvergenceTable(example_id, problem.label, k, mu, lam, variant)
    for level in levels:
        try:
            mesh = build_square_mesh(level)
            ops = element_operators(mesh, k, backend)
            system, dm, _ = assemble(mesh, k, mu, lam, variant, problem.f,
                                     problem.ghat, ops=ops, condense=condense)
            uh = solve(system, residual_tol)
            energy, l2 = errors_against(problem.u, uh, mesh, k, ops)
        except Exception as exc:
            raise RuntimeError(f"study failed at level {level}: {exc}") from exc
        table.add(level, mesh.h, dm.total, energy, l2)
    return table
