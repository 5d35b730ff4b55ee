"""Global assembly and solution of the weak Galerkin elasticity system.

The bilinear form splits into three geometry-only parts,

    A(mu, lam) = mu * A_grad + (lam + mu) * A_div + A_stab,

assembled once per (mesh, degree) and combined linearly, so sweeping the
Lame constants never re-integrates anything. The two scheme variants share
the matrix and differ only in the right-hand side: the robust one tests the
body force against the H(div) reconstruction of the test function, the
standard one against its interior part.

Dirichlet data enters through edge-wise L2 projection; constrained edge
blocks are eliminated (folded into the right-hand side), which keeps the
free-dof matrix symmetric positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import polyspace as ps
from .kernels import ElementOperators, edge_block_dim, interior_dim, local_dim
from .localops import element_operators
from .mesh import Mesh

_CHUNK = 8192


class SolverError(RuntimeError):
    """Raised when the sparse solve breaks down or misses its residual."""


@dataclass(frozen=True)
class DofMap:
    """Global numbering: all interior blocks element by element, then all
    edge blocks edge by edge; boundary-edge blocks are the constrained set."""

    k: int
    n_elements: int
    n_edges: int
    interior_total: int
    total: int
    element_dofs: np.ndarray      # (nt, nloc) global index of each local dof
    free: np.ndarray              # (total,) bool mask
    boundary_edges: np.ndarray    # indices of constrained edges

    def __post_init__(self):
        self.element_dofs.setflags(write=False)
        self.free.setflags(write=False)
        self.boundary_edges.setflags(write=False)

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    @property
    def n_constrained(self) -> int:
        return self.total - self.n_free

    def edge_block(self, edge_index: int) -> slice:
        eb = edge_block_dim(self.k)
        start = self.interior_total + edge_index * eb
        return slice(start, start + eb)


@dataclass
class SparseSystem:
    """Reduced SPD system plus everything needed to undo the reduction."""

    matrix: sp.csr_matrix         # free x free (condensed: free edge dofs only)
    rhs: np.ndarray
    dofmap: DofMap
    boundary_values: np.ndarray   # (total,), zero off the constrained blocks
    matrix_full: sp.csr_matrix | None = None
    condensed: bool = False
    # condensed-path data: per-element stiffness blocks and the full load,
    # kept for matrix-free residual refinement and interior recovery
    local_blocks: np.ndarray | None = None
    load_full: np.ndarray | None = None


@dataclass
class WgField:
    """Coefficient vector of a weak function over all dofs of a DofMap."""

    values: np.ndarray
    dofmap: DofMap

    def element_values(self) -> np.ndarray:
        """(nt, nloc) local coefficient vectors."""
        return self.values[self.dofmap.element_dofs]


def dof_map(mesh: Mesh, k: int) -> DofMap:
    k = ps.check_degree(k)
    nt, ne = mesh.n_triangles, mesh.n_edges
    ni = interior_dim(k)
    eb = edge_block_dim(k)
    interior_total = nt * ni
    total = interior_total + ne * eb

    elem = np.empty((nt, local_dim(k)), dtype=np.int64)
    elem[:, :ni] = np.arange(nt)[:, None] * ni + np.arange(ni)
    edge_start = interior_total + mesh.tri_edges * eb            # (nt, 3)
    elem[:, ni:] = (edge_start[:, :, None] + np.arange(eb)).reshape(nt, 3 * eb)

    free = np.ones(total, dtype=bool)
    boundary = np.flatnonzero(mesh.edge_is_boundary)
    cols = interior_total + (boundary[:, None] * eb + np.arange(eb)).ravel()
    free[cols] = False

    return DofMap(k=k, n_elements=nt, n_edges=ne, interior_total=interior_total,
                  total=total, element_dofs=elem, free=free, boundary_edges=boundary)


def _scatter(data: np.ndarray, dm: DofMap) -> sp.csr_matrix:
    """Sum (nt, nloc, nloc) local blocks into a full-dof CSR matrix."""
    idx = dm.element_dofs.astype(np.int32)
    rows = np.broadcast_to(idx[:, :, None], data.shape).ravel()
    cols = np.broadcast_to(idx[:, None, :], data.shape).ravel()
    mat = sp.coo_matrix((data.ravel(), (rows, cols)), shape=(dm.total, dm.total))
    return mat.tocsr()


def matrix_parts(mesh: Mesh, k: int, ops: ElementOperators | None = None,
                 dm: DofMap | None = None):
    """Assembled (A_grad, A_div, A_stab) over all dofs."""
    if ops is None:
        ops = element_operators(mesh, k)
    if dm is None:
        dm = dof_map(mesh, k)
    sym = lambda a: 0.5 * (a + np.swapaxes(a, 1, 2))
    return (_scatter(sym(ops.grad_form), dm),
            _scatter(sym(ops.div_form), dm),
            _scatter(sym(ops.stab), dm))


def local_stiffness(coords, k: int, mu: float, lam: float) -> np.ndarray:
    """Single-element stiffness mu*G'MG + (lam+mu)*D'MD + S."""
    from .localops import operators_for_triangle
    ops = operators_for_triangle(coords, k)
    a = mu * ops.grad_form[0] + (lam + mu) * ops.div_form[0] + ops.stab[0]
    return 0.5 * (a + a.T)


def _interior_load(f, coords, k, quad_degree):
    """(nt, 2, m) moments of f against the interior basis."""
    rule = ps.triangle_rule(quad_degree)
    pts, wts = ps.map_triangle_rule(rule, coords)
    centers = coords.mean(axis=1)
    h = np.linalg.norm(coords[:, [1, 2, 0]] - coords, axis=2).max(axis=1)
    vals = ps.eval_monomials(ps.tri_exponents(k), centers[:, None], h[:, None], pts)
    fv = np.asarray(f(pts), dtype=float)
    return np.einsum("tq,tqj,tqr->trj", wts, vals, fv, optimize=True)


def _rt_load(f, ops: ElementOperators, coords, k, quad_degree):
    """(nt, nloc) entries (f, R(phi_i)) via the reconstruction matrix."""
    rule = ps.triangle_rule(quad_degree)
    pts, wts = ps.map_triangle_rule(rule, coords)
    rt = ps.eval_rt_basis(k, ops.centroids[:, None], ops.diameters[:, None], pts)
    fv = np.asarray(f(pts), dtype=float)
    mrt = np.einsum("tq,tqbc,tqc->tb", wts, rt, fv, optimize=True)
    return np.einsum("tb,tbl->tl", mrt, ops.recon, optimize=True)


def local_load(coords, k: int, f, variant: str, quad_degree: int | None = None) -> np.ndarray:
    """Single-element load vector for either scheme variant."""
    from .localops import operators_for_triangle, _single_element_arrays
    _check_variant(variant)
    qd = quad_degree if quad_degree is not None else ps.data_exactness(k)
    c, _, _ = _single_element_arrays(coords)
    out = np.zeros(local_dim(k))
    if variant == "robust":
        ops = operators_for_triangle(coords, k)
        out[:] = _rt_load(f, ops, c, k, qd)[0]
    else:
        out[:interior_dim(k)] = _interior_load(f, c, k, qd)[0].ravel()
    return out


def _check_variant(variant: str) -> str:
    if variant not in ("robust", "standard"):
        raise ValueError(f"variant must be 'robust' or 'standard', got {variant!r}")
    return variant


def load_vector(mesh: Mesh, k: int, f, variant: str, ops: ElementOperators,
                quad_degree: int | None = None, dm: DofMap | None = None) -> np.ndarray:
    """Global load vector over all dofs."""
    _check_variant(variant)
    qd = quad_degree if quad_degree is not None else ps.data_exactness(k)
    if dm is None:
        dm = dof_map(mesh, k)
    out = np.zeros(dm.total)
    coords = mesh.tri_coords
    nt = mesh.n_triangles
    ni = interior_dim(k)
    for lo in range(0, nt, _CHUNK):
        hi = min(lo + _CHUNK, nt)
        if variant == "robust":
            loc = _rt_load(f, _ops_slice(ops, lo, hi), coords[lo:hi], k, qd)
            np.add.at(out, dm.element_dofs[lo:hi], loc)
        else:
            mom = _interior_load(f, coords[lo:hi], k, qd)
            out[lo * ni:hi * ni] = mom.reshape(-1)
    if not np.all(np.isfinite(out)):
        raise ValueError("body force produced non-finite values")
    return out


def _ops_slice(ops: ElementOperators, lo: int, hi: int) -> ElementOperators:
    if lo == 0 and hi == ops.n_elements:
        return ops
    pick = lambda a: a[lo:hi]
    return ElementOperators(
        k=ops.k, grad=pick(ops.grad), div=pick(ops.div), recon=pick(ops.recon),
        stab=pick(ops.stab), grad_form=pick(ops.grad_form), div_form=pick(ops.div_form),
        mass_k=pick(ops.mass_k), mass_g=pick(ops.mass_g), centroids=pick(ops.centroids),
        diameters=pick(ops.diameters), areas=pick(ops.areas),
        normals_out=pick(ops.normals_out), edge_lengths=pick(ops.edge_lengths),
    )


def boundary_values(mesh: Mesh, k: int, ghat, dm: DofMap | None = None,
                    quad_degree: int | None = None) -> np.ndarray:
    """(total,) vector holding the edge projection of the boundary data on
    every constrained block, zero elsewhere."""
    if dm is None:
        dm = dof_map(mesh, k)
    out = np.zeros(dm.total)
    bidx = dm.boundary_edges
    if bidx.size == 0:
        return out
    p = mesh.vertices[mesh.edges[bidx]]
    coeffs = ps.project_edges(ghat, k, p[:, 0], p[:, 1], quad_degree)  # (nb, 2, k+1)
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("boundary data produced non-finite values")
    eb = edge_block_dim(k)
    cols = dm.interior_total + (bidx[:, None] * eb + np.arange(eb))
    out[cols.ravel()] = coeffs.reshape(len(bidx), eb).ravel()
    return out


def assemble(mesh: Mesh, k: int, mu: float, lam: float, variant: str, f, ghat,
             ops: ElementOperators | None = None, condense: bool = False,
             backend: str | None = None, quad_degree: int | None = None):
    """Build the reduced linear system for one scheme variant.

    Returns (SparseSystem, DofMap, boundary value vector).
    """
    k = ps.check_degree(k)
    _check_variant(variant)
    if not (mu > 0 and lam > 0):
        raise ValueError("Lame constants must be positive")
    if ops is None:
        ops = element_operators(mesh, k, backend)
    dm = dof_map(mesh, k)

    local = mu * ops.grad_form + (lam + mu) * ops.div_form + ops.stab
    local = 0.5 * (local + np.swapaxes(local, 1, 2))
    b = load_vector(mesh, k, f, variant, ops, quad_degree, dm)
    bvals = boundary_values(mesh, k, ghat, dm, quad_degree)

    if condense:
        system = _assemble_condensed(local, b, bvals, dm)
    else:
        full = _scatter(local, dm)
        free = dm.free
        rhs = b[free] - full[free][:, ~free] @ bvals[~free]
        system = SparseSystem(matrix=full[free][:, free].tocsr(), rhs=rhs,
                              dofmap=dm, boundary_values=bvals, matrix_full=full)
    return system, dm, bvals


def _assemble_condensed(local, b, bvals, dm: DofMap) -> SparseSystem:
    """Eliminate interior blocks element-by-element (Schur complement)."""
    k = dm.k
    ni = interior_dim(k)
    a_ii = local[:, :ni, :ni]
    a_ib = local[:, :ni, ni:]
    a_bb = local[:, ni:, ni:]
    x = np.linalg.solve(a_ii, a_ib)
    b_int = b[:dm.interior_total].reshape(dm.n_elements, ni)
    y = np.linalg.solve(a_ii, b_int[:, :, None])[:, :, 0]

    schur = a_bb - np.swapaxes(a_ib, 1, 2) @ x
    schur = 0.5 * (schur + np.swapaxes(schur, 1, 2))

    edge_total = dm.total - dm.interior_total
    eidx = (dm.element_dofs[:, ni:] - dm.interior_total).astype(np.int32)
    rows = np.broadcast_to(eidx[:, :, None], schur.shape).ravel()
    cols = np.broadcast_to(eidx[:, None, :], schur.shape).ravel()
    mat = sp.coo_matrix((schur.ravel(), (rows, cols)),
                        shape=(edge_total, edge_total)).tocsr()

    rhs_edge = b[dm.interior_total:].copy()
    np.add.at(rhs_edge, eidx.ravel(),
              -np.einsum("tij,ti->tj", a_ib, y, optimize=True).ravel())

    free_edge = dm.free[dm.interior_total:]
    bvals_edge = bvals[dm.interior_total:]
    rhs = rhs_edge[free_edge] - mat[free_edge][:, ~free_edge] @ bvals_edge[~free_edge]
    return SparseSystem(matrix=mat[free_edge][:, free_edge].tocsr(), rhs=rhs,
                        dofmap=dm, boundary_values=bvals, condensed=True,
                        local_blocks=local, load_full=b)


def solve(system: SparseSystem, residual_tol: float = 1e-11) -> WgField:
    """Direct sparse factorization with a residual guarantee.

    The grad-div coefficient spreads the matrix entries over many orders of
    magnitude, so the system is symmetrically Jacobi-equilibrated before the
    LU factorization and polished with a few steps of iterative refinement.
    """
    if system.condensed:
        return _solve_condensed(system, residual_tol)
    diag = system.matrix.diagonal()
    if system.matrix.shape[0] and diag.min() <= 0:
        raise SolverError(
            f"matrix is not positive definite: min diagonal {diag.min():.3e}")
    scale = 1.0 / np.sqrt(diag)
    d = sp.diags(scale)
    mat = (d @ system.matrix @ d).tocsc()
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        gap = abs(system.matrix - system.matrix.T).max() if system.matrix.nnz else 0.0
        raise SolverError(
            f"factorization failed ({exc}); symmetry gap {gap:.3e}, "
            f"diag range [{diag.min():.3e}, {diag.max():.3e}]") from exc
    x = scale * lu.solve(scale * system.rhs)
    bnorm = np.linalg.norm(system.rhs)
    if bnorm > 0:
        # iterative refinement with extended-precision residuals: at large
        # grad-div weights the double-precision matvec floor sits orders of
        # magnitude above the attainable true residual
        data = system.matrix.data.astype(np.longdouble)
        indices, indptr = system.matrix.indices, system.matrix.indptr
        b_ext = system.rhs.astype(np.longdouble)

        def residual(v):
            prod = data * v.astype(np.longdouble)[indices]
            return b_ext - np.add.reduceat(prod, indptr[:-1])

        # ||A||_inf * ||x|| bounds the residual any double-precision vector
        # can reach; against it the backward error is the meaningful measure
        # once the grad-div weight pushes ||A|| far above ||b||
        anorm = float(np.abs(system.matrix).sum(axis=1).max())

        def gap(v, r):
            rn = float(np.linalg.norm(r.astype(float)))
            return rn / bnorm, rn / (anorm * np.linalg.norm(v) + bnorm)

        for _ in range(6):
            r = residual(x)
            res, bwd = gap(x, r)
            if min(res, bwd) <= 0.01 * residual_tol:
                break
            x = x + scale * lu.solve(scale * r.astype(float))
        res, bwd = gap(x, residual(x))
        if not np.isfinite(res) or min(res, bwd) > residual_tol:
            raise SolverError(
                f"solver residual {res:.3e} (backward error {bwd:.3e}) "
                f"exceeds {residual_tol:.1e}")

    dm = system.dofmap
    values = system.boundary_values.copy()
    values[dm.free] = x
    return WgField(values=values, dofmap=dm)


def _solve_condensed(system: SparseSystem, residual_tol: float) -> WgField:
    """Solve the edge-only Schur system, recover interiors, and refine
    against the full operator applied matrix-free from the element blocks."""
    dm = system.dofmap
    ni = interior_dim(dm.k)
    nt = dm.n_elements
    local = system.local_blocks
    a_ii = local[:, :ni, :ni]
    a_ib = local[:, :ni, ni:]
    free_edge = dm.free[dm.interior_total:]
    eidx = dm.element_dofs[:, ni:] - dm.interior_total

    diag = system.matrix.diagonal()
    if system.matrix.shape[0] and diag.min() <= 0:
        raise SolverError(
            f"condensed matrix is not positive definite: min diagonal {diag.min():.3e}")
    scale = 1.0 / np.sqrt(diag)
    d = sp.diags(scale)
    try:
        lu = spla.splu((d @ system.matrix @ d).tocsc())
    except RuntimeError as exc:
        raise SolverError(f"condensed factorization failed ({exc})") from exc

    values = system.boundary_values.copy()
    edge_view = values[dm.interior_total:]
    edge_view[free_edge] = scale * lu.solve(scale * system.rhs)
    b_int = system.load_full[:dm.interior_total].reshape(nt, ni)
    u_edge_loc = values[dm.element_dofs[:, ni:]]
    rhs_i = b_int - np.einsum("tij,tj->ti", a_ib, u_edge_loc, optimize=True)
    values[:dm.interior_total] = np.linalg.solve(a_ii, rhs_i[:, :, None])[:, :, 0].ravel()

    bnorm = max(np.linalg.norm(system.rhs), np.linalg.norm(system.load_full))
    if bnorm == 0:
        return WgField(values=values, dofmap=dm)
    rowsum = np.zeros(dm.total)
    np.add.at(rowsum, dm.element_dofs, np.abs(local).sum(axis=2))
    anorm = rowsum.max()

    def full_residual():
        r = system.load_full.copy()
        np.add.at(r, dm.element_dofs,
                  -np.einsum("tij,tj->ti", local, values[dm.element_dofs], optimize=True))
        return r

    for _ in range(4):
        r = full_residual()
        rn = np.linalg.norm(r[dm.free])
        if min(rn / bnorm, rn / (anorm * np.linalg.norm(values) + bnorm)) <= 0.01 * residual_tol:
            break
        r_i = r[:dm.interior_total].reshape(nt, ni)
        w = np.linalg.solve(a_ii, r_i[:, :, None])[:, :, 0]
        r_edge = r[dm.interior_total:].copy()
        np.add.at(r_edge, eidx.ravel(),
                  -np.einsum("tij,ti->tj", a_ib, w, optimize=True).ravel())
        du_edge = np.zeros(dm.total - dm.interior_total)
        du_edge[free_edge] = scale * lu.solve(scale * r_edge[free_edge])
        du_i = np.linalg.solve(
            a_ii, (r_i - np.einsum("tij,tj->ti", a_ib, du_edge[eidx], optimize=True))[:, :, None]
        )[:, :, 0]
        values[:dm.interior_total] += du_i.ravel()
        edge_view[free_edge] += du_edge[free_edge]

    rn = np.linalg.norm(full_residual()[dm.free])
    res = rn / bnorm
    bwd = rn / (anorm * np.linalg.norm(values) + bnorm)
    if not np.isfinite(res) or min(res, bwd) > residual_tol:
        raise SolverError(
            f"condensed solver residual {res:.3e} (backward error {bwd:.3e}) "
            f"exceeds {residual_tol:.1e}")
    return WgField(values=values, dofmap=dm)
