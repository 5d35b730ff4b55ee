"""Per-element weak operators and the H(div)-conforming reconstruction.

Each element carries four matrices over its local degrees of freedom (see
``wgelast.kernels`` for the layout):

* ``weak_gradient``    G: dofs -> coefficients of the matrix-valued weak
  gradient in [P_{k-1}]^{2x2}, defined by the moment identity
  (grad_w v, phi) = -(v0, div phi) + <vb, phi n> over the test basis;
* ``weak_divergence``  D: dofs -> P_k coefficients of the weak divergence,
  (div_w v, q) = -(v0, grad q) + <vb . n, q>;
* ``rt_reconstruction`` R: dofs -> flux-space coefficients of the unique
  field matching v0's interior moments against [P_{k-1}]^2 and vb's
  normal-trace moments on every edge;
* ``stabilizer``       S: the boundary penalty (1/h_T) <v0-vb, w0-wb>.

All four depend only on the element geometry and the degree k.
"""

from __future__ import annotations

import numpy as np

from . import kernels, polyspace as ps
from .kernels import ElementOperators, build_operators, edge_slice, interior_slice, local_dim
from .mesh import Mesh

__all__ = [
    "ElementOperators", "RtSpace", "element_operators", "local_dim",
    "weak_gradient", "weak_divergence", "rt_reconstruction", "stabilizer",
    "divergence_identity_check", "divergence_identity_gap", "normal_trace_gap",
]


def mesh_element_arrays(mesh: Mesh):
    """(coords, edge_coords, edge_signs) arrays driving the kernels."""
    return mesh.tri_coords, mesh.tri_edge_coords, mesh.tri_edge_signs


def element_operators(mesh: Mesh, k: int, backend: str | None = None) -> ElementOperators:
    """Operators for every element of a mesh, stacked."""
    coords, ecoords, signs = mesh_element_arrays(mesh)
    return build_operators(k, coords, ecoords, signs, backend)


def _single_element_arrays(coords):
    """Standalone-element convention: each local edge keeps its own
    counterclockwise direction as the global one, so all signs are +1."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (3, 2):
        raise ValueError("expected a (3, 2) coordinate array")
    e1, e2 = coords[1] - coords[0], coords[2] - coords[0]
    if e1[0] * e2[1] - e1[1] * e2[0] <= 0:
        raise ValueError("triangle must be counterclockwise")
    ecoords = np.stack([coords[[0, 1]], coords[[1, 2]], coords[[2, 0]]])
    return coords[None], ecoords[None], np.ones((1, 3))


def operators_for_triangle(coords, k: int, backend: str | None = None) -> ElementOperators:
    c, ec, sg = _single_element_arrays(coords)
    return build_operators(k, c, ec, sg, backend)


def weak_gradient(coords, k: int, backend: str | None = None) -> np.ndarray:
    return operators_for_triangle(coords, k, backend).grad[0]


def weak_divergence(coords, k: int, backend: str | None = None) -> np.ndarray:
    return operators_for_triangle(coords, k, backend).div[0]


def rt_reconstruction(coords, k: int, backend: str | None = None) -> np.ndarray:
    return operators_for_triangle(coords, k, backend).recon[0]


def stabilizer(coords, k: int, backend: str | None = None) -> np.ndarray:
    return operators_for_triangle(coords, k, backend).stab[0]


class RtSpace:
    """Order-k flux space [P_k]^2 + x * (homogeneous P_k) on one triangle.

    Exposes the degree-of-freedom functional matrix (interior moments
    against [P_{k-1}]^2, then edge normal moments against P_k(e)) so its
    invertibility and conditioning can be inspected directly.
    """

    def __init__(self, k: int, coords):
        self.k = ps.check_degree(k)
        c, ec, sg = _single_element_arrays(coords)
        self._arr = kernels.moment_arrays(self.k, c, ec, sg)
        self.coords = np.asarray(coords, dtype=float)
        self.centroid = self._arr["centroids"][0]
        self.diameter = float(self._arr["diameters"][0])

    @property
    def dim(self) -> int:
        return ps.rt_dim(self.k)

    def eval(self, pts) -> np.ndarray:
        """Basis values at points, shape (..., dim, 2)."""
        return ps.eval_rt_basis(self.k, self.centroid, self.diameter, pts)

    def divergence_matrix(self) -> np.ndarray:
        """Exact map from flux coefficients to P_k divergence coefficients."""
        return ps.rt_divergence_matrix(self.k, self.diameter)

    def functional_matrix(self) -> np.ndarray:
        mg = ps.tri_dim(self.k - 1)
        me = self.k + 1
        out = np.empty((self.dim, self.dim))
        out[:mg] = self._arr["rt_int"][0, 0]
        out[mg:2 * mg] = self._arr["rt_int"][0, 1]
        for e in range(3):
            out[2 * mg + e * me:2 * mg + (e + 1) * me] = self._arr["rt_edge"][0, e]
        return out

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.functional_matrix()))


def divergence_identity_gap(ops: ElementOperators) -> float:
    """Largest coefficient mismatch between div(R(v)) and the weak
    divergence over all local basis vectors, relative to the operator size."""
    div_map = ps.rt_divergence_matrix(ops.k, ops.diameters)
    lhs = div_map @ ops.recon
    scale = max(np.abs(ops.div).max(), 1.0)
    return float(np.abs(lhs - ops.div).max() / scale)


def divergence_identity_check(coords, k: int, tol: float = 1e-10,
                              backend: str | None = None) -> bool:
    """True iff div(R(v)) equals the weak divergence on this element."""
    return divergence_identity_gap(operators_for_triangle(coords, k, backend)) <= tol


def normal_trace_gap(mesh: Mesh, k: int, ops: ElementOperators | None = None) -> float:
    """Largest pointwise mismatch of R(v).n against vb.n at edge quadrature
    nodes, over all elements, edges, and local basis vectors."""
    if ops is None:
        ops = element_operators(mesh, k)
    rule = ps.edge_rule(ps.operator_exactness(k))
    ecoords = mesh.tri_edge_coords
    tvals = ps.eval_edge_monomials(k, rule.points)
    worst = 0.0
    for e in range(3):
        pts, _ = ps.map_edge_rule(rule, ecoords[:, e, 0], ecoords[:, e, 1])
        ert = ps.eval_rt_basis(k, ops.centroids[:, None, :], ops.diameters[:, None], pts)
        rtn = np.einsum("tqbc,tc->tqb", ert, ops.normals_out[:, e], optimize=True)
        lhs = rtn @ ops.recon                      # (nt, nq, nloc)
        rhs = np.zeros_like(lhs)
        for r in range(2):
            rhs[:, :, edge_slice(k, e, r)] = ops.normals_out[:, e, r, None, None] * tvals
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst
