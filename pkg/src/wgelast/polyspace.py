"""Polynomial bases on triangles and edges, quadrature, and L2 projections.

Triangle bases are centroid-scaled monomials ``((x-xc)/h)^a ((y-yc)/h)^b``
with ``a + b <= degree``; edge bases are 1D monomials in the arc-length
parameter ``t in [-1, 1]`` measured along the edge's global direction.
Projections are basis-invariant, so this choice is free as long as the
local mass systems stay well conditioned (they do for degree <= 4).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 4
_MAX_RULE_DEGREE = 20

_COMPONENTS = {"scalar": 1, "vector": 2, "matrix": 4}


def operator_exactness(k: int) -> int:
    """Quadrature degree for bilinear-form integrals (polynomial, exact)."""
    return 2 * k + 2


def data_exactness(k: int) -> int:
    """Quadrature degree for error integrals and general right-hand sides."""
    return 2 * k + 6


@lru_cache(maxsize=None)
def tri_exponents(degree: int) -> np.ndarray:
    """(m, 2) monomial exponents ordered by total degree, x power descending."""
    exps = [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]
    out = np.array(exps, dtype=np.int64)
    out.setflags(write=False)
    return out


def tri_dim(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def check_degree(k: int) -> int:
    if not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"polynomial degree must be in 1..{MAX_DEGREE}, got {k}")
    return int(k)


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference domain (triangle or segment)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle (0,0)-(1,0)-(0,1), exact to ``degree``.

    Built by collapsing a tensor Gauss-Legendre grid onto the triangle,
    which is exact for all polynomials up to the requested total degree.
    """
    if not 1 <= degree <= _MAX_RULE_DEGREE:
        raise ValueError(f"unsupported triangle rule degree {degree}")
    if degree == 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1)
    m = (degree + 3) // 2
    x, w = np.polynomial.legendre.leggauss(m)
    u, wu = (x + 1) / 2, w / 2
    uu, vv = np.meshgrid(u, u, indexing="ij")
    pts = np.column_stack([uu.ravel(), (vv * (1 - uu)).ravel()])
    wts = (np.outer(wu * (1 - u), wu)).ravel()
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [-1, 1] exact to ``degree``."""
    if not 1 <= degree <= 2 * _MAX_RULE_DEGREE:
        raise ValueError(f"unsupported edge rule degree {degree}")
    npts = (degree + 2) // 2
    x, w = np.polynomial.legendre.leggauss(npts)
    return QuadratureRule(x, w, degree)


def map_triangle_rule(rule: QuadratureRule, coords: np.ndarray):
    """Map a reference rule to physical triangles.

    coords may be (3, 2) or (nt, 3, 2); returns (points, weights) with a
    matching leading shape. Weights scale with the affine Jacobian.
    """
    coords = np.asarray(coords, dtype=float)
    v0 = coords[..., 0, :]
    e1 = coords[..., 1, :] - v0
    e2 = coords[..., 2, :] - v0
    u = rule.points[:, 0]
    v = rule.points[:, 1]
    pts = (v0[..., None, :]
           + u[:, None] * e1[..., None, :]
           + v[:, None] * e2[..., None, :])
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    wts = rule.weights * 2.0 * (0.5 * det)[..., None]
    return pts, wts


def map_edge_rule(rule: QuadratureRule, p0: np.ndarray, p1: np.ndarray):
    """Map the [-1, 1] rule onto segments p0 -> p1 (leading shapes broadcast)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    mid = 0.5 * (p0 + p1)
    half = 0.5 * (p1 - p0)
    pts = mid[..., None, :] + rule.points[:, None] * half[..., None, :]
    wts = rule.weights * np.linalg.norm(half, axis=-1)[..., None]
    return pts, wts


def eval_monomials(exps: np.ndarray, centers, h, pts) -> np.ndarray:
    """Values of scaled monomials at points.

    pts (..., 2), centers broadcastable to pts, h broadcastable to pts[..., 0];
    returns (..., m).
    """
    xi = (np.asarray(pts, dtype=float) - centers) / np.asarray(h)[..., None]
    return xi[..., :1] ** exps[:, 0] * xi[..., 1:2] ** exps[:, 1]


def eval_monomial_gradients(exps: np.ndarray, centers, h, pts) -> np.ndarray:
    """First derivatives of scaled monomials, shape (..., m, 2)."""
    h = np.asarray(h, dtype=float)
    xi = (np.asarray(pts, dtype=float) - centers) / h[..., None]
    a, b = exps[:, 0], exps[:, 1]
    px = xi[..., :1] ** np.maximum(a - 1, 0)
    py = xi[..., 1:2] ** np.maximum(b - 1, 0)
    fx = xi[..., :1] ** a
    fy = xi[..., 1:2] ** b
    gx = a * px * fy
    gy = b * fx * py
    return np.stack([gx, gy], axis=-1) / h[..., None, None]


def eval_edge_monomials(degree: int, t: np.ndarray) -> np.ndarray:
    """Values t^j, j = 0..degree, at parameters t; shape (..., degree+1)."""
    t = np.asarray(t, dtype=float)
    return t[..., None] ** np.arange(degree + 1)


class TriBasis:
    """Scaled monomial basis of P_degree on one triangle."""

    def __init__(self, degree: int, coords: np.ndarray):
        self.degree = int(degree)
        self.coords = np.asarray(coords, dtype=float)
        self.exponents = tri_exponents(degree)
        self.centroid = self.coords.mean(axis=0)
        self.diameter = float(np.linalg.norm(
            self.coords[[1, 2, 0]] - self.coords, axis=1).max())

    @property
    def dim(self) -> int:
        return tri_dim(self.degree)

    def eval(self, pts) -> np.ndarray:
        return eval_monomials(self.exponents, self.centroid, self.diameter, pts)

    def grad(self, pts) -> np.ndarray:
        return eval_monomial_gradients(self.exponents, self.centroid, self.diameter, pts)


class EdgeBasis:
    """Monomial basis of P_degree on one edge, parameterized p0 -> p1."""

    def __init__(self, degree: int, p0, p1):
        self.degree = int(degree)
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.length = float(np.linalg.norm(self.p1 - self.p0))

    @property
    def dim(self) -> int:
        return self.degree + 1

    def param(self, pts) -> np.ndarray:
        """Arc-length parameter in [-1, 1] of points assumed on the edge."""
        mid = 0.5 * (self.p0 + self.p1)
        half = 0.5 * (self.p1 - self.p0)
        return ((np.asarray(pts) - mid) @ half) / (half @ half)

    def eval(self, pts) -> np.ndarray:
        return eval_edge_monomials(self.degree, self.param(pts))


def _as_components(values: np.ndarray, shape: str) -> np.ndarray:
    if shape == "scalar":
        return np.asarray(values, dtype=float)[..., None]
    if shape == "vector":
        return np.asarray(values, dtype=float)
    if shape == "matrix":
        vals = np.asarray(values, dtype=float)
        return vals.reshape(vals.shape[:-2] + (4,))
    raise ValueError(f"unknown target shape {shape!r}")


def rt_dim(k: int) -> int:
    """Dimension of the order-k flux space [P_k]^2 + x * (homogeneous P_k)."""
    return (k + 1) * (k + 3)


def homogeneous_exponents(k: int) -> np.ndarray:
    """(k+1, 2) exponents of the homogeneous degree-k monomials."""
    return tri_exponents(k)[tri_dim(k - 1) if k > 0 else 0:]


def eval_rt_basis(k: int, centers, h, pts) -> np.ndarray:
    """Values of the order-k flux basis at points, shape (..., nrt, 2).

    Layout: x-component block of [P_k]^2 (m entries), y-component block
    (m entries), then the k+1 fields ``(xi, eta) * psi_j`` with psi_j the
    scaled homogeneous monomials.
    """
    m = tri_dim(k)
    vals = eval_monomials(tri_exponents(k), centers, h, pts)
    xi = (np.asarray(pts, dtype=float) - centers) / np.asarray(h)[..., None]
    psi = vals[..., m - (k + 1):]
    out = np.zeros(vals.shape[:-1] + (rt_dim(k), 2))
    out[..., :m, 0] = vals
    out[..., m:2 * m, 1] = vals
    out[..., 2 * m:, 0] = xi[..., :1] * psi
    out[..., 2 * m:, 1] = xi[..., 1:2] * psi
    return out


@lru_cache(maxsize=None)
def _rt_divergence_base(k: int) -> np.ndarray:
    """Unscaled divergence map of the flux basis; true map is this over h.

    Returns (m, nrt): coefficients of div(basis_j) in the P_k monomial
    basis, exact because differentiation of scaled monomials is closed.
    """
    exps = tri_exponents(k)
    m = tri_dim(k)
    index = {tuple(e): i for i, e in enumerate(exps)}
    out = np.zeros((m, rt_dim(k)))
    for j, (a, b) in enumerate(exps):
        if a > 0:
            out[index[(a - 1, b)], j] = a
        if b > 0:
            out[index[(a, b - 1)], m + j] = b
    for j in range(k + 1):
        # div of (xi, eta) * psi_j for homogeneous psi_j of degree k
        out[m - (k + 1) + j, 2 * m + j] = k + 2
    out.setflags(write=False)
    return out


def rt_divergence_matrix(k: int, h) -> np.ndarray:
    """Map flux coefficients to P_k coefficients of the divergence.

    h may be a scalar or (nt,); the result is (m, nrt) or (nt, m, nrt).
    """
    base = _rt_divergence_base(k)
    h = np.asarray(h, dtype=float)
    return base / h[..., None, None]


def project_elements(f, coords: np.ndarray, degree: int, shape: str = "vector",
                     quad_degree: int | None = None) -> np.ndarray:
    """L2-project a function onto P_degree components on each triangle.

    f maps points (..., 2) to scalars, vectors (..., 2), or matrices
    (..., 2, 2) according to ``shape``. Returns coefficients of shape
    (nt, ncomp, m) in the scaled monomial basis of each element.
    """
    coords = np.asarray(coords, dtype=float)
    single = coords.ndim == 2
    if single:
        coords = coords[None]
    exps = tri_exponents(degree)
    rule = triangle_rule(quad_degree if quad_degree is not None else 2 * degree + 6)
    pts, wts = map_triangle_rule(rule, coords)
    centers = coords.mean(axis=1)
    h = np.linalg.norm(coords[:, [1, 2, 0]] - coords, axis=2).max(axis=1)
    vals = eval_monomials(exps, centers[:, None, :], h[:, None], pts)
    mass = np.einsum("tq,tqi,tqj->tij", wts, vals, vals)
    fv = _as_components(f(pts), shape)
    if fv.shape[-1] != _COMPONENTS[shape]:
        raise ValueError(f"function values do not match target shape {shape!r}")
    moments = np.einsum("tq,tqi,tqc->tic", wts, vals, fv)
    coeffs = np.linalg.solve(mass, moments)
    coeffs = np.swapaxes(coeffs, 1, 2)
    return coeffs[0] if single else coeffs


def project_element(f, coords, degree: int, shape: str = "vector",
                    quad_degree: int | None = None) -> np.ndarray:
    """Single-element version of :func:`project_elements`: (ncomp, m)."""
    return project_elements(f, np.asarray(coords), degree, shape, quad_degree)


def project_edges(g, k: int, p0, p1, quad_degree: int | None = None) -> np.ndarray:
    """L2-project a vector function onto [P_k]^2 of each edge p0 -> p1.

    Returns coefficients (ne, 2, k+1) in the edge monomial basis. The edge
    length cancels between the mass matrix and the moment vector, so a single
    reference Vandermonde serves every edge.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    rule = edge_rule(quad_degree if quad_degree is not None else 2 * k + 6)
    tvals = eval_edge_monomials(k, rule.points)
    mass = np.einsum("q,qi,qj->ij", rule.weights, tvals, tvals)
    pts, _ = map_edge_rule(rule, p0, p1)
    gv = np.asarray(g(pts), dtype=float)
    moments = np.einsum("q,qi,eqc->eic", rule.weights, tvals, gv)
    coeffs = np.linalg.solve(mass, moments)
    return np.swapaxes(coeffs, 1, 2)


def project_edge(g, k: int, p0, p1, quad_degree: int | None = None) -> np.ndarray:
    """Single-edge version of :func:`project_edges`: (2, k+1)."""
    return project_edges(g, k, np.asarray(p0)[None], np.asarray(p1)[None], quad_degree)[0]
