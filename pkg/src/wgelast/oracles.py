"""Slow reference implementations of the per-element operators.

Everything here evaluates the defining moment identities directly with
dense Gram assembly and a high-order quadrature rule, one element at a
time, without touching the production kernels. Used by the self-test
driver and the test suite to cross-check the fast path.
"""

from __future__ import annotations

import numpy as np

from . import polyspace as ps
from .kernels import edge_slice, interior_slice, local_dim

ORACLE_DEGREE = 12


def _monomials(exps, centroid, h, pts):
    """Direct monomial evaluation, independent of the production helpers."""
    out = np.empty((len(pts), len(exps)))
    for q, (x, y) in enumerate(pts):
        xi = (x - centroid[0]) / h
        eta = (y - centroid[1]) / h
        for i, (a, b) in enumerate(exps):
            out[q, i] = xi ** a * eta ** b
    return out


def _monomial_grads(exps, centroid, h, pts):
    out = np.zeros((len(pts), len(exps), 2))
    for q, (x, y) in enumerate(pts):
        xi = (x - centroid[0]) / h
        eta = (y - centroid[1]) / h
        for i, (a, b) in enumerate(exps):
            if a > 0:
                out[q, i, 0] = a * xi ** (a - 1) * eta ** b / h
            if b > 0:
                out[q, i, 1] = b * xi ** a * eta ** (b - 1) / h
    return out


def _geometry(coords):
    centroid = coords.mean(axis=0)
    h = float(np.linalg.norm(coords[[1, 2, 0]] - coords, axis=1).max())
    return centroid, h


def _default_edges(coords):
    edge_coords = np.stack([coords[[0, 1]], coords[[1, 2]], coords[[2, 0]]])
    return edge_coords, np.ones(3)


def _tri_quad(coords, degree=ORACLE_DEGREE):
    rule = ps.triangle_rule(degree)
    pts, wts = ps.map_triangle_rule(rule, coords)
    return pts, wts


def _edge_quad(p0, p1, degree=ORACLE_DEGREE):
    rule = ps.edge_rule(degree)
    pts, wts = ps.map_edge_rule(rule, p0, p1)
    return pts, wts, rule.points


def _edge_normal(p0, p1, sign):
    vec = p1 - p0
    length = np.linalg.norm(vec)
    return sign * np.array([vec[1], -vec[0]]) / length


def oracle_weak_gradient(coords, k, edge_coords=None, edge_signs=None):
    """Weak-gradient matrix from the raw moment identity."""
    coords = np.asarray(coords, dtype=float)
    if edge_coords is None:
        edge_coords, edge_signs = _default_edges(coords)
    centroid, h = _geometry(coords)
    expk = [tuple(e) for e in ps.tri_exponents(k)]
    expg = [tuple(e) for e in ps.tri_exponents(k - 1)]
    mg, nloc = len(expg), local_dim(k)

    pts, wts = _tri_quad(coords)
    vg = _monomials(expg, centroid, h, pts)
    gg = _monomial_grads(expg, centroid, h, pts)
    vk = _monomials(expk, centroid, h, pts)
    mass = np.einsum("q,qi,qj->ij", wts, vg, vg)

    out = np.zeros((4 * mg, nloc))
    for r in range(2):
        for c in range(2):
            rhs = np.zeros((mg, nloc))
            rhs[:, interior_slice(k, r)] = -np.einsum("q,qi,qj->ij", wts, gg[:, :, c], vk)
            for e in range(3):
                p0, p1 = edge_coords[e]
                epts, ewts, tref = _edge_quad(p0, p1)
                n = _edge_normal(p0, p1, edge_signs[e])
                evg = _monomials(expg, centroid, h, epts)
                tv = tref[:, None] ** np.arange(k + 1)
                rhs[:, edge_slice(k, e, r)] = n[c] * np.einsum("q,qi,ql->il", ewts, evg, tv)
            out[(2 * r + c) * mg:(2 * r + c + 1) * mg] = np.linalg.solve(mass, rhs)
    return out


def oracle_weak_divergence(coords, k, edge_coords=None, edge_signs=None):
    coords = np.asarray(coords, dtype=float)
    if edge_coords is None:
        edge_coords, edge_signs = _default_edges(coords)
    centroid, h = _geometry(coords)
    expk = [tuple(e) for e in ps.tri_exponents(k)]
    mk, nloc = len(expk), local_dim(k)

    pts, wts = _tri_quad(coords)
    vk = _monomials(expk, centroid, h, pts)
    gk = _monomial_grads(expk, centroid, h, pts)
    mass = np.einsum("q,qi,qj->ij", wts, vk, vk)

    rhs = np.zeros((mk, nloc))
    for r in range(2):
        rhs[:, interior_slice(k, r)] = -np.einsum("q,qi,qj->ij", wts, gk[:, :, r], vk)
    for e in range(3):
        p0, p1 = edge_coords[e]
        epts, ewts, tref = _edge_quad(p0, p1)
        n = _edge_normal(p0, p1, edge_signs[e])
        evk = _monomials(expk, centroid, h, epts)
        tv = tref[:, None] ** np.arange(k + 1)
        block = np.einsum("q,qi,ql->il", ewts, evk, tv)
        for r in range(2):
            rhs[:, edge_slice(k, e, r)] += n[r] * block
    return np.linalg.solve(mass, rhs)


def _rt_values(k, centroid, h, pts):
    """Flux basis values, (nq, nrt, 2), by direct evaluation."""
    expk = [tuple(e) for e in ps.tri_exponents(k)]
    mk = len(expk)
    vk = _monomials(expk, centroid, h, pts)
    out = np.zeros((len(pts), ps.rt_dim(k), 2))
    out[:, :mk, 0] = vk
    out[:, mk:2 * mk, 1] = vk
    homog = vk[:, mk - (k + 1):]
    xi = (pts - centroid) / h
    out[:, 2 * mk:, 0] = xi[:, :1] * homog
    out[:, 2 * mk:, 1] = xi[:, 1:] * homog
    return out


def oracle_rt_reconstruction(coords, k, edge_coords=None, edge_signs=None):
    """Reconstruction matrix by dense solve of the functional system."""
    coords = np.asarray(coords, dtype=float)
    if edge_coords is None:
        edge_coords, edge_signs = _default_edges(coords)
    centroid, h = _geometry(coords)
    expk = [tuple(e) for e in ps.tri_exponents(k)]
    expg = [tuple(e) for e in ps.tri_exponents(k - 1)]
    mg = len(expg)
    nrt, nloc = ps.rt_dim(k), local_dim(k)

    pts, wts = _tri_quad(coords)
    vg = _monomials(expg, centroid, h, pts)
    vk = _monomials(expk, centroid, h, pts)
    rt = _rt_values(k, centroid, h, pts)

    fmat = np.zeros((nrt, nrt))
    rhs = np.zeros((nrt, nloc))
    for r in range(2):
        fmat[r * mg:(r + 1) * mg] = np.einsum("q,qi,qb->ib", wts, vg, rt[:, :, r])
        rhs[r * mg:(r + 1) * mg, interior_slice(k, r)] = np.einsum("q,qi,qj->ij", wts, vg, vk)
    for e in range(3):
        p0, p1 = edge_coords[e]
        epts, ewts, tref = _edge_quad(p0, p1)
        n = _edge_normal(p0, p1, edge_signs[e])
        ert = _rt_values(k, centroid, h, epts)
        tv = tref[:, None] ** np.arange(k + 1)
        row = slice(2 * mg + e * (k + 1), 2 * mg + (e + 1) * (k + 1))
        fmat[row] = np.einsum("q,ql,qb->lb", ewts, tv, ert[:, :, 0] * n[0] + ert[:, :, 1] * n[1])
        emass = np.einsum("q,ql,qm->lm", ewts, tv, tv)
        for r in range(2):
            rhs[row, edge_slice(k, e, r)] = n[r] * emass
    return np.linalg.solve(fmat, rhs)


def oracle_stabilizer(coords, k, edge_coords=None, edge_signs=None):
    """Stabilizer quadratic form by direct boundary quadrature."""
    coords = np.asarray(coords, dtype=float)
    if edge_coords is None:
        edge_coords, edge_signs = _default_edges(coords)
    centroid, h = _geometry(coords)
    expk = [tuple(e) for e in ps.tri_exponents(k)]
    nloc = local_dim(k)
    out = np.zeros((nloc, nloc))
    for e in range(3):
        p0, p1 = edge_coords[e]
        epts, ewts, tref = _edge_quad(p0, p1)
        evk = _monomials(expk, centroid, h, epts)
        tv = tref[:, None] ** np.arange(k + 1)
        for r in range(2):
            z = np.zeros((len(epts), nloc))
            z[:, interior_slice(k, r)] = evk
            z[:, edge_slice(k, e, r)] = -tv
            out += np.einsum("q,qi,qj->ij", ewts, z, z) / h
    return out


def oracle_local_stiffness(coords, k, mu, lam, edge_coords=None, edge_signs=None):
    """mu (grad_w, grad_w) + (lam+mu)(div_w, div_w) + stabilizer, densely."""
    coords = np.asarray(coords, dtype=float)
    if edge_coords is None:
        edge_coords, edge_signs = _default_edges(coords)
    centroid, h = _geometry(coords)
    g = oracle_weak_gradient(coords, k, edge_coords, edge_signs)
    d = oracle_weak_divergence(coords, k, edge_coords, edge_signs)
    s = oracle_stabilizer(coords, k, edge_coords, edge_signs)

    expk = [tuple(e) for e in ps.tri_exponents(k)]
    expg = [tuple(e) for e in ps.tri_exponents(k - 1)]
    pts, wts = _tri_quad(coords)
    vg = _monomials(expg, centroid, h, pts)
    vk = _monomials(expk, centroid, h, pts)
    mass_g = np.einsum("q,qi,qj->ij", wts, vg, vg)
    mass_k = np.einsum("q,qi,qj->ij", wts, vk, vk)
    mg = len(expg)
    a = np.zeros((local_dim(k), local_dim(k)))
    for blk in range(4):
        tau = g[blk * mg:(blk + 1) * mg]
        a += mu * tau.T @ mass_g @ tau
    a += (lam + mu) * d.T @ mass_k @ d + s
    return a


def oracle_triple_bar(values, mesh, k) -> float:
    """Energy seminorm by element-wise dense quadrature from the oracle
    weak gradients."""
    from .assembly import dof_map

    dm = dof_map(mesh, k)
    expg = [tuple(e) for e in ps.tri_exponents(k - 1)]
    expk = [tuple(e) for e in ps.tri_exponents(k)]
    mg = len(expg)
    total = 0.0
    for t in range(mesh.n_triangles):
        coords = mesh.tri_coords[t]
        ecoords = mesh.tri_edge_coords[t]
        signs = mesh.tri_edge_signs[t]
        centroid, h = _geometry(coords)
        z = values[dm.element_dofs[t]]
        g = oracle_weak_gradient(coords, k, ecoords, signs) @ z
        pts, wts = _tri_quad(coords)
        vg = _monomials(expg, centroid, h, pts)
        for blk in range(4):
            comp = vg @ g[blk * mg:(blk + 1) * mg]
            total += float(wts @ comp ** 2)
        for e in range(3):
            p0, p1 = ecoords[e]
            epts, ewts, tref = _edge_quad(p0, p1)
            evk = _monomials(expk, centroid, h, epts)
            tv = tref[:, None] ** np.arange(k + 1)
            for r in range(2):
                jump = evk @ z[interior_slice(k, r)] - tv @ z[edge_slice(k, e, r)]
                total += float(ewts @ jump ** 2) / h
    return float(np.sqrt(total))


def random_triangle(rng: np.random.Generator) -> np.ndarray:
    """Non-degenerate counterclockwise triangle with moderate aspect ratio."""
    while True:
        coords = rng.uniform(-1.0, 1.0, size=(3, 2))
        e1, e2 = coords[1] - coords[0], coords[2] - coords[0]
        area2 = e1[0] * e2[1] - e1[1] * e2[0]
        if area2 < 0:
            coords[[1, 2]] = coords[[2, 1]]
            area2 = -area2
        hmax = np.linalg.norm(coords[[1, 2, 0]] - coords, axis=1).max()
        if area2 > 0.2 * hmax ** 2:
            return coords
