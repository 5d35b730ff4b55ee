"""Pure-NumPy integration backend: batched over elements via einsum.

Computes exactly the same moment arrays as the compiled core
(``wgelast._elemcore``); kept in lockstep with it and cross-checked by the
backend-agreement tests.
"""

from __future__ import annotations

import numpy as np

from . import polyspace as ps


def moment_arrays(k, coords, edge_coords, edge_signs,
                  tri_pts, tri_wts, edge_pts, edge_wts, expk, expg):
    nt = coords.shape[0]
    mk = expk.shape[0]
    mg = expg.shape[0]
    me = k + 1
    nrt = ps.rt_dim(k)

    centroids = coords.mean(axis=1)
    sides = np.linalg.norm(coords[:, [1, 2, 0]] - coords, axis=2)
    diameters = sides.max(axis=1)
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    # interior quadrature
    pts = (coords[:, None, 0, :]
           + tri_pts[:, 0, None] * e1[:, None, :]
           + tri_pts[:, 1, None] * e2[:, None, :])
    wts = 2.0 * areas[:, None] * tri_wts

    ctr = centroids[:, None, :]
    hh = diameters[:, None]
    vk = ps.eval_monomials(expk, ctr, hh, pts)
    vg = ps.eval_monomials(expg, ctr, hh, pts)
    gk = ps.eval_monomial_gradients(expk, ctr, hh, pts)
    gg = ps.eval_monomial_gradients(expg, ctr, hh, pts)
    rt = ps.eval_rt_basis(k, ctr, hh, pts)

    mass_k = np.einsum("tq,tqi,tqj->tij", wts, vk, vk, optimize=True)
    mass_g = np.einsum("tq,tqi,tqj->tij", wts, vg, vg, optimize=True)
    mass_gk = np.einsum("tq,tqi,tqj->tij", wts, vg, vk, optimize=True)
    stiff_gk = np.einsum("tq,tqic,tqj->tcij", wts, gg, vk, optimize=True)
    stiff_kk = np.einsum("tq,tqic,tqj->tcij", wts, gk, vk, optimize=True)
    rt_int = np.einsum("tq,tqi,tqbc->tcib", wts, vg, rt, optimize=True)

    # edge quadrature, one local edge at a time
    elen = np.linalg.norm(edge_coords[:, :, 1] - edge_coords[:, :, 0], axis=2)
    tangent = (edge_coords[:, :, 1] - edge_coords[:, :, 0]) / elen[:, :, None]
    normals_out = edge_signs[:, :, None] * np.stack(
        [tangent[:, :, 1], -tangent[:, :, 0]], axis=2)

    tvals = ps.eval_edge_monomials(k, edge_pts)
    edge_gk = np.empty((nt, 3, mg, me))
    edge_kk = np.empty((nt, 3, mk, me))
    edge_mass = np.empty((nt, 3, me, me))
    edge_bmass = np.empty((nt, 3, mk, mk))
    rt_edge = np.empty((nt, 3, me, nrt))
    for e in range(3):
        p0 = edge_coords[:, e, 0]
        p1 = edge_coords[:, e, 1]
        mid = 0.5 * (p0 + p1)
        half = 0.5 * (p1 - p0)
        epts = mid[:, None, :] + edge_pts[:, None] * half[:, None, :]
        ewts = edge_wts * (0.5 * elen[:, e])[:, None]

        evk = ps.eval_monomials(expk, ctr, hh, epts)
        evg = ps.eval_monomials(expg, ctr, hh, epts)
        ert = ps.eval_rt_basis(k, ctr, hh, epts)
        rtn = np.einsum("tqbc,tc->tqb", ert, normals_out[:, e], optimize=True)

        edge_gk[:, e] = np.einsum("tq,tqi,ql->til", ewts, evg, tvals, optimize=True)
        edge_kk[:, e] = np.einsum("tq,tqi,ql->til", ewts, evk, tvals, optimize=True)
        edge_mass[:, e] = np.einsum("tq,ql,qm->tlm", ewts, tvals, tvals, optimize=True)
        edge_bmass[:, e] = np.einsum("tq,tqi,tqj->tij", ewts, evk, evk, optimize=True)
        rt_edge[:, e] = np.einsum("tq,ql,tqb->tlb", ewts, tvals, rtn, optimize=True)

    return {
        "centroids": centroids, "diameters": diameters, "areas": areas,
        "normals_out": normals_out, "edge_lengths": elen,
        "mass_k": mass_k, "mass_g": mass_g, "mass_gk": mass_gk,
        "stiff_gk": stiff_gk, "stiff_kk": stiff_kk,
        "rt_int": rt_int, "rt_edge": rt_edge,
        "edge_gk": edge_gk, "edge_kk": edge_kk,
        "edge_mass": edge_mass, "edge_bmass": edge_bmass,
    }
