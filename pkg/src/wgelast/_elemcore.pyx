# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled integration backend: per-element C loops.

Produces exactly the same moment arrays as the pure-NumPy fallback
(``wgelast._elemcore_py``); the two are cross-checked by the backend
agreement tests. Basis evaluation uses repeated multiplication instead of
pow, everything else mirrors the fallback line by line.
"""

import numpy as np

from libc.math cimport sqrt

DEF MAX_DEG = 8          # supports polynomial degree <= 4 comfortably


cdef inline void _powers(double base, long top, double* out) noexcept nogil:
    cdef long i
    out[0] = 1.0
    for i in range(1, top + 1):
        out[i] = out[i - 1] * base


def moment_arrays(long k, const double[:, :, ::1] coords,
                  const double[:, :, :, ::1] edge_coords,
                  const double[:, ::1] edge_signs, const double[:, ::1] tri_pts,
                  const double[::1] tri_wts, const double[::1] edge_pts,
                  const double[::1] edge_wts,
                  const long[:, ::1] expk, const long[:, ::1] expg):
    cdef long nt = coords.shape[0]
    cdef long mk = expk.shape[0]
    cdef long mg = expg.shape[0]
    cdef long me = k + 1
    cdef long nrt = 2 * mk + me
    cdef long nq = tri_pts.shape[0]
    cdef long nqe = edge_pts.shape[0]

    centroids_a = np.empty((nt, 2))
    diameters_a = np.empty(nt)
    areas_a = np.empty(nt)
    normals_a = np.empty((nt, 3, 2))
    elen_a = np.empty((nt, 3))
    mass_k_a = np.zeros((nt, mk, mk))
    mass_g_a = np.zeros((nt, mg, mg))
    mass_gk_a = np.zeros((nt, mg, mk))
    stiff_gk_a = np.zeros((nt, 2, mg, mk))
    stiff_kk_a = np.zeros((nt, 2, mk, mk))
    rt_int_a = np.zeros((nt, 2, mg, nrt))
    rt_edge_a = np.zeros((nt, 3, me, nrt))
    edge_gk_a = np.zeros((nt, 3, mg, me))
    edge_kk_a = np.zeros((nt, 3, mk, me))
    edge_mass_a = np.zeros((nt, 3, me, me))
    edge_bmass_a = np.zeros((nt, 3, mk, mk))

    cdef double[:, ::1] centroids = centroids_a
    cdef double[::1] diameters = diameters_a
    cdef double[::1] areas = areas_a
    cdef double[:, :, ::1] normals = normals_a
    cdef double[:, ::1] elen = elen_a
    cdef double[:, :, ::1] mass_k = mass_k_a
    cdef double[:, :, ::1] mass_g = mass_g_a
    cdef double[:, :, ::1] mass_gk = mass_gk_a
    cdef double[:, :, :, ::1] stiff_gk = stiff_gk_a
    cdef double[:, :, :, ::1] stiff_kk = stiff_kk_a
    cdef double[:, :, :, ::1] rt_int = rt_int_a
    cdef double[:, :, :, ::1] rt_edge = rt_edge_a
    cdef double[:, :, :, ::1] edge_gk = edge_gk_a
    cdef double[:, :, :, ::1] edge_kk = edge_kk_a
    cdef double[:, :, :, ::1] edge_mass = edge_mass_a
    cdef double[:, :, :, ::1] edge_bmass = edge_bmass_a

    cdef long t, q, e, i, j, b, a_, b_, l, m
    cdef double cx, cy, h, area, e1x, e1y, e2x, e2y
    cdef double s0, s1, s2, x, y, xi, eta, w, wq
    cdef double p0x, p0y, p1x, p1y, L, tx, ty, nx, ny, sgn, tpar, rtn
    cdef double xp[MAX_DEG + 1]
    cdef double yp[MAX_DEG + 1]
    cdef double vk[45]
    cdef double vg[45]
    cdef double gkx[45]
    cdef double gky[45]
    cdef double ggx[45]
    cdef double ggy[45]
    cdef double rtx[60]
    cdef double rty[60]
    cdef double tv[8]

    with nogil:
        for t in range(nt):
            cx = (coords[t, 0, 0] + coords[t, 1, 0] + coords[t, 2, 0]) / 3.0
            cy = (coords[t, 0, 1] + coords[t, 1, 1] + coords[t, 2, 1]) / 3.0
            s0 = sqrt((coords[t, 1, 0] - coords[t, 0, 0]) ** 2 + (coords[t, 1, 1] - coords[t, 0, 1]) ** 2)
            s1 = sqrt((coords[t, 2, 0] - coords[t, 1, 0]) ** 2 + (coords[t, 2, 1] - coords[t, 1, 1]) ** 2)
            s2 = sqrt((coords[t, 0, 0] - coords[t, 2, 0]) ** 2 + (coords[t, 0, 1] - coords[t, 2, 1]) ** 2)
            h = s0
            if s1 > h:
                h = s1
            if s2 > h:
                h = s2
            e1x = coords[t, 1, 0] - coords[t, 0, 0]
            e1y = coords[t, 1, 1] - coords[t, 0, 1]
            e2x = coords[t, 2, 0] - coords[t, 0, 0]
            e2y = coords[t, 2, 1] - coords[t, 0, 1]
            area = 0.5 * (e1x * e2y - e1y * e2x)
            centroids[t, 0] = cx
            centroids[t, 1] = cy
            diameters[t] = h
            areas[t] = area

            for q in range(nq):
                x = coords[t, 0, 0] + tri_pts[q, 0] * e1x + tri_pts[q, 1] * e2x
                y = coords[t, 0, 1] + tri_pts[q, 0] * e1y + tri_pts[q, 1] * e2y
                w = 2.0 * area * tri_wts[q]
                xi = (x - cx) / h
                eta = (y - cy) / h
                _powers(xi, k, xp)
                _powers(eta, k, yp)
                for i in range(mk):
                    a_ = expk[i, 0]
                    b_ = expk[i, 1]
                    vk[i] = xp[a_] * yp[b_]
                    gkx[i] = a_ * xp[a_ - 1] * yp[b_] / h if a_ > 0 else 0.0
                    gky[i] = b_ * xp[a_] * yp[b_ - 1] / h if b_ > 0 else 0.0
                for i in range(mg):
                    a_ = expg[i, 0]
                    b_ = expg[i, 1]
                    vg[i] = xp[a_] * yp[b_]
                    ggx[i] = a_ * xp[a_ - 1] * yp[b_] / h if a_ > 0 else 0.0
                    ggy[i] = b_ * xp[a_] * yp[b_ - 1] / h if b_ > 0 else 0.0
                for b in range(nrt):
                    rtx[b] = 0.0
                    rty[b] = 0.0
                for i in range(mk):
                    rtx[i] = vk[i]
                    rty[mk + i] = vk[i]
                for j in range(me):
                    rtx[2 * mk + j] = xi * vk[mk - me + j]
                    rty[2 * mk + j] = eta * vk[mk - me + j]

                for i in range(mk):
                    for j in range(mk):
                        mass_k[t, i, j] += w * vk[i] * vk[j]
                        stiff_kk[t, 0, i, j] += w * gkx[i] * vk[j]
                        stiff_kk[t, 1, i, j] += w * gky[i] * vk[j]
                for i in range(mg):
                    for j in range(mg):
                        mass_g[t, i, j] += w * vg[i] * vg[j]
                    for j in range(mk):
                        mass_gk[t, i, j] += w * vg[i] * vk[j]
                        stiff_gk[t, 0, i, j] += w * ggx[i] * vk[j]
                        stiff_gk[t, 1, i, j] += w * ggy[i] * vk[j]
                    for b in range(nrt):
                        rt_int[t, 0, i, b] += w * vg[i] * rtx[b]
                        rt_int[t, 1, i, b] += w * vg[i] * rty[b]

            for e in range(3):
                p0x = edge_coords[t, e, 0, 0]
                p0y = edge_coords[t, e, 0, 1]
                p1x = edge_coords[t, e, 1, 0]
                p1y = edge_coords[t, e, 1, 1]
                L = sqrt((p1x - p0x) ** 2 + (p1y - p0y) ** 2)
                tx = (p1x - p0x) / L
                ty = (p1y - p0y) / L
                sgn = edge_signs[t, e]
                nx = sgn * ty
                ny = -sgn * tx
                normals[t, e, 0] = nx
                normals[t, e, 1] = ny
                elen[t, e] = L

                for q in range(nqe):
                    tpar = edge_pts[q]
                    x = 0.5 * (p0x + p1x) + 0.5 * tpar * (p1x - p0x)
                    y = 0.5 * (p0y + p1y) + 0.5 * tpar * (p1y - p0y)
                    wq = 0.5 * L * edge_wts[q]
                    xi = (x - cx) / h
                    eta = (y - cy) / h
                    _powers(xi, k, xp)
                    _powers(eta, k, yp)
                    _powers(tpar, k, tv)
                    for i in range(mk):
                        vk[i] = xp[expk[i, 0]] * yp[expk[i, 1]]
                    for i in range(mg):
                        vg[i] = xp[expg[i, 0]] * yp[expg[i, 1]]
                    for b in range(nrt):
                        rtx[b] = 0.0
                        rty[b] = 0.0
                    for i in range(mk):
                        rtx[i] = vk[i]
                        rty[mk + i] = vk[i]
                    for j in range(me):
                        rtx[2 * mk + j] = xi * vk[mk - me + j]
                        rty[2 * mk + j] = eta * vk[mk - me + j]

                    for i in range(mg):
                        for l in range(me):
                            edge_gk[t, e, i, l] += wq * vg[i] * tv[l]
                    for i in range(mk):
                        for l in range(me):
                            edge_kk[t, e, i, l] += wq * vk[i] * tv[l]
                        for j in range(mk):
                            edge_bmass[t, e, i, j] += wq * vk[i] * vk[j]
                    for l in range(me):
                        for m in range(me):
                            edge_mass[t, e, l, m] += wq * tv[l] * tv[m]
                        for b in range(nrt):
                            rtn = rtx[b] * nx + rty[b] * ny
                            rt_edge[t, e, l, b] += wq * tv[l] * rtn

    return {
        "centroids": centroids_a, "diameters": diameters_a, "areas": areas_a,
        "normals_out": normals_a, "edge_lengths": elen_a,
        "mass_k": mass_k_a, "mass_g": mass_g_a, "mass_gk": mass_gk_a,
        "stiff_gk": stiff_gk_a, "stiff_kk": stiff_kk_a,
        "rt_int": rt_int_a, "rt_edge": rt_edge_a,
        "edge_gk": edge_gk_a, "edge_kk": edge_kk_a,
        "edge_mass": edge_mass_a, "edge_bmass": edge_bmass_a,
    }
