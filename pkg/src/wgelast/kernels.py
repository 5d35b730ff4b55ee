"""Element-operator kernels with a compiled core and a pure-Python fallback.

The per-element work splits in two stages:

1. *moment integration*: numerical quadrature of every mass/stiffness/trace
   moment array an element needs. This is the hot loop; it runs either in
   the compiled extension ``wgelast._elemcore`` (Cython) or in the batched
   NumPy fallback ``wgelast._elemcore_py``.
2. *operator algebra*: stacked linear solves turning moment arrays into the
   weak-gradient, weak-divergence, flux-reconstruction, and stabilizer
   matrices. Shared by both backends, so they agree to rounding.

Backend selection happens at import: the compiled core is used when it is
importable, else the fallback. Override with ``WGELAST_BACKEND`` set to
``compiled`` or ``python``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import polyspace as ps

try:
    from . import _elemcore as _compiled
except ImportError:
    _compiled = None
from . import _elemcore_py as _pure

_ENV_VAR = "WGELAST_BACKEND"


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _compiled is not None else ("python",)


def default_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").lower()
    if choice in ("auto", ""):
        return "compiled" if _compiled is not None else "python"
    if choice not in ("compiled", "python"):
        raise ValueError(f"{_ENV_VAR} must be 'auto', 'compiled', or 'python', got {choice!r}")
    if choice == "compiled" and _compiled is None:
        raise ImportError("compiled kernel requested but wgelast._elemcore is not built")
    return choice


def _impl(backend: str | None):
    name = backend if backend is not None else default_backend()
    if name == "python":
        return _pure
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel requested but wgelast._elemcore is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


# ---------------------------------------------------------------------------
# local degree-of-freedom layout
#
# [ v0_x (m) | v0_y (m) | edge0_x (k+1) | edge0_y (k+1) | edge1 ... | edge2 ... ]
# with m = dim P_k; edge blocks follow the element-local edge order.
# ---------------------------------------------------------------------------

def interior_dim(k: int) -> int:
    return 2 * ps.tri_dim(k)


def edge_block_dim(k: int) -> int:
    return 2 * (k + 1)


def local_dim(k: int) -> int:
    return interior_dim(k) + 3 * edge_block_dim(k)


def interior_slice(k: int, comp: int) -> slice:
    m = ps.tri_dim(k)
    return slice(comp * m, (comp + 1) * m)


def edge_slice(k: int, local_edge: int, comp: int) -> slice:
    me = k + 1
    start = interior_dim(k) + local_edge * 2 * me + comp * me
    return slice(start, start + me)


@dataclass(frozen=True)
class ElementOperators:
    """Stacked per-element operator matrices over a batch of triangles.

    ``grad`` maps local dofs to the 4 * dim P_{k-1} coefficients of the weak
    gradient (component blocks xx, xy, yx, yy), ``div`` to the dim P_k
    coefficients of the weak divergence, ``recon`` to the flux-space
    coefficients of the H(div) reconstruction. ``stab`` is the local
    stabilizer quadratic form, already scaled by 1/h_T. ``grad_form`` and
    ``div_form`` are the assembled quadratic forms G^T M G and D^T M D.
    """

    k: int
    grad: np.ndarray
    div: np.ndarray
    recon: np.ndarray
    stab: np.ndarray
    grad_form: np.ndarray
    div_form: np.ndarray
    mass_k: np.ndarray
    mass_g: np.ndarray
    centroids: np.ndarray
    diameters: np.ndarray
    areas: np.ndarray
    normals_out: np.ndarray
    edge_lengths: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.grad.shape[0]

    @property
    def n_local(self) -> int:
        return local_dim(self.k)


def moment_arrays(k: int, coords: np.ndarray, edge_coords: np.ndarray,
                  edge_signs: np.ndarray, backend: str | None = None) -> dict:
    """Run the integration stage on a batch of triangles.

    coords: (nt, 3, 2) triangle vertices (counterclockwise);
    edge_coords: (nt, 3, 2, 2) local-edge endpoints in global order;
    edge_signs: (nt, 3) +1/-1 outward-vs-global normal signs.
    """
    coords = np.ascontiguousarray(coords, dtype=float)
    edge_coords = np.ascontiguousarray(edge_coords, dtype=float)
    edge_signs = np.ascontiguousarray(edge_signs, dtype=float)
    tri = ps.triangle_rule(ps.operator_exactness(k))
    edg = ps.edge_rule(ps.operator_exactness(k))
    raw = _impl(backend).moment_arrays(
        k, coords, edge_coords, edge_signs,
        np.ascontiguousarray(tri.points), np.ascontiguousarray(tri.weights),
        np.ascontiguousarray(edg.points), np.ascontiguousarray(edg.weights),
        np.ascontiguousarray(ps.tri_exponents(k)),
        np.ascontiguousarray(ps.tri_exponents(k - 1)),
    )
    return raw


def build_operators(k: int, coords: np.ndarray, edge_coords: np.ndarray,
                   edge_signs: np.ndarray, backend: str | None = None) -> ElementTables:
    """Integration stage plus operator algebra; see :class:`ElementOperators`."""
    k = ps.check_degree(k)
    arr = moment_arrays(k, coords, edge_coords, edge_signs, backend)
    mk = ps.tri_dim(k)
    mg = ps.tri_dim(k - 1)
    me = k + 1
    nrt = ps.rt_dim(k)
    nloc = local_dim(k)
    nt = arr["mass_k"].shape[0]
    nout = arr["normals_out"]

    # weak gradient: one SPD solve per matrix component block (r, c)
    bg = np.zeros((nt, 4, mg, nloc))
    for r in range(2):
        for c in range(2):
            blk = bg[:, 2 * r + c]
            blk[:, :, interior_slice(k, r)] = -arr["stiff_gk"][:, c]
            for e in range(3):
                blk[:, :, edge_slice(k, e, r)] = nout[:, e, c, None, None] * arr["edge_gk"][:, e]
    tau = np.linalg.solve(arr["mass_g"][:, None], bg)
    grad = tau.reshape(nt, 4 * mg, nloc)

    # weak divergence
    bd = np.zeros((nt, mk, nloc))
    for r in range(2):
        bd[:, :, interior_slice(k, r)] = -arr["stiff_kk"][:, r]
        for e in range(3):
            bd[:, :, edge_slice(k, e, r)] = nout[:, e, r, None, None] * arr["edge_kk"][:, e]
    div = np.linalg.solve(arr["mass_k"], bd)

    # flux reconstruction: interior moments against [P_{k-1}]^2, then
    # normal-trace moments per edge
    fmat = np.empty((nt, nrt, nrt))
    fmat[:, :mg] = arr["rt_int"][:, 0]
    fmat[:, mg:2 * mg] = arr["rt_int"][:, 1]
    brec = np.zeros((nt, nrt, nloc))
    for r in range(2):
        brec[:, r * mg:(r + 1) * mg, interior_slice(k, r)] = arr["mass_gk"]
    for e in range(3):
        row = slice(2 * mg + e * me, 2 * mg + (e + 1) * me)
        fmat[:, row] = arr["rt_edge"][:, e]
        for r in range(2):
            brec[:, row, edge_slice(k, e, r)] = nout[:, e, r, None, None] * arr["edge_mass"][:, e]
    recon = np.linalg.solve(fmat, brec)

    # stabilizer: (1/h) <v0 - vb, w0 - wb> over the three edges, per component
    stab = np.zeros((nt, nloc, nloc))
    ih = 1.0 / arr["diameters"]
    for e in range(3):
        bm = ih[:, None, None] * arr["edge_bmass"][:, e]
        cm = ih[:, None, None] * arr["edge_kk"][:, e]
        em = ih[:, None, None] * arr["edge_mass"][:, e]
        for r in range(2):
            si, se = interior_slice(k, r), edge_slice(k, e, r)
            stab[:, si, si] += bm
            stab[:, si, se] -= cm
            stab[:, se, si] -= np.swapaxes(cm, 1, 2)
            stab[:, se, se] += em

    grad_form = np.einsum("tbil,tij,tbjm->tlm", tau, arr["mass_g"], tau, optimize=True)
    div_form = np.einsum("til,tij,tjm->tlm", div, arr["mass_k"], div, optimize=True)

    return ElementOperators(
        k=k, grad=grad, div=div, recon=recon, stab=stab,
        grad_form=grad_form, div_form=div_form,
        mass_k=arr["mass_k"], mass_g=arr["mass_g"],
        centroids=arr["centroids"], diameters=arr["diameters"], areas=arr["areas"],
        normals_out=nout, edge_lengths=arr["edge_lengths"],
    )
