"""Curvature of the spatial metric and spacetime curvature blocks.

Christoffel symbols are kept in two layouts:

* lowered  Gl[..., i, j, k] = (1/2)(d_i g_jk + d_k g_ij - d_j g_ik),
  i.e. the middle slot is the one that is raised in mixed form;
* mixed    Gm[..., c, a, b] = Gamma^c_{ab} = g^{cj} Gl[..., a, j, b].

Ricci is assembled directly in mixed form; the Riemann (0,4) tensor is
optional and only materialized where a test or curvature-block assembly
needs it.  Metric derivatives vanish off the active directions, which the
assembly exploits exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidStateError
from .fields import (GridSpec, SolutionState, TensorField, derivative_array,
                     g_norm, scalar_field)


def metric_first_derivatives(g: TensorField) -> dict[int, np.ndarray]:
    """d_u g for each active direction u with a nonzero derivative."""
    out = {}
    for u in g.grid.active:
        d = derivative_array(g.grid, g.data, u, 1)
        if np.any(d):
            out[u] = d
    return out


def metric_second_derivatives(g: TensorField, dg: dict[int, np.ndarray]) -> dict[tuple[int, int], np.ndarray]:
    """d_u d_v g for active pairs u <= v, dropping exact zeros."""
    out = {}
    for i, u in enumerate(g.grid.active):
        if u not in dg:
            continue
        for v in g.grid.active[i:]:
            d = derivative_array(g.grid, dg[u], v, 1)
            if np.any(d):
                out[(u, v)] = d
                out[(v, u)] = d
    # same-direction second derivative via the dedicated order-2 path
    for u in g.grid.active:
        if u in dg:
            d = derivative_array(g.grid, g.data, u, 2)
            if np.any(d):
                out[(u, u)] = d
    return out


@dataclass
class GeometryCache:
    """Derived curvature quantities of a spatial metric slice."""

    g: TensorField
    ginv: TensorField
    dg: dict                      # direction -> d_u g_{jk}
    ddg: dict                     # (u, v) -> d_u d_v g_{jk}
    gamma_lower: TensorField | None = None   # (0,3)
    gamma_mixed: TensorField | None = None   # (1,2), data [c, a, b] = Gamma^c_ab
    ricci_mixed: TensorField | None = None   # (1,1), data [i, j] = Ric^i_j
    scalar_curv: TensorField | None = None
    riemann: TensorField | None = None       # (0,4)

    @property
    def flat(self) -> bool:
        return not self.dg


def christoffel(g: TensorField, ginv: TensorField) -> GeometryCache:
    """Christoffel symbols of g in lowered and mixed form."""
    grid = g.grid
    D = grid.dim
    dg = metric_first_derivatives(g)
    ddg = metric_second_derivatives(g, dg)
    cache = GeometryCache(g=g, ginv=ginv, dg=dg, ddg=ddg)
    if not dg:
        zero3 = np.zeros(grid.shape + (D, D, D))
        cache.gamma_lower = TensorField(grid, (0, 3), zero3)
        cache.gamma_mixed = TensorField(grid, (1, 2), zero3.copy())
        return cache
    Gl = np.zeros(grid.shape + (D, D, D))
    for u, d in dg.items():
        i = u - 1
        Gl[..., i, :, :] += 0.5 * d                        # d_i g_jk
        Gl[..., :, :, i] += 0.5 * d                        # d_k g_ij
        Gl[..., :, i, :] -= 0.5 * d                        # - d_j g_ik
    Gm = np.einsum("...cj,...ajb->...cab", ginv.data, Gl, optimize=True)
    cache.gamma_lower = TensorField(grid, (0, 3), Gl)
    cache.gamma_mixed = TensorField(grid, (1, 2), Gm)
    return cache


def _require_gamma(cache: GeometryCache) -> GeometryCache:
    if cache.gamma_lower is None:
        fresh = christoffel(cache.g, cache.ginv)
        cache.gamma_lower = fresh.gamma_lower
        cache.gamma_mixed = fresh.gamma_mixed
    return cache


def ricci_mixed(g: TensorField, ginv: TensorField, cache: GeometryCache | None = None) -> GeometryCache:
    """Mixed Ricci tensor of g.

    Ric^i_j = (1/2) g^{cd} g^{ie} { d_e d_c g_dj + d_c d_j g_ed
              - d_e d_j g_cd - d_c d_d g_ej }
              + g^{ab} g^{cd} g^{ie} Gl_eac Gl_jbd
              - g^{ab} g^{cd} g^{ie} Gl_eaj Gl_cbd
    with the second-derivative sums restricted (exactly) to active
    directions.
    """
    if cache is None:
        cache = christoffel(g, ginv)
    _require_gamma(cache)
    grid = g.grid
    D = grid.dim
    if cache.flat:
        cache.ricci_mixed = TensorField(grid, (1, 1), np.zeros(grid.shape + (D, D)))
        cache.scalar_curv = scalar_field(grid, np.zeros(grid.shape))
        return cache

    gi = ginv.data
    ddg = cache.ddg
    ric = np.zeros(grid.shape + (D, D))

    # second-derivative block, term by term; u, v run over active directions
    for (u, v), d in ddg.items():
        e, c = u - 1, v - 1
        # (1/2) g^{cd} g^{ie} d_e d_c g_dj   (e = u, c = v)
        ric += 0.5 * np.einsum("...e,...d,...dj->...ej",
                               gi[..., :, e], gi[..., c, :], d, optimize=True)
        # -(1/2) g^{cd} g^{ie} d_e d_j g_cd  (e = u, j = v free but derivative
        # direction: nonzero only at j = v)
        tr = np.einsum("...cd,...cd->...", gi, d, optimize=True)
        ric[..., :, c] -= 0.5 * gi[..., :, e] * tr[..., None]
    for (u, v), d in ddg.items():
        if u > v:
            continue
        # (1/2) g^{cd} g^{ie} d_c d_j g_ed: derivative pair (c, j); both
        # (c, j) = (u, v) and (v, u) contribute when u != v.
        for cdir, jdir in {(u, v), (v, u)}:
            c, j = cdir - 1, jdir - 1
            ric[..., :, j] += 0.5 * np.einsum(
                "...d,...ie,...ed->...i", gi[..., c, :], gi, d, optimize=True)
        # -(1/2) g^{cd} g^{ie} d_c d_d g_ej: weight by g^{cd} at the active pair
        w = gi[..., u - 1, v - 1] if u == v else 2.0 * gi[..., u - 1, v - 1]
        ric -= 0.5 * np.einsum("...,...ie,...ej->...ij", w, gi, d, optimize=True)

    # Gamma Gamma corrections
    Gl = cache.gamma_lower.data
    # P^b_ec = g^{ab} Gl_eac ; Q_e^{bd} = g^{cd} P^b_ec ; R_ej = Q_e^{bd} Gl_jbd
    P = np.einsum("...ab,...eac->...bec", gi, Gl, optimize=True)
    Q = np.einsum("...cd,...bec->...ebd", gi, P, optimize=True)
    R1 = np.einsum("...ebd,...jbd->...ej", Q, Gl, optimize=True)
    # V^b = g^{cd} Gl_cbd ; R2_ej = Gl_eaj g^{ab} V_b
    V = np.einsum("...cd,...cbd->...b", gi, Gl, optimize=True)
    R2 = np.einsum("...eaj,...ab,...b->...ej", Gl, gi, V, optimize=True)
    ric += np.einsum("...ie,...ej->...ij", gi, R1 - R2, optimize=True)

    cache.ricci_mixed = TensorField(grid, (1, 1), ric)
    cache.scalar_curv = scalar_field(grid, np.einsum("...ii->...", ric))
    return cache


def scalar_curvature(g: TensorField, ginv: TensorField, cache: GeometryCache | None = None) -> TensorField:
    cache = ricci_mixed(g, ginv, cache)
    return cache.scalar_curv


def riemann(g: TensorField, ginv: TensorField, cache: GeometryCache | None = None) -> TensorField:
    """Full (0,4) Riemann tensor of g.

    Riem_ijkl = (1/2){ d_j d_k g_il + d_i d_l g_jk - d_i d_k g_jl
                - d_j d_l g_ik } + g^{ab} Gl_ial Gl_jbk - g^{ab} Gl_iak Gl_jbl
    """
    if cache is None:
        cache = christoffel(g, ginv)
    _require_gamma(cache)
    grid = g.grid
    D = grid.dim
    R = np.zeros(grid.shape + (D, D, D, D))
    for (u, v), d in cache.ddg.items():
        j, k = u - 1, v - 1
        R[..., :, j, k, :] += 0.5 * d              # d_j d_k g_il
        R[..., j, :, :, k] += 0.5 * d              # d_i d_l g_jk (i=u, l=v)
        R[..., j, :, k, :] -= 0.5 * np.swapaxes(d, -1, -2)  # d_i d_k g_jl
        R[..., :, j, :, k] -= 0.5 * np.swapaxes(d, -1, -2)  # d_j d_l g_ik
    if not cache.flat:
        Gl = cache.gamma_lower.data
        Gup = np.einsum("...ab,...ibl->...ial", ginv.data, Gl, optimize=True)
        R += np.einsum("...ial,...jak->...ijkl", Gup, Gl, optimize=True)
        R -= np.einsum("...iak,...jal->...ijkl", Gup, Gl, optimize=True)
    cache.riemann = TensorField(grid, (0, 4), R)
    return cache.riemann


@dataclass
class CurvatureBlocks:
    """Spacetime curvature blocks in CMC-transported coordinates.

    spatial_block [a,b,c,d] = R4_{ab}^{cd} = K^c_a K^d_b - K^d_a K^c_b + Riem(g)_{ab}^{cd}
    mixed_block   [c,a]     = R4_{a0}^{c0} = t^-1 K^c_a + K^c_e K^e_a + D_{a0}^{c0}
    zero_block    [b,c,d]   = n^-1 R4_{0b}^{cd}
    kretschmann              = S.S + 4 M.M - 4 |zero block|_g^2 pointwise
    """

    spatial_block: TensorField    # stored valence (2,2)
    mixed_block: TensorField      # (1,1)
    zero_block: TensorField       # (1 lower, 2 upper), stored valence (2,1)
    kretschmann: TensorField      # scalar


def _mixed_block(state: SolutionState, dt_tK: np.ndarray,
                 cache: GeometryCache, dn: dict[int, np.ndarray],
                 ddn: dict[tuple[int, int], np.ndarray]) -> np.ndarray:
    t = state.t
    K = state.K.data
    n = state.n.data
    D = state.grid.dim
    inv_n = 1.0 / n
    M = (K / t + np.einsum("...ce,...ea->...ca", K, K, optimize=True)
         - (inv_n / t)[..., None, None] * dt_tK
         + ((inv_n - 1.0) / t)[..., None, None] * K)
    if dn:
        hess = np.zeros(state.grid.shape + (D, D))
        for (u, v), d in ddn.items():
            hess[..., u - 1, v - 1] = d
            hess[..., v - 1, u - 1] = d
        M -= inv_n[..., None, None] * np.einsum(
            "...ec,...ae->...ca", state.ginv.data, hess, optimize=True)
        grad = np.zeros(state.grid.shape + (D,))
        for u, d in dn.items():
            grad[..., u - 1] = d
        M += inv_n[..., None, None] * np.einsum(
            "...ec,...fae,...f->...ca", state.ginv.data,
            cache.gamma_mixed.data, grad, optimize=True)
    return M


def _zero_block(state: SolutionState, cache: GeometryCache) -> np.ndarray:
    grid = state.grid
    D = grid.dim
    K = state.K.data
    gi = state.ginv.data
    Z = np.zeros(grid.shape + (D, D, D))
    dK = {u: derivative_array(grid, K, u, 1) for u in grid.active}
    dK = {u: d for u, d in dK.items() if np.any(d)}
    for u, d in dK.items():
        e = u - 1
        # g^{ce} d_e K^d_b - g^{de} d_e K^c_b
        Z += np.einsum("...c,...db->...bcd", gi[..., :, e], d, optimize=True)
        Z -= np.einsum("...d,...cb->...bcd", gi[..., :, e], d, optimize=True)
    if not cache.flat:
        Gm = cache.gamma_mixed.data   # [f, e, b] = Gamma^f_{eb}
        GK = np.einsum("...def,...fb->...bed", Gm, K, optimize=True)
        KG = np.einsum("...feb,...df->...bed", Gm, K, optimize=True)
        Z += np.einsum("...ce,...bed->...bcd", gi, GK - KG, optimize=True)
        Z -= np.einsum("...de,...bec->...bcd", gi, GK - KG, optimize=True)
    return Z


def curvature_blocks(state: SolutionState, dt_tK: TensorField,
                     cache: GeometryCache | None = None) -> CurvatureBlocks:
    """Assemble the three curvature blocks and the Kretschmann scalar.

    ``dt_tK`` is the evolution right-hand side for d_t(t K^i_j), injected by
    the caller (identically zero on the exact Kasner solution).
    """
    if np.min(state.n.data) <= 0.0:
        raise InvalidStateError("lapse must be positive to form curvature blocks")
    grid = state.grid
    D = grid.dim
    if cache is None:
        cache = christoffel(state.g, state.ginv)
    _require_gamma(cache)
    K = state.K.data

    KwK = (np.einsum("...ca,...db->...abcd", K, K, optimize=True)
           - np.einsum("...da,...cb->...abcd", K, K, optimize=True))
    if cache.flat:
        S = KwK
    else:
        R04 = riemann(state.g, state.ginv, cache).data
        gi = state.ginv.data
        Rup = np.einsum("...abef,...ec,...fd->...abcd", R04, gi, gi, optimize=True)
        S = KwK + Rup

    dn = {u: derivative_array(grid, state.n.data, u, 1) for u in grid.active}
    dn = {u: d for u, d in dn.items() if np.any(d)}
    ddn = {}
    for i, u in enumerate(grid.active):
        if u in dn:
            ddn[(u, u)] = derivative_array(grid, state.n.data, u, 2)
            for v in grid.active[i + 1:]:
                d = derivative_array(grid, dn[u], v, 1)
                if np.any(d):
                    ddn[(u, v)] = d
    M = _mixed_block(state, dt_tK.data, cache, dn, ddn)
    Z = _zero_block(state, cache)

    kret = (np.einsum("...abcd,...cdab->...", S, S, optimize=True)
            + 4.0 * np.einsum("...ca,...ac->...", M, M, optimize=True))
    zfield = TensorField(grid, (2, 1), np.moveaxis(Z, -3, -1))  # [c, d, b]
    znorm = g_norm(zfield, state.g, state.ginv)
    kret -= 4.0 * znorm * znorm

    return CurvatureBlocks(
        spatial_block=TensorField(grid, (2, 2), S),
        mixed_block=TensorField(grid, (1, 1), M),
        zero_block=TensorField(grid, (2, 1), np.moveaxis(Z, -3, -1)),
        kretschmann=scalar_field(grid, kret),
    )


def _lapse_derivatives(state: SolutionState):
    grid = state.grid
    dn = {u: derivative_array(grid, state.n.data, u, 1) for u in grid.active}
    dn = {u: d for u, d in dn.items() if np.any(d)}
    ddn = {}
    for i, u in enumerate(grid.active):
        if u in dn:
            ddn[(u, u)] = derivative_array(grid, state.n.data, u, 2)
            for v in grid.active[i + 1:]:
                d = derivative_array(grid, dn[u], v, 1)
                if np.any(d):
                    ddn[(u, v)] = d
    return dn, ddn


def _spatial_self_contraction_chunked(state: SolutionState, cache: GeometryCache,
                                      chunk_bytes: int) -> np.ndarray:
    """Pointwise sum S_{ab}^{cd} S_{cd}^{ab} without holding more than a
    chunk of rank-4 data.

    Derivative-built inputs (ddg, lowered Christoffels) are precomputed on
    the full grid; the rank-4 assembly and contraction are pure pointwise
    algebra and run over flattened grid-point chunks.
    """
    grid = state.grid
    D = grid.dim
    n_pts = grid.n_points
    gi = state.ginv.data.reshape(n_pts, D, D)
    K = state.K.data.reshape(n_pts, D, D)
    Gl = cache.gamma_lower.data.reshape(n_pts, D, D, D)
    ddg = {pair: d.reshape(n_pts, D, D) for pair, d in cache.ddg.items()}
    out = np.empty(n_pts)
    per_point = D ** 4 * 8 * 3
    chunk = max(1, int(chunk_bytes // per_point))
    for start in range(0, n_pts, chunk):
        sl = slice(start, min(start + chunk, n_pts))
        m = sl.stop - sl.start
        R = np.zeros((m, D, D, D, D))
        for (u, v), d in ddg.items():
            i, j = u - 1, v - 1
            dc = d[sl]
            R[:, :, i, j, :] += 0.5 * dc
            R[:, i, :, :, j] += 0.5 * dc
            R[:, i, :, j, :] -= 0.5 * dc
            R[:, :, i, :, j] -= 0.5 * dc
        Gc = Gl[sl]
        gic = gi[sl]
        Gup = np.einsum("mab,mibl->mial", gic, Gc, optimize=True)
        R += np.einsum("mial,mjak->mijkl", Gup, Gc, optimize=True)
        R -= np.einsum("miak,mjal->mijkl", Gup, Gc, optimize=True)
        S = np.einsum("mabef,mec,mfd->mabcd", R, gic, gic, optimize=True)
        Kc = K[sl]
        S += np.einsum("mca,mdb->mabcd", Kc, Kc, optimize=True)
        S -= np.einsum("mda,mcb->mabcd", Kc, Kc, optimize=True)
        out[sl] = np.einsum("mabcd,mcdab->m", S, S, optimize=True)
    return out.reshape(grid.shape)


def kretschmann_field(state: SolutionState, dt_tK: TensorField,
                      cache: GeometryCache | None = None,
                      chunk_bytes: int = 1 << 28) -> np.ndarray:
    """Pointwise Kretschmann scalar via the three-block identity.

    Spatially homogeneous slices reduce the spatial-block self-contraction
    to traces of powers of K (exact); otherwise the rank-4 algebra runs in
    grid-point chunks bounded by ``chunk_bytes``.
    """
    grid = state.grid
    if cache is None:
        cache = christoffel(state.g, state.ginv)
    _require_gamma(cache)
    dn, ddn = _lapse_derivatives(state)
    M = _mixed_block(state, dt_tK.data, cache, dn, ddn)
    kret = 4.0 * np.einsum("...ca,...ac->...", M, M, optimize=True)

    dK_any = any(np.any(derivative_array(grid, state.K.data, u, 1)) for u in grid.active)
    if cache.flat and not dK_any:
        K = state.K.data
        tr2 = np.einsum("...ab,...ba->...", K, K, optimize=True)
        K2 = np.einsum("...ab,...bc->...ac", K, K, optimize=True)
        tr4 = np.einsum("...ab,...ba->...", K2, K2, optimize=True)
        kret += 2.0 * (tr2 * tr2 - tr4)
        return kret
    kret += _spatial_self_contraction_chunked(state, cache, chunk_bytes)
    Z = _zero_block(state, cache)
    zfield = TensorField(grid, (2, 1), np.moveaxis(Z, -3, -1))
    znorm = g_norm(zfield, state.g, state.ginv)
    kret -= 4.0 * znorm * znorm
    return kret


def kretschmann_extrema(state: SolutionState, dt_tK: TensorField,
                        cache: GeometryCache | None = None,
                        chunk_bytes: int = 1 << 28) -> tuple[float, float]:
    """Min and max of the Kretschmann scalar over the grid."""
    kret = kretschmann_field(state, dt_tK, cache, chunk_bytes)
    return float(np.min(kret)), float(np.max(kret))
