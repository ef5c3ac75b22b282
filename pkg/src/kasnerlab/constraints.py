"""Residual monitors for the Hamiltonian, momentum, and CMC-trace conditions.

The artifact never solves the constraint equations; it reports how far a
slice is from satisfying them.  All three residuals vanish to roundoff on
every exact Kasner slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import SolutionState, TensorField, derivative_array
from .geometry import GeometryCache, christoffel, ricci_mixed


@dataclass(frozen=True)
class ConstraintResiduals:
    """Pointwise residual fields plus their sup norms (raw, unrescaled)."""

    hamiltonian: np.ndarray   # scalar field: Sc - K^a_b K^b_a + t^-2
    momentum: np.ndarray      # (0,1) field: nabla_a K^a_i
    cmc_trace: np.ndarray     # scalar field: K^a_a + 1/t
    sup_norms: tuple[float, float, float]


def hamiltonian_residual(state: SolutionState, cache: GeometryCache | None = None) -> np.ndarray:
    """Sc - K^a_b K^b_a + t^-2 pointwise."""
    cache = ricci_mixed(state.g, state.ginv, cache)
    K = state.K.data
    kk = np.einsum("...ab,...ba->...", K, K, optimize=True)
    return cache.scalar_curv.data - kk + state.t ** -2


def momentum_residual(state: SolutionState, cache: GeometryCache | None = None) -> np.ndarray:
    """Covariant divergence d_a K^a_i + Gamma^a_{ab} K^b_i - Gamma^b_{ai} K^a_b."""
    grid = state.grid
    if cache is None or cache.gamma_mixed is None:
        cache = christoffel(state.g, state.ginv)
    K = state.K.data
    div = np.zeros(grid.shape + (grid.dim,))
    for u in grid.active:
        dK = derivative_array(grid, K, u, 1)
        if np.any(dK):
            div += dK[..., u - 1, :]
    if not cache.flat:
        Gm = cache.gamma_mixed.data  # [c, a, b] = Gamma^c_{ab}
        trG = np.einsum("...aab->...b", Gm)
        div += np.einsum("...b,...bi->...i", trG, K, optimize=True)
        div -= np.einsum("...bai,...ab->...i", Gm, K, optimize=True)
    return div


def cmc_residual(state: SolutionState) -> np.ndarray:
    """K^a_a + 1/t pointwise."""
    return np.einsum("...aa->...", state.K.data) + 1.0 / state.t


def constraint_residuals(state: SolutionState, cache: GeometryCache | None = None) -> ConstraintResiduals:
    cache = ricci_mixed(state.g, state.ginv, cache)
    ham = hamiltonian_residual(state, cache)
    mom = momentum_residual(state, cache)
    cmc = cmc_residual(state)
    mom_pw = np.sqrt(np.sum(mom * mom, axis=-1))
    return ConstraintResiduals(
        hamiltonian=ham,
        momentum=mom,
        cmc_trace=cmc,
        sup_norms=(float(np.max(np.abs(ham))),
                   float(np.max(mom_pw)),
                   float(np.max(np.abs(cmc)))),
    )


def rescaled_sups(res: ConstraintResiduals, t: float) -> tuple[float, float, float]:
    """Dimensionless residual sups: t^2 |ham|, t |mom|, t |cmc| = |tr(tK) + 1|."""
    h, m, c = res.sup_norms
    return (t * t * h, t * m, t * c)
