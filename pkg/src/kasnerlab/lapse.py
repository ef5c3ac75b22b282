"""Elliptic CMC lapse solve on a slice.

The lapse equation g^{ab} nabla_a nabla_b n = t^-2 (n - 1) + n Sc is solved
for u = n - 1:

    (L - t^-2 - Sc) u = Sc,      L = g^{ab} d_a d_b - g^{ab} Gamma^c_{ab} d_c,

which keeps the exact-Kasner solve trivially exact (Sc = 0 gives u = 0).
The discrete operator uses the grid's derivative scheme.  Systems with at
most DENSE_LIMIT unknowns are solved by dense LU; larger ones by LGMRES
with a constant-coefficient spectral preconditioner.

The zeroth-order coefficient t^-2 + Sc must stay positive; if it loses
positivity somewhere the slice has left the perturbative regime and the
solver reports that instead of regularizing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import LapseSolveError
from .fields import GridSpec, TensorField, derivative_array, lp_norm, scalar_field
from .geometry import GeometryCache, christoffel

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class LapseSolveReport:
    iterations: int
    final_residual: float   # flat-measure L2 of the discrete equation residual
    n_min: float
    n_max: float


class _Operator:
    """Matrix-free application of L - (t^-2 + Sc) on flattened scalar data."""

    def __init__(self, grid: GridSpec, ginv: np.ndarray, gamma_mixed: np.ndarray | None,
                 zeroth: np.ndarray):
        self.grid = grid
        self.shape_grid = grid.shape
        self.zeroth = zeroth
        self.ginv = ginv
        # drift coefficient b^c = -g^{ab} Gamma^c_{ab}, kept only for active c
        self.drift = {}
        if gamma_mixed is not None and np.any(gamma_mixed):
            for c in grid.active:
                coef = -np.einsum("...ab,...ab->...", ginv,
                                  gamma_mixed[..., c - 1, :, :], optimize=True)
                if np.any(coef):
                    self.drift[c] = coef

    def apply(self, u: np.ndarray) -> np.ndarray:
        """u has shape (batch?,) + grid.shape; derivatives act on grid axes."""
        grid = self.grid
        lead = u.ndim - len(grid.shape)
        out = -self.zeroth * u
        firsts = {}
        for u_dir in grid.active:
            firsts[u_dir] = self._axis_derivative(u, u_dir, 1, lead)
        for i, a_dir in enumerate(grid.active):
            ia = a_dir - 1
            second = self._axis_derivative(u, a_dir, 2, lead)
            out += self.ginv[..., ia, ia] * second
            for b_dir in grid.active[i + 1:]:
                ib = b_dir - 1
                cross = self._axis_derivative(firsts[a_dir], b_dir, 1, lead)
                out += 2.0 * self.ginv[..., ia, ib] * cross
        for c, coef in self.drift.items():
            out += coef * firsts[c]
        return out

    def _axis_derivative(self, data, direction, order, lead):
        grid = self.grid
        if lead == 0:
            return derivative_array(grid, data, direction, order)
        # batch axis first: grid axes are offset; emulate by moving batch last
        moved = np.moveaxis(data, 0, -1)
        res = derivative_array(grid, moved, direction, order)
        return np.moveaxis(res, -1, 0)


def _dense_matrix(op: _Operator) -> np.ndarray:
    n = op.grid.n_points
    eye = np.eye(n).reshape((n,) + op.grid.shape)
    cols = op.apply(eye)          # row i of batch = A e_i
    return cols.reshape(n, n).T


def _spectral_preconditioner(grid: GridSpec, ginv_mean: np.ndarray, zeroth_mean: float):
    """Inverse of the constant-coefficient symbol in Fourier space."""
    ks = np.meshgrid(*[np.fft.fftfreq(n, d=1.0 / n) for n in grid.shape], indexing="ij")
    sym = np.full(grid.shape, -zeroth_mean, dtype=float)
    for i, a in enumerate(grid.active):
        for j, b in enumerate(grid.active):
            sym -= ginv_mean[a - 1, b - 1] * (2.0 * np.pi) ** 2 * ks[i] * ks[j]
    sym[np.abs(sym) < 1e-300] = 1.0

    def solve(v):
        vg = v.reshape(grid.shape)
        return np.fft.ifftn(np.fft.fftn(vg) / sym).real.ravel()

    return scipy.sparse.linalg.LinearOperator(
        (grid.n_points, grid.n_points), matvec=solve)


def solve_lapse(g: TensorField, ginv: TensorField, Sc: TensorField, t: float,
                tol: float = 1e-10, forcing: TensorField | None = None,
                cache: GeometryCache | None = None, max_iter: int = 400,
                ) -> tuple[TensorField, LapseSolveReport]:
    """Solve the CMC lapse equation on a slice; returns (n, report).

    ``forcing``, when given, is added to the right-hand side of the
    u-system (used by manufactured-solution tests).  Raises LapseSolveError
    on loss of positivity of t^-2 + Sc, on Krylov non-convergence, and when
    the solved lapse is not positive everywhere.
    """
    grid = g.grid
    zeroth = t ** -2 + Sc.data
    if np.min(zeroth) <= 0.0:
        raise LapseSolveError(
            f"t^-2 + Sc reaches {np.min(zeroth)} <= 0: the slice has left the "
            "perturbative regime (operator definiteness lost)",
            definiteness_lost=True)

    rhs = Sc.data.copy()
    if forcing is not None:
        rhs += forcing.data
    if not np.any(rhs):
        n = scalar_field(grid, np.ones(grid.shape))
        return n, LapseSolveReport(iterations=0, final_residual=0.0, n_min=1.0, n_max=1.0)

    if cache is None or cache.gamma_mixed is None:
        cache = christoffel(g, ginv)
    op = _Operator(grid, ginv.data,
                   None if cache.flat else cache.gamma_mixed.data, zeroth)

    n_unknowns = grid.n_points
    iterations = 0
    if n_unknowns <= DENSE_LIMIT:
        A = _dense_matrix(op)
        u = scipy.linalg.solve(A, rhs.ravel())
    else:
        ginv_mean = ginv.data.reshape(-1, grid.dim, grid.dim).mean(axis=0)
        M = _spectral_preconditioner(grid, ginv_mean, float(np.mean(zeroth)))
        counter = {"it": 0}

        def cb(_):
            counter["it"] += 1

        A = scipy.sparse.linalg.LinearOperator(
            (n_unknowns, n_unknowns),
            matvec=lambda v: op.apply(v.reshape(grid.shape)).ravel())
        # lgmres measures the Euclidean residual; the contract is on the
        # flat-measure (mean) L2, smaller by sqrt(n_points)
        u, info = scipy.sparse.linalg.lgmres(
            A, rhs.ravel(), M=M, rtol=0.0,
            atol=tol * np.sqrt(n_unknowns),
            maxiter=max_iter, callback=cb)
        iterations = counter["it"]
        if info != 0:
            res = lp_norm(grid, op.apply(u.reshape(grid.shape)) - rhs, 2)
            raise LapseSolveError(
                f"lapse Krylov solve did not converge within {max_iter} iterations",
                final_residual=res)

    u = u.reshape(grid.shape)
    residual = lp_norm(grid, op.apply(u) - rhs, 2)
    if residual > tol:
        raise LapseSolveError(
            f"lapse solve residual {residual} exceeds tolerance {tol}",
            final_residual=residual)
    n_data = 1.0 + u
    n_min = float(np.min(n_data))
    n_max = float(np.max(n_data))
    if n_min <= 0.0:
        raise LapseSolveError(
            f"solved lapse reaches n_min = {n_min} <= 0: the run has left the "
            "perturbative regime", final_residual=residual)
    n = scalar_field(grid, n_data)
    return n, LapseSolveReport(iterations=iterations, final_residual=residual,
                               n_min=n_min, n_max=n_max)
