"""Grid tensor fields on the unit torus with a few active directions.

Fields live on T^D but are allowed to vary only along a short list of
"active" coordinate directions (at most 3), each discretized by a uniform
periodic grid on [0, 1).  All D^(l+m) tensor components are stored; the
grid axes come first in ``data``, the component axes last.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, InvalidStateError

_SCHEMES = ("spectral", "fd4")
MAX_DERIV_ORDER = 6


@dataclass(frozen=True)
class GridSpec:
    """Discretization of T^D reduced to ``active`` varying directions.

    dim     -- number of spatial dimensions D
    active  -- 1-based indices of the directions fields may vary along
    points  -- grid points per active direction (even, >= 8)
    scheme  -- 'spectral' (FFT) or 'fd4' (4th-order centered stencils)
    dealias -- apply the 2/3-rule mode mask inside derivatives
    """

    dim: int
    active: tuple[int, ...]
    points: tuple[int, ...]
    scheme: str = "spectral"
    dealias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(int(a) for a in self.active))
        object.__setattr__(self, "points", tuple(int(n) for n in self.points))
        if self.dim < 1:
            raise ConfigError("grid.dim: must be a positive integer")
        if not (1 <= len(self.active) <= 3):
            raise ConfigError("grid.active: need between 1 and 3 active directions")
        if len(set(self.active)) != len(self.active):
            raise ConfigError("grid.active: directions must be distinct")
        if any(a < 1 or a > self.dim for a in self.active):
            raise ConfigError("grid.active: directions must lie in 1..dim")
        if len(self.points) != len(self.active):
            raise ConfigError("grid.points: one entry per active direction")
        if any(n < 8 or n % 2 for n in self.points):
            raise ConfigError("grid.points: all entries must be even and >= 8")
        if self.scheme not in _SCHEMES:
            raise ConfigError(f"grid.scheme: unknown scheme {self.scheme!r}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def n_points(self) -> int:
        return int(np.prod(self.points))

    def axis_of(self, direction: int) -> int:
        """Grid axis storing the given 1-based direction."""
        return self.active.index(direction)

    def coordinates(self) -> list[np.ndarray]:
        """Per-active-direction coordinate arrays, broadcastable to shape."""
        coords = []
        for ax, n in enumerate(self.points):
            x = np.arange(n) / n
            sh = [1] * len(self.points)
            sh[ax] = n
            coords.append(x.reshape(sh))
        return coords


@dataclass
class TensorField:
    """A type-(l, m) tensor field; ``valence = (l, m)`` with l, m <= 2.

    data has shape grid.shape + (D,) * (l + m).  ``symmetric`` may be set
    for rank-2 tensors stored with index symmetry; it is validated, not
    assumed.
    """

    grid: GridSpec
    valence: tuple[int, int]
    data: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        l, m = self.valence
        if l < 0 or m < 0 or l > 2 or m > 2:
            raise DomainError(f"unsupported valence {self.valence}")
        want = self.grid.shape + (self.grid.dim,) * (l + m)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != want:
            raise DomainError(
                f"data shape {self.data.shape} does not match grid+valence {want}")
        if self.symmetric:
            if l + m != 2:
                raise DomainError("symmetric flag only applies to rank-2 tensors")
            if np.max(np.abs(self.data - np.swapaxes(self.data, -1, -2))) != 0.0:
                raise InvalidStateError("field flagged symmetric is not symmetric")

    @property
    def rank(self) -> int:
        return sum(self.valence)

    @property
    def n_grid_axes(self) -> int:
        return len(self.grid.shape)

    def copy(self) -> "TensorField":
        return replace(self, data=self.data.copy())

    def zeros_like(self) -> "TensorField":
        return replace(self, data=np.zeros_like(self.data), symmetric=False)


def constant_field(grid: GridSpec, valence, component_array, symmetric=False) -> TensorField:
    """Spatially constant field from a single component array."""
    comp = np.asarray(component_array, dtype=float)
    data = np.broadcast_to(comp, grid.shape + comp.shape).copy()
    return TensorField(grid, tuple(valence), data, symmetric=symmetric)


def scalar_field(grid: GridSpec, values) -> TensorField:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(grid.shape, float(values))
    return TensorField(grid, (0, 0), values)


def _is_constant_along(data: np.ndarray, axis: int) -> bool:
    # Exact test; derivatives of exactly-constant slices are exactly zero.
    if data.shape[axis] == 1:
        return True
    lead = np.take(data, [0], axis=axis)
    return bool(np.all(data == lead))


def _spectral_factor(n: int, order: int) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n)
    fac = (2j * np.pi * k) ** order
    if order % 2:
        fac[n // 2] = 0.0  # Nyquist mode has no consistent odd derivative
    return fac


def _dealias_mask(n: int) -> np.ndarray:
    k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    return (k <= n // 3).astype(float)


def _spectral_derivative(data: np.ndarray, axis: int, order: int, dealias: bool) -> np.ndarray:
    n = data.shape[axis]
    fac = _spectral_factor(n, order)
    if dealias:
        fac = fac * _dealias_mask(n)
    sh = [1] * data.ndim
    sh[axis] = n
    spec = np.fft.fft(data, axis=axis) * fac.reshape(sh)
    return np.fft.ifft(spec, axis=axis).real


def _fd4_first(data: np.ndarray, axis: int, h: float) -> np.ndarray:
    p1 = np.roll(data, -1, axis=axis)
    m1 = np.roll(data, 1, axis=axis)
    p2 = np.roll(data, -2, axis=axis)
    m2 = np.roll(data, 2, axis=axis)
    return (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)


def _fd4_second(data: np.ndarray, axis: int, h: float) -> np.ndarray:
    p1 = np.roll(data, -1, axis=axis)
    m1 = np.roll(data, 1, axis=axis)
    p2 = np.roll(data, -2, axis=axis)
    m2 = np.roll(data, 2, axis=axis)
    return (-p2 + 16.0 * p1 - 30.0 * data + 16.0 * m1 - m2) / (12.0 * h * h)


def derivative_array(grid: GridSpec, data: np.ndarray, direction: int, order: int = 1) -> np.ndarray:
    """Periodic derivative of raw component data along a 1-based direction.

    Directions outside the active list, and data constant along the
    direction, give an exactly-zero result.
    """
    if order < 1 or order > MAX_DERIV_ORDER:
        raise DomainError(f"derivative order must be in 1..{MAX_DERIV_ORDER}")
    if direction < 1 or direction > grid.dim:
        raise DomainError(f"direction {direction} outside 1..{grid.dim}")
    if direction not in grid.active:
        return np.zeros_like(data)
    axis = grid.axis_of(direction)
    if _is_constant_along(data, axis):
        return np.zeros_like(data)
    if grid.scheme == "spectral":
        return _spectral_derivative(data, axis, order, grid.dealias)
    h = 1.0 / grid.points[axis]
    out = data
    remaining = order
    while remaining >= 2:
        out = _fd4_second(out, axis, h)
        remaining -= 2
    if remaining:
        out = _fd4_first(out, axis, h)
    return out


def derivative(f: TensorField, direction: int, order: int = 1) -> TensorField:
    """Componentwise periodic derivative of a tensor field."""
    out = derivative_array(f.grid, f.data, direction, order)
    return TensorField(f.grid, f.valence, out)


def multi_index_derivatives(f: TensorField, max_order: int):
    """All multi-index derivatives over active directions up to max_order.

    Yields (multi_index, data) where multi_index maps 1-based direction to
    derivative count.  Derivatives are built incrementally so each array is
    differentiated once.  The zeroth entry is the field itself.
    """
    if max_order > MAX_DERIV_ORDER:
        raise ConfigError(f"derivative order cap is {MAX_DERIV_ORDER}")
    dirs = f.grid.active
    cache = {(0,) * len(dirs): f.data}
    yield {}, f.data
    frontier = [(0,) * len(dirs)]
    for _ in range(max_order):
        nxt = []
        for idx in frontier:
            for slot, d in enumerate(dirs):
                # only increment slots >= the last incremented one to avoid dupes
                if any(idx[s] > 0 for s in range(slot + 1, len(dirs))):
                    continue
                new = list(idx)
                new[slot] += 1
                new = tuple(new)
                if new in cache:
                    continue
                cache[new] = derivative_array(f.grid, cache[idx], d, 1)
                nxt.append(new)
                yield {dirs[s]: new[s] for s in range(len(dirs)) if new[s]}, cache[new]
        frontier = nxt


def frame_norm(T: TensorField) -> np.ndarray:
    """Pointwise Euclidean norm over all tensor components."""
    axes = tuple(range(T.n_grid_axes, T.data.ndim))
    if not axes:
        return np.abs(T.data)
    return np.sqrt(np.sum(T.data * T.data, axis=axes))


def _metric_dual(T: TensorField, g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Lower every upper index with g and raise every lower index with ginv."""
    l, m = T.valence
    out = T.data
    ng = T.n_grid_axes
    for slot in range(l):  # upper slots first in storage
        out = np.moveaxis(out, ng + slot, -1)
        out = np.einsum("...a,...ab->...b", out, g)
        out = np.moveaxis(out, -1, ng + slot)
    for slot in range(l, l + m):
        out = np.moveaxis(out, ng + slot, -1)
        out = np.einsum("...a,...ab->...b", out, ginv)
        out = np.moveaxis(out, -1, ng + slot)
    return out


def g_norm(T: TensorField, g: TensorField, ginv: TensorField) -> np.ndarray:
    """Pointwise tensor norm taken with the Riemannian metric g.

    Every upper index pair is contracted with g, every lower pair with
    g^-1.  Scalars are returned as |value|.
    """
    if T.rank == 0:
        return np.abs(T.data)
    dual = _metric_dual(T, g.data, ginv.data)
    axes = tuple(range(T.n_grid_axes, T.data.ndim))
    sq = np.sum(T.data * dual, axis=axes)
    # roundoff can push tiny norms below zero
    return np.sqrt(np.maximum(sq, 0.0))


def torus_mean(grid: GridSpec, values: np.ndarray) -> float:
    """Integral over T^D with the flat measure (fields constant off-grid)."""
    axes = tuple(range(len(grid.shape)))
    return float(np.mean(values, axis=axes))


def lp_norm(grid: GridSpec, pointwise: np.ndarray, p) -> float:
    if p == np.inf:
        return float(np.max(np.abs(pointwise)))
    if p == 2:
        return float(np.sqrt(torus_mean(grid, pointwise * pointwise)))
    raise DomainError("only p = 2 and p = inf are supported")


def sobolev_norm(f: TensorField, M: int, kind: str = "full", metric: str = "frame",
                 g: TensorField | None = None, ginv: TensorField | None = None) -> float:
    """Sobolev norm built from flat-measure L^2 norms of componentwise derivatives.

    kind    -- 'full' sums multi-indices |I| <= M, 'homogeneous' only |I| = M
    metric  -- 'frame' uses the coordinate-frame norm, 'g' contracts each
               differentiated tensor with g / g^-1 before integrating
    """
    if M < 0 or M > MAX_DERIV_ORDER:
        raise ConfigError(f"sobolev order must be in 0..{MAX_DERIV_ORDER}")
    if kind not in ("full", "homogeneous"):
        raise DomainError(f"unknown kind {kind!r}")
    if metric not in ("frame", "g"):
        raise DomainError(f"unknown metric {metric!r}")
    if metric == "g" and (g is None or ginv is None):
        raise DomainError("metric='g' requires g and ginv fields")
    total = 0.0
    for idx, data in multi_index_derivatives(f, M):
        order = sum(idx.values())
        if kind == "homogeneous" and order != M:
            continue
        fld = TensorField(f.grid, f.valence, data)
        pw = frame_norm(fld) if metric == "frame" else g_norm(fld, g, ginv)
        total += torus_mean(f.grid, pw * pw)
    return float(np.sqrt(total))


def w_infty_norm(f: TensorField, M: int, metric: str = "frame",
                 g: TensorField | None = None, ginv: TensorField | None = None,
                 kind: str = "full") -> float:
    """W^{M,infty} norm: sum over multi-indices of sup pointwise norms."""
    if M < 0 or M > MAX_DERIV_ORDER:
        raise ConfigError(f"derivative order must be in 0..{MAX_DERIV_ORDER}")
    total = 0.0
    for idx, data in multi_index_derivatives(f, M):
        order = sum(idx.values())
        if kind == "homogeneous" and order != M:
            continue
        fld = TensorField(f.grid, f.valence, data)
        pw = frame_norm(fld) if metric == "frame" else g_norm(fld, g, ginv)
        total += float(np.max(pw))
    return total


def invert_metric(g: TensorField) -> TensorField:
    """Pointwise symmetric inverse of an SPD (0,2) metric field."""
    inv = np.linalg.inv(g.data)
    inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
    return TensorField(g.grid, (2, 0), inv, symmetric=True)


def check_spd(g: TensorField) -> None:
    """Raise InvalidStateError unless g is SPD at every grid point."""
    sym = 0.5 * (g.data + np.swapaxes(g.data, -1, -2))
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        raise InvalidStateError("metric is not positive definite at some grid point")


@dataclass
class SolutionState:
    """A CMC time slice: metric, inverse, mixed second fundamental form, lapse."""

    t: float
    g: TensorField
    ginv: TensorField
    K: TensorField
    n: TensorField

    def __post_init__(self):
        if self.t <= 0.0:
            raise DomainError("slice time t must be positive")

    def validate(self, inv_tol: float = 1e-10) -> None:
        check_spd(self.g)
        ident = np.einsum("...ab,...bc->...ac", self.ginv.data, self.g.data)
        eye = np.eye(self.g.grid.dim)
        if np.max(np.abs(ident - eye)) > inv_tol:
            raise InvalidStateError("ginv . g deviates from the identity")
        if np.min(self.n.data) <= 0.0:
            raise InvalidStateError("lapse must be positive everywhere")

    @property
    def grid(self) -> GridSpec:
        return self.g.grid


# ---------------------------------------------------------------------------
# field snapshots: text header + CSV payload, row-major over grid points then
# component indices
# ---------------------------------------------------------------------------

def save_field(path, f: TensorField, t: float | None = None) -> None:
    g = f.grid
    header = (
        f"kasnerlab-field dim={g.dim}"
        f" active={','.join(map(str, g.active))}"
        f" points={','.join(map(str, g.points))}"
        f" scheme={g.scheme}"
        f" valence={f.valence[0]},{f.valence[1]}"
        f" t={'' if t is None else format(t, '.17g')}"
    )
    flat = f.data.reshape(g.n_points, -1)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in flat:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_field(path) -> tuple[TensorField, float | None]:
    with open(path) as fh:
        header = fh.readline().strip()
        rows = [line for line in fh if line.strip()]
    tokens = header.split()
    if not tokens or tokens[0] != "kasnerlab-field":
        raise ConfigError(f"{path}: not a field snapshot")
    kv = dict(token.split("=", 1) for token in tokens[1:])
    grid = GridSpec(
        dim=int(kv["dim"]),
        active=tuple(int(a) for a in kv["active"].split(",")),
        points=tuple(int(n) for n in kv["points"].split(",")),
        scheme=kv.get("scheme", "spectral"),
    )
    valence = tuple(int(v) for v in kv["valence"].split(","))
    t = float(kv["t"]) if kv.get("t") else None
    flat = np.array([[float(v) for v in row.split(",")] for row in rows])
    shape = grid.shape + (grid.dim,) * sum(valence)
    return TensorField(grid, valence, flat.reshape(shape)), t
