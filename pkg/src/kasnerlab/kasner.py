"""Kasner exponent families and the exact Kasner solution.

The exact solution is -dt^2 + sum_i t^{2 q_i} (dx^i)^2 with exponents
satisfying sum q = sum q^2 = 1.  Moderately anisotropic families
(max |q| < 1/6) exist only for D >= 38 and are built here by perturbing
the D = 36 borderline pattern of fifteen -1/6's and twenty-one +1/6's.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fields import GridSpec, SolutionState, TensorField, constant_field, scalar_field

CONSTRAINT_TOL = 1e-12  # double-precision roundoff scale for <= O(40) summands
MODERATE_BOUND = 1.0 / 6.0


@dataclass(frozen=True)
class KasnerExponents:
    """Ordered Kasner exponents with the two algebraic constraints checked."""

    dim: int
    q: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if self.dim != len(self.q):
            raise DomainError(f"dim={self.dim} but {len(self.q)} exponents given")
        s = math.fsum(self.q)
        s2 = math.fsum(v * v for v in self.q)
        if abs(s - 1.0) > CONSTRAINT_TOL:
            raise DomainError(f"sum of exponents is {s!r}, not 1 within {CONSTRAINT_TOL}")
        if abs(s2 - 1.0) > CONSTRAINT_TOL:
            raise DomainError(f"sum of squared exponents is {s2!r}, not 1 within {CONSTRAINT_TOL}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.q, dtype=float)

    @property
    def max_abs(self) -> float:
        return max(abs(v) for v in self.q)


@dataclass(frozen=True)
class ExponentReport:
    """Summary of an exponent family's constraints and inequalities."""

    sum: float
    sum_sq: float
    max_abs: float
    moderate: bool      # max |q_i| < 1/6 strictly
    dhs_ok: bool        # all triple inequalities strictly positive
    dhs_margin: float   # min over triples of 2 q_i + sum_{l != i,j,k} q_l


def flat_pattern(dim: int) -> KasnerExponents:
    """The exceptional flat family (1, 0, ..., 0)."""
    return KasnerExponents(dim, (1.0,) + (0.0,) * (dim - 1))


def borderline_pattern_36() -> KasnerExponents:
    """Fifteen -1/6 and twenty-one +1/6: max |q| = 1/6 exactly."""
    return KasnerExponents(36, (-1.0 / 6.0,) * 15 + (1.0 / 6.0,) * 21)


def construct_exponents(dim: int, eps: float, minus_root: bool = False) -> KasnerExponents:
    """Moderately anisotropic exponents for dim >= 38.

    Fifteen copies of -1/6 + eps, twenty-one of 1/6 - eps, a quadratic
    pair restoring both constraints, zeros beyond index 38.  The '+' root
    of the quadratic is the default; ``minus_root`` selects the other.
    """
    if dim < 38:
        raise DomainError(
            f"dim={dim}: no moderately anisotropic Kasner family exists below 38 "
            "spatial dimensions (max |q| < 1/6 is unattainable)")
    if eps <= 0.0:
        raise DomainError("eps must be positive")
    disc = 6.0 * eps - 27.0 * eps * eps
    if disc <= 0.0:
        raise DomainError(f"eps={eps}: discriminant 6*eps - 27*eps^2 must be positive")
    root = math.sqrt(disc)
    q37 = 3.0 * eps - root if minus_root else 3.0 * eps + root
    q38 = 6.0 * eps - q37
    q = [-1.0 / 6.0 + eps] * 15 + [1.0 / 6.0 - eps] * 21 + [q37, q38] + [0.0] * (dim - 38)
    worst = max(abs(v) for v in q)
    if worst >= MODERATE_BOUND:
        raise DomainError(
            f"eps={eps}: resulting max |q| = {worst} violates the moderate-anisotropy "
            f"bound max |q| < 1/6")
    return KasnerExponents(dim, tuple(q))


def dhs_margin(q: KasnerExponents) -> float:
    """Minimum of 2 q_i + sum_{l != i,j,k} q_l over triples with i not in {j,k}.

    Exact enumeration.  Using sum q = 1 each value equals
    1 + q_i - q_j - q_k, but the sum is formed directly from the inputs.
    """
    if q.dim < 3:
        raise DomainError("triple inequality needs at least 3 exponents")
    arr = q.as_array()
    total = math.fsum(q.q)
    best = math.inf
    for i in range(q.dim):
        for j, k in itertools.combinations([l for l in range(q.dim) if l != i], 2):
            val = 2.0 * arr[i] + (total - arr[i] - arr[j] - arr[k])
            if val < best:
                best = val
    return float(best)


def validate_exponents(q: KasnerExponents) -> ExponentReport:
    """Constraint sums, anisotropy bound, and triple-inequality margin."""
    if q.dim < 3:
        raise DomainError("exponent report needs at least 3 exponents")
    margin = dhs_margin(q)
    max_abs = q.max_abs
    return ExponentReport(
        sum=math.fsum(q.q),
        sum_sq=math.fsum(v * v for v in q.q),
        max_abs=max_abs,
        moderate=max_abs < MODERATE_BOUND,
        dhs_ok=margin > 0.0,
        dhs_margin=margin,
    )


def kasner_metric_diag(q: KasnerExponents, t: float) -> np.ndarray:
    if t <= 0.0:
        raise DomainError("Kasner solution is defined for t > 0")
    return np.power(t, 2.0 * q.as_array())


def kasner_state(q: KasnerExponents, t: float, grid: GridSpec) -> SolutionState:
    """The exact Kasner slice at time t as spatially constant grid fields.

    g = diag(t^{2 q_i}), K = -t^{-1} diag(q_i), n = 1; the inverse metric
    is evaluated analytically as diag(t^{-2 q_i}).
    """
    if grid.dim != q.dim:
        raise DomainError(f"grid dim {grid.dim} != exponent dim {q.dim}")
    diag = kasner_metric_diag(q, t)
    g = constant_field(grid, (0, 2), np.diag(diag), symmetric=True)
    ginv = constant_field(grid, (2, 0), np.diag(np.power(t, -2.0 * q.as_array())),
                          symmetric=True)
    K = constant_field(grid, (1, 1), np.diag(-q.as_array() / t))
    n = scalar_field(grid, np.ones(grid.shape))
    return SolutionState(t=t, g=g, ginv=ginv, K=K, n=n)


def kretschmann_constant(q: KasnerExponents) -> float:
    """C with Kasner Kretschmann scalar = C t^-4.

    C = 4 { sum_i (q_i^2 - q_i)^2 + sum_{i<j} q_i^2 q_j^2 }; the pair sum
    is formed as ((sum q^2)^2 - sum q^4) / 2 from the raw exponents.
    """
    arr = q.as_array()
    sq = arr * arr
    single = math.fsum((sq - arr) ** 2)
    pair = 0.5 * (math.fsum(sq) ** 2 - math.fsum(sq * sq))
    return 4.0 * (single + pair)
