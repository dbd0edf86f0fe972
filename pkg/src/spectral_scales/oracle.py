"""Finite-difference check on eigenvalue counts.

With ``u = r p`` the radial problem becomes ``u'' - W u = lam u`` on
``(0, R)`` with ``u(0) = u(R) = 0``.  Second differences turn it into a
symmetric tridiagonal matrix whose eigenvalues above a shift are counted by
the signs of the ``LDL^T`` pivots of the shifted matrix.  Nothing here
shares code with the shooting path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .potentials import CompositePotential

__all__ = [
    "RadialGrid",
    "TridiagonalOperator",
    "OracleError",
    "discretize",
    "sturm_count_above",
    "OracleCount",
    "oracle_count",
    "OracleEigenvalues",
    "oracle_eigenvalues",
    "default_radius",
]

TAIL_LIMIT = 1e-8
PIVOT_FLOOR = 1e-300
MAX_DOUBLINGS = 4


class OracleError(RuntimeError):
    """Tail condition unmet or counts not converged over the grid ladder."""


@dataclass(frozen=True)
class RadialGrid:
    """``N`` interior nodes ``r_i = i h`` on ``(0, R)``, ``h = R / (N + 1)``."""

    R: float
    N: int

    def __post_init__(self):
        if not (math.isfinite(self.R) and self.R > 0):
            raise ValueError("R must be positive and finite")
        if self.N < 16:
            raise ValueError("N must be at least 16")

    @property
    def h(self) -> float:
        return self.R / (self.N + 1)

    @property
    def r(self) -> np.ndarray:
        return self.h * np.arange(1, self.N + 1)

    def refined(self, factor: int) -> "RadialGrid":
        """Same ``R`` with ``h`` divided by ``factor``."""
        return RadialGrid(self.R, (self.N + 1) * factor - 1)


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix stored as its diagonal and one off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray
    grid: RadialGrid

    def __post_init__(self):
        if self.offdiag.shape != (self.diag.size - 1,):
            raise ValueError("offdiag must have exactly one entry fewer than diag")

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def gershgorin(self) -> tuple[float, float]:
        radius = np.zeros_like(self.diag)
        radius[:-1] += np.abs(self.offdiag)
        radius[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - radius)), float(np.max(self.diag + radius))


def _profile(pots: CompositePotential, which: str) -> Callable[[np.ndarray], np.ndarray]:
    return pots.part(which)


def default_radius(which: str) -> float:
    return 400.0 if which == "v1_only" else 200.0


def discretize(
    pots: CompositePotential,
    which: str = "full",
    grid: RadialGrid | None = None,
    max_h: float | None = None,
) -> TridiagonalOperator:
    """Second-difference matrix of ``u'' - W u`` with Dirichlet ends.

    If ``|W(R)| >= 1e-8`` the radius is doubled (and ``N`` with it, so ``h``
    is kept) up to four times before giving up.
    """
    profile = _profile(pots, which)
    if grid is None:
        grid = RadialGrid(default_radius(which), 4000)
    for _ in range(MAX_DOUBLINGS + 1):
        if abs(float(profile(grid.R))) < TAIL_LIMIT:
            break
        grid = RadialGrid(2 * grid.R, 2 * (grid.N + 1) - 1)
    else:
        raise OracleError(f"|W(R)| >= {TAIL_LIMIT:g} even at R={grid.R:g}")
    if max_h is not None and grid.h > max_h:
        grid = RadialGrid(grid.R, math.ceil(grid.R / max_h) - 1)
    h2 = grid.h * grid.h
    diag = -2.0 / h2 - np.asarray(profile(grid.r), dtype=float)
    offdiag = np.full(grid.N - 1, 1.0 / h2)
    return TridiagonalOperator(diag, offdiag, grid)


def sturm_count_above(op: TridiagonalOperator, shift: float) -> int:
    """Number of eigenvalues of ``op`` strictly greater than ``shift``.

    Counts positive pivots of ``LDL^T = A - shift I``; an exactly zero pivot
    is replaced by ``-1e-300`` so that it counts as not above.
    """
    if not math.isfinite(shift):
        raise ValueError("shift must be finite")
    diag = (op.diag - shift).tolist()
    off2 = (op.offdiag * op.offdiag).tolist()
    d = diag[0]
    if d == 0.0:
        d = -PIVOT_FLOOR
    count = 1 if d > 0 else 0
    for a, b2 in zip(diag[1:], off2):
        d = a - b2 / d
        if d == 0.0:
            d = -PIVOT_FLOOR
        if d > 0:
            count += 1
    return count


@dataclass
class OracleCount:
    """Count above ``shift`` with the per-level counts of the grid ladder."""

    count: int
    shift: float
    ladder: tuple[int, ...]
    grids: tuple[RadialGrid, ...]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "shift": self.shift,
            "ladder": list(self.ladder),
            "R": self.grids[-1].R,
            "N": [g.N for g in self.grids],
        }


def _ladder(pots, which, N, R, max_h):
    base = discretize(pots, which, RadialGrid(R if R is not None else default_radius(which), N), max_h)
    ops = [base]
    for factor in (2, 4):
        ops.append(discretize(pots, which, base.grid.refined(factor)))
    return ops


def oracle_count(
    pots: CompositePotential,
    which: str = "full",
    shift: float = 0.0,
    N: int = 4000,
    R: float | None = None,
    max_h: float | None = 0.05,
) -> OracleCount:
    """Eigenvalues above ``shift``, required identical on grids ``N, 2N, 4N``.

    ``R`` defaults to 200 (400 for ``v1_only``); ``max_h`` raises ``N`` when
    the tail check enlarged ``R``.
    """
    ops = _ladder(pots, which, N, R, max_h)
    counts = tuple(sturm_count_above(op, shift) for op in ops)
    if len(set(counts)) != 1:
        raise OracleError(f"counts above {shift:g} differ over the grid ladder: {counts}")
    return OracleCount(counts[0], shift, counts, tuple(op.grid for op in ops))


def _kth_above(op: TridiagonalOperator, k: int, lo: float, hi: float, xtol: float) -> float:
    """The ``k``-th largest eigenvalue (1-based) inside ``(lo, hi]`` by bisection."""
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if sturm_count_above(op, mid) >= k:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class OracleEigenvalues:
    """Largest eigenvalues above 0, Richardson-extrapolated over the ladder.

    ``error_bar`` is the distance between the extrapolated value and the
    finest grid's value, i.e. the estimated ``h**2`` error of that grid.
    """

    values: list[float]
    error_bar: list[float]
    per_level: list[list[float]]
    short_count: bool
    grids: tuple[RadialGrid, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "values": self.values,
            "error_bar": self.error_bar,
            "short_count": self.short_count,
            "R": self.grids[-1].R if self.grids else None,
        }


def oracle_eigenvalues(
    pots: CompositePotential,
    which: str = "full",
    top_k: int = 1,
    N: int = 4000,
    R: float | None = None,
    max_h: float | None = 0.05,
    xtol: float = 1e-10,
) -> OracleEigenvalues:
    """Up to ``top_k`` largest positive eigenvalues, largest first."""
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    ops = _ladder(pots, which, N, R, max_h)
    per_level = []
    for op in ops:
        n = min(top_k, sturm_count_above(op, 0.0))
        upper = op.gershgorin()[1] + 1.0
        per_level.append([_kth_above(op, k, 0.0, upper, xtol) for k in range(1, n + 1)])
    n = min(len(v) for v in per_level)
    mid, fine = np.array(per_level[1][:n]), np.array(per_level[2][:n])
    extrapolated = (4.0 * fine - mid) / 3.0
    return OracleEigenvalues(
        values=[float(v) for v in extrapolated],
        error_bar=[float(v) for v in np.abs(extrapolated - fine)],
        per_level=per_level,
        short_count=n < top_k,
        grids=tuple(op.grid for op in ops),
    )
