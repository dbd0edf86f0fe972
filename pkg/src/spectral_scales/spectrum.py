"""Eigenvalue counts and locations from the manifold trajectories.

Counting: the regular solution at a small positive floor ``lam`` winds its
lifted angle down by ``pi`` per node, so the number of nodes is the number of
eigenvalues above the floor.

Locating: an eigenvalue is a parameter where the regular trajectory (shifted
by ``k pi``) meets the decaying one.  Gap eigenvalues ``lam = eps**2 mu`` are
matched across scales at the threshold sections; order-one eigenvalues are
matched on the inner scale alone.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .manifolds import (
    DEFAULT_DELTA_SEED,
    DEFAULT_TAIL_TOL,
    center_section_angles,
    convert_outer_to_inner_angle,
    seed_slope,
    unstable_section_angles,
)
from .odeflow import HALF_PI, StepControl, Trajectory
from .potentials import CompositePotential

__all__ = [
    "Thresholds",
    "thresholds",
    "CountResult",
    "winding_count",
    "count_positive_eigenvalues",
    "counts_at",
    "matching_angles",
    "mismatch_sigma",
    "GapEigenvalue",
    "RegimeWarning",
    "default_mu_max",
    "locate_roots",
    "find_gap_eigenvalues",
    "OrderOneEigenvalue",
    "find_order_one_eigenvalues",
    "SumRuleReport",
    "verify_sum_rule",
]

NEAR_DEGENERATE = 1e-3
BISECT_TOL = 1e-10
OPERATORS = {"model_inner": "model_inner", "model_outer": "model_outer", "full": "inner"}


class RegimeWarning(UserWarning):
    """Located roots disagree with the count the small-eps theory predicts."""


# thresholds -------------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    """Matching sections: ``r_eps = eps**alpha`` on the inner scale, the same point outer."""

    epsilon: float
    alpha: float
    r_eps: float
    rho_eps: float
    sigma_eps: float
    tau_eps: float
    s_eps: float
    t_eps: float


def thresholds(epsilon: float, alpha: float = -0.45, gamma: float | None = None) -> Thresholds:
    """Section radii for the inner/outer matching.

    Parameters
    ----------
    epsilon : float
        Scale separation in ``(0, 1)``.
    alpha : float
        Exponent in ``(-1/2, 0)``.
    gamma : float, optional
        Decay exponent; when given, warns unless ``(4 + gamma)(-alpha) > 2 + gamma / 4``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if not -0.5 < alpha < 0.0:
        raise ValueError(f"alpha must lie in (-1/2, 0), got {alpha!r}")
    if gamma is not None and not (4.0 + gamma) * (-alpha) > 2.0 + gamma / 4.0:
        warnings.warn(
            f"alpha={alpha} violates (4 + gamma)(-alpha) > 2 + gamma/4 for gamma={gamma}",
            RuntimeWarning,
            stacklevel=2,
        )
    r_eps = epsilon**alpha
    rho_eps = epsilon ** (alpha + 1.0)
    return Thresholds(
        epsilon=epsilon,
        alpha=alpha,
        r_eps=r_eps,
        rho_eps=rho_eps,
        sigma_eps=r_eps / (1.0 + r_eps),
        tau_eps=rho_eps / (1.0 + rho_eps),
        s_eps=r_eps + alpha * math.log(epsilon),
        t_eps=rho_eps + (alpha + 1.0) * math.log(epsilon),
    )


# counting ---------------------------------------------------------------------


@dataclass
class CountResult:
    """Node count of the regular solution at ``eigen_param_floor``.

    ``m`` is the nearest integer to ``(theta_start - theta_end) / pi``: the
    end angle settles just above ``-m pi`` (the growing direction), so the
    plain floor would miss one.
    """

    m: int
    theta_start: float
    theta_end: float
    eigen_param_floor: float
    system: str = ""
    near_degenerate: bool = False
    stable: bool = True
    floors: tuple[float, ...] = ()
    counts: tuple[int, ...] = ()

    @property
    def winding(self) -> float:
        return (self.theta_start - self.theta_end) / math.pi

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "theta_start": self.theta_start,
            "theta_end": self.theta_end,
            "eigen_param_floor": self.eigen_param_floor,
            "system": self.system,
            "near_degenerate": self.near_degenerate,
            "stable": self.stable,
            "floors": list(self.floors),
            "counts": list(self.counts),
        }


def _round_winding(start, end):
    x = (np.asarray(start) - np.asarray(end)) / math.pi + 0.5
    m = np.floor(x)
    near = np.minimum(x - m, m + 1 - x) < NEAR_DEGENERATE
    return m.astype(int), near


def winding_count(traj: Trajectory) -> CountResult:
    """Count of a single lifted trajectory from its first and last samples."""
    angle = np.asarray(traj.angle, dtype=float)
    if angle.ndim != 1 or angle.size < 2:
        raise ValueError("winding_count needs a single trajectory with at least two samples")
    if np.any(np.abs(np.diff(angle)) >= HALF_PI):
        raise ValueError("trajectory is not lifted: consecutive samples jump by pi/2 or more")
    m, near = _round_winding(angle[0], angle[-1])
    if m < 0:
        raise ValueError(f"negative winding {float((angle[0] - angle[-1]) / math.pi):.6g}")
    param = traj.params.eigen_param if traj.params is not None else float("nan")
    return CountResult(
        m=int(m),
        theta_start=float(angle[0]),
        theta_end=float(angle[-1]),
        eigen_param_floor=float(param),
        system=traj.kind,
        near_degenerate=bool(near),
    )


def _system(operator: str) -> str:
    try:
        return OPERATORS[operator]
    except KeyError:
        raise ValueError(f"unknown operator {operator!r}; expected one of {sorted(OPERATORS)}") from None


def counts_at(
    pots: CompositePotential,
    operator: str,
    eigen_params: Sequence[float],
    end_radius: float = 1.0 - 1e-6,
    **kwargs,
) -> np.ndarray:
    """Node counts of the regular solution at each eigenvalue parameter."""
    system = _system(operator)
    lam = np.atleast_1d(np.asarray(eigen_params, dtype=float))
    end = unstable_section_angles(lam, pots.epsilon, pots, [end_radius], system, **kwargs)[end_radius]
    start = seed_slope(lam, pots.epsilon, pots, system) * kwargs.get("delta_seed", DEFAULT_DELTA_SEED)
    m, _ = _round_winding(start, end)
    return m


def count_positive_eigenvalues(
    pots: CompositePotential,
    operator: str = "full",
    eigen_floor: float = 1e-6,
    end_radius: float = 1.0 - 1e-6,
    delta_seed: float = DEFAULT_DELTA_SEED,
    ctl: StepControl = StepControl(),
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> CountResult:
    """Number of eigenvalues above ``eigen_floor`` for one operator.

    ``operator`` is ``"model_inner"`` (``v0``), ``"model_outer"`` (``v1`` on its
    own scale) or ``"full"`` (``W`` at ``pots.epsilon``).  The floor is halved
    twice in the same batch; differing counts mark the result unstable and
    warn of an eigenvalue or resonance at the threshold.
    """
    if not eigen_floor > 0:
        raise ValueError("eigen_floor must be positive")
    system = _system(operator)
    floors = np.array([eigen_floor, eigen_floor / 2, eigen_floor / 4])
    kwargs = dict(delta_seed=delta_seed, tail_tol=tail_tol)
    for attempt in range(2):
        traj_end = unstable_section_angles(floors, pots.epsilon, pots, [end_radius], system, ctl=ctl, **kwargs)
        end = traj_end[end_radius]
        start = seed_slope(floors, pots.epsilon, pots, system) * delta_seed
        m, near = _round_winding(start, end)
        if not near.any() or attempt == 1:
            break
        ctl = ctl.tightened(100.0)
    stable = bool(np.all(m == m[0]))
    if not stable:
        warnings.warn(
            f"{operator} count changes under floor halving {tuple(int(v) for v in m)}; "
            "an eigenvalue or zero-energy resonance sits at the threshold",
            RuntimeWarning,
            stacklevel=2,
        )
    return CountResult(
        m=int(m[0]),
        theta_start=float(start[0]),
        theta_end=float(end[0]),
        eigen_param_floor=float(eigen_floor),
        system=operator,
        near_degenerate=bool(near[0]),
        stable=stable,
        floors=tuple(float(f) for f in floors),
        counts=tuple(int(v) for v in m),
    )


# cross-scale matching ---------------------------------------------------------


def matching_angles(
    mu,
    pots: CompositePotential,
    th: Thresholds,
    **kwargs,
) -> tuple[np.ndarray, np.ndarray]:
    """``(theta_minus, theta_plus)`` at the threshold for each ``mu``.

    ``theta_minus``: full inner regular trajectory at ``lam = eps**2 mu`` on
    ``sigma_eps``.  ``theta_plus``: full outer decaying trajectory on
    ``tau_eps``, converted to the inner angle on the same branch.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if np.any(mu < 0):
        raise ValueError("mu must be non-negative")
    eps = th.epsilon
    if not math.isclose(eps, pots.epsilon, rel_tol=1e-15):
        raise ValueError("thresholds and potential use different epsilon")
    minus = unstable_section_angles(eps**2 * mu, eps, pots, [th.sigma_eps], "inner", **kwargs)[th.sigma_eps]
    psi = center_section_angles(mu, eps, pots, [th.tau_eps], "outer", **kwargs)[th.tau_eps]
    return minus, convert_outer_to_inner_angle(psi, eps)


def mismatch_sigma(mu, pots: CompositePotential, k, th: Thresholds, **kwargs):
    """``Sigma^k(mu) = theta_minus + k pi - theta_plus``; zeros are eigenvalues ``eps**2 mu``."""
    minus, plus = matching_angles(mu, pots, th, **kwargs)
    out = minus + np.asarray(k) * math.pi - plus
    return float(out[0]) if np.ndim(mu) == 0 and np.ndim(k) == 0 else out


@dataclass
class GapEigenvalue:
    """Root of ``Sigma^k`` with its bracket; ``slope_sign`` is that of ``Sigma^k`` across it."""

    mu_hat: float
    lambda_hat: float
    k: int
    bracket: tuple[float, float]
    residual: float
    slope_sign: int

    def to_dict(self) -> dict:
        return {"mu": self.mu_hat, "lambda": self.lambda_hat, "k": self.k}


def default_mu_max(pots: CompositePotential) -> float:
    """``1.25 sup (v1)_-``: no eigenvalue of the far-field model can lie above ``sup (v1)_-``."""
    return 1.25 * pots.v1.sup_negative_part()


def _bisect(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    f_lo: np.ndarray,
    ks: np.ndarray,
    xtol: float,
):
    """Shrink all brackets at once; ``f(x, k)`` is vectorised over brackets."""
    lo, hi, f_lo = lo.copy(), hi.copy(), f_lo.copy()
    while np.any(hi - lo >= xtol):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid, ks)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
    return lo, hi


def _sign_brackets(grid: np.ndarray, values: np.ndarray, kmin: int, kmax: int):
    """Yield ``(i, k)`` for every grid cell where ``values + k pi`` changes sign."""
    found = []
    for k in range(kmin, kmax + 1):
        shifted = values + k * math.pi
        s = np.sign(shifted)
        for i in np.flatnonzero(s[:-1] * s[1:] <= 0):
            if shifted[i] == 0 and i > 0:
                continue  # exact grid root already counted in the previous cell
            found.append((int(i), k))
    return found


def locate_roots(
    pots: CompositePotential,
    th: Thresholds,
    grid: np.ndarray,
    sigma0: np.ndarray,
    xtol: float = BISECT_TOL,
    **kwargs,
) -> list[GapEigenvalue]:
    """Bisect every sign change of ``Sigma^k`` seen on ``grid``.

    ``sigma0`` holds ``Sigma^0`` on the grid (``nan`` entries are skipped);
    branches are those where ``|Sigma^k| < 2 pi`` somewhere.
    """
    ok = np.isfinite(sigma0)
    grid, sigma0 = np.asarray(grid, dtype=float)[ok], np.asarray(sigma0, dtype=float)[ok]
    if grid.size < 2:
        return []
    kmin = math.ceil((-2 * math.pi - sigma0.max()) / math.pi)
    kmax = math.floor((2 * math.pi - sigma0.min()) / math.pi)
    cells = _sign_brackets(grid, sigma0, kmin, kmax)
    if not cells:
        return []
    idx = np.array([i for i, _ in cells])
    ks = np.array([k for _, k in cells])
    f_lo = sigma0[idx] + ks * math.pi
    f_hi = sigma0[idx + 1] + ks * math.pi
    f = lambda x, k: mismatch_sigma(x, pots, k, th, **kwargs)
    blo, bhi = _bisect(f, grid[idx], grid[idx + 1], f_lo, ks, xtol)
    mu_hat = 0.5 * (blo + bhi)
    residual = np.abs(f(mu_hat, ks))
    roots = [
        GapEigenvalue(
            mu_hat=float(mu_hat[j]),
            lambda_hat=float(th.epsilon**2 * mu_hat[j]),
            k=int(ks[j]),
            bracket=(float(blo[j]), float(bhi[j])),
            residual=float(residual[j]),
            slope_sign=int(np.sign(f_hi[j] - f_lo[j])),
        )
        for j in range(len(cells))
    ]
    return sorted(roots, key=lambda g: g.mu_hat)


def find_gap_eigenvalues(
    pots: CompositePotential,
    th: Thresholds,
    mu_max: float | None = None,
    n_grid: int = 512,
    expected: int | None = None,
    xtol: float = BISECT_TOL,
    **kwargs,
) -> list[GapEigenvalue]:
    """Roots of ``Sigma^k`` on ``[0, mu_max]`` for every relevant branch ``k``.

    The grid is ``0`` plus ``n_grid`` equispaced points up to ``mu_max``.
    When ``expected`` (the far-field count) is given and differs from the
    number of roots, a :class:`RegimeWarning` says ``eps`` is too large.
    """
    if mu_max is None:
        mu_max = default_mu_max(pots)
    if not mu_max > 0:
        raise ValueError("mu_max must be positive; the far-field potential has no well")
    grid = np.concatenate([[0.0], np.linspace(mu_max / n_grid, mu_max, n_grid)])
    sigma0 = mismatch_sigma(grid, pots, 0, th, **kwargs)
    roots = locate_roots(pots, th, grid, sigma0, xtol, **kwargs)
    if expected is not None and len(roots) != expected:
        warnings.warn(
            f"{len(roots)} roots on (0, {mu_max:g}] at eps={th.epsilon:g}, far-field count is {expected}; "
            "eps is outside the asymptotic regime",
            RegimeWarning,
            stacklevel=2,
        )
    return roots


# order-one eigenvalues --------------------------------------------------------


@dataclass
class OrderOneEigenvalue:
    """Root of the inner-scale shooting mismatch."""

    value: float
    k: int
    bracket: tuple[float, float]
    near_endpoint: bool = False


def default_lambda_range(pots: CompositePotential, mu_max: float | None = None) -> tuple[float, float]:
    """``(100 eps**2 mu_max, 1.25 sup W_-)``; the lower end separates the gap band."""
    if mu_max is None:
        mu_max = default_mu_max(pots)
    eps = pots.epsilon
    top = 1.25 * (pots.v0.sup_negative_part() + eps**2 * pots.v1.sup_negative_part())
    return 100.0 * eps**2 * mu_max, top


def find_order_one_eigenvalues(
    pots: CompositePotential,
    lambda_range: tuple[float, float] | None = None,
    system: str = "inner",
    n_grid: int = 256,
    section: float = 0.5,
    xtol: float = BISECT_TOL,
    **kwargs,
) -> list[OrderOneEigenvalue]:
    """Eigenvalues in ``lambda_range`` by shooting on the inner scale.

    Regular and decaying trajectories are matched at ``section``; the
    mismatch on branch ``k`` is ``theta_minus + k pi - theta_plus``.
    """
    lo, hi = lambda_range if lambda_range is not None else default_lambda_range(pots)
    if not 0 <= lo < hi:
        return []
    eps = pots.epsilon

    def mismatch(lam, k=0):
        minus = unstable_section_angles(lam, eps, pots, [section], system, **kwargs)[section]
        plus = center_section_angles(lam, eps, pots, [section], system, **kwargs)[section]
        return minus + np.asarray(k) * math.pi - plus

    grid = np.linspace(lo, hi, n_grid + 1)
    base = mismatch(grid)
    kmin = math.ceil((-math.pi - base.max()) / math.pi)
    kmax = math.floor((math.pi - base.min()) / math.pi)
    cells = _sign_brackets(grid, base, kmin, kmax)
    if not cells:
        return []
    idx = np.array([i for i, _ in cells])
    ks = np.array([k for _, k in cells])
    blo, bhi = _bisect(mismatch, grid[idx], grid[idx + 1], base[idx] + ks * math.pi, ks, xtol)
    out = []
    for j in range(len(cells)):
        value = float(0.5 * (blo[j] + bhi[j]))
        near = min(value - lo, hi - value) < 1e-6
        if near:
            warnings.warn(f"eigenvalue {value:.10g} within 1e-6 of the search range end", RuntimeWarning, stacklevel=2)
        out.append(OrderOneEigenvalue(value, int(ks[j]), (float(blo[j]), float(bhi[j])), near))
    out.sort(key=lambda e: e.value)
    return out


# sum rule ---------------------------------------------------------------------


@dataclass
class SumRuleReport:
    """``m(W)`` against ``m(V0) + m(V1)`` with the counts behind each number."""

    m_v0: int
    m_v1: int
    m_w: int
    epsilon: float
    provenance: dict[str, CountResult] = field(default_factory=dict)

    @property
    def equal(self) -> bool:
        return self.m_w == self.m_v0 + self.m_v1

    def to_dict(self) -> dict:
        return {
            "m_v0": self.m_v0,
            "m_v1": self.m_v1,
            "m_w": self.m_w,
            "epsilon": self.epsilon,
            "equal": self.equal,
            "provenance": {k: v.to_dict() for k, v in self.provenance.items()},
        }


def verify_sum_rule(pots: CompositePotential, **kwargs) -> SumRuleReport:
    """Count the three operators and compare; a mismatch is a finding, not an error."""
    counts = {op: count_positive_eigenvalues(pots, op, **kwargs) for op in ("model_inner", "model_outer", "full")}
    return SumRuleReport(
        m_v0=counts["model_inner"].m,
        m_v1=counts["model_outer"].m,
        m_w=counts["full"].m,
        epsilon=pots.epsilon,
        provenance=counts,
    )
