"""Compactified angular flows and their adaptive integrator.

The radial eigenvalue equation ``p'' + 2 p'/r - (W + lam) p = 0`` is written
for the Prufer angle ``theta = arctan(p'/p)`` on the compact radius
``sigma = r / (1 + r)`` and the desingularised time ``s = r + ln r``::

    theta' = (sigma - 1) sin 2 theta
             + sigma ((lam + V(sigma)) cos^2 theta - sin^2 theta)
    sigma' = sigma (1 - sigma)^2

The inner system lives on ``r``; the outer system is the same equation on
``rho = eps r`` with ``mu = lam / eps**2`` and the potentials rescaled.

Angles may be numpy arrays: a batch of trajectories that share the radius
(e.g. one per eigenvalue parameter) is integrated in a single pass, which is
how the matching scans stay fast.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .potentials import CompositePotential

__all__ = [
    "AngularState",
    "FlowParams",
    "StepControl",
    "Event",
    "Trajectory",
    "IntegrationError",
    "extended_V0",
    "extended_V1eps",
    "extended_V0_outer",
    "extended_V1_outer",
    "make_rhs",
    "inner_rhs",
    "outer_rhs",
    "fixed_points",
    "time_from_radius",
    "integrate",
    "potential_profile",
    "tail_radius",
    "free_transport",
    "decaying_angle",
]

HALF_PI = 0.5 * math.pi
OVERFLOW_LIMIT = 1e30


class IntegrationError(RuntimeError):
    """Step budget exhausted, step-size collapse or lift violation."""


@dataclass(frozen=True)
class AngularState:
    """Lifted angle and compact radius (``sigma`` inner, ``tau`` outer)."""

    angle: float | np.ndarray
    radius: float

    def __post_init__(self):
        if not 0.0 <= self.radius <= 1.0:
            raise ValueError(f"radius must lie in [0, 1], got {self.radius!r}")
        if not np.all(np.isfinite(self.angle)):
            raise ValueError("angle must be finite")


@dataclass(frozen=True)
class FlowParams:
    """Eigenvalue parameter and which potentials enter the flow.

    ``eigen_param`` is ``lam`` for the inner system and ``mu`` for the outer
    one; it may be an array matching a batch of angles.  Dropping a
    potential gives the model problems: the inner model keeps only the
    near-field term, the outer model only the far-field term.
    """

    eigen_param: float | np.ndarray
    epsilon: float
    include_inner_potential: bool = True
    include_outer_potential: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class StepControl:
    """Tolerances and step limits for :func:`integrate`.

    The error test per accepted step is
    ``max |err| / (atol + rtol |y|) <= 1`` over all components.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    h_init: float = 1e-3
    h_max: float = math.inf
    max_steps: int = 200_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not (self.h_init > 0 and self.h_max > 0):
            raise ValueError("step sizes must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def tightened(self, factor: float = 10.0) -> "StepControl":
        return replace(self, rtol=self.rtol / factor, atol=self.atol / factor)


# extended potentials ----------------------------------------------------------


def _radius_to_r(radius: float) -> float:
    return radius / (1.0 - radius)


def extended_V0(v0, sigma: float) -> float:
    """``v0(sigma / (1 - sigma))`` continued by 0 at ``sigma = 1``."""
    if sigma >= 1.0:
        return 0.0
    return v0.scalar(_radius_to_r(sigma))


def extended_V1eps(v1, epsilon: float, sigma: float) -> float:
    """``eps**2 v1(eps sigma / (1 - sigma))`` continued by 0 at ``sigma = 1``."""
    if sigma >= 1.0:
        return 0.0
    return epsilon * epsilon * v1.scalar(epsilon * _radius_to_r(sigma))


def extended_V0_outer(v0, epsilon: float, tau: float) -> float:
    """``eps**-2 v0(rho / eps)`` at ``rho = tau / (1 - tau)``; 0 at ``tau = 1``."""
    if tau >= 1.0:
        return 0.0
    value = v0.scalar(_radius_to_r(tau) / epsilon) / (epsilon * epsilon)
    if abs(value) > OVERFLOW_LIMIT:
        warnings.warn(
            f"near-field term {value:.3e} at tau={tau:.3e} exceeds {OVERFLOW_LIMIT:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return value


def extended_V1_outer(v1, tau: float) -> float:
    if tau >= 1.0:
        return 0.0
    return v1.scalar(_radius_to_r(tau))


# right-hand sides -------------------------------------------------------------

Rhs = Callable[[np.ndarray, float], tuple[np.ndarray, float]]


def _potential_term(system: str, params: FlowParams, pots: CompositePotential) -> Callable[[float], float]:
    eps = params.epsilon
    use_in, use_out = params.include_inner_potential, params.include_outer_potential
    v0, v1 = pots.v0, pots.v1
    if system == "inner":
        if use_in and use_out:
            return lambda x: extended_V0(v0, x) + extended_V1eps(v1, eps, x)
        if use_in:
            return lambda x: extended_V0(v0, x)
        if use_out:
            return lambda x: extended_V1eps(v1, eps, x)
    elif system == "outer":
        if use_in and use_out:
            return lambda x: extended_V0_outer(v0, eps, x) + extended_V1_outer(v1, x)
        if use_in:
            return lambda x: extended_V0_outer(v0, eps, x)
        if use_out:
            return lambda x: extended_V1_outer(v1, x)
    else:
        raise ValueError(f"unknown system {system!r}; expected 'inner' or 'outer'")
    return lambda x: 0.0


def make_rhs(system: str, params: FlowParams, pots: CompositePotential) -> Rhs:
    """Vector field ``(angle, radius) -> (d angle, d radius)`` of one system.

    ``angle`` may be an array; ``radius`` is always a scalar.
    """
    potential = _potential_term(system, params, pots)
    lam = params.eigen_param if np.ndim(params.eigen_param) == 0 else np.asarray(params.eigen_param, float)

    def rhs(angle, radius):
        sin = np.sin(angle)
        cos = np.cos(angle)
        d_angle = 2.0 * (radius - 1.0) * sin * cos + radius * (
            (lam + potential(radius)) * cos * cos - sin * sin
        )
        return d_angle, radius * (1.0 - radius) ** 2

    return rhs


def inner_rhs(state: AngularState, params: FlowParams, pots: CompositePotential):
    """Inner-scale field at ``state`` (``theta``, ``sigma``)."""
    return make_rhs("inner", params, pots)(state.angle, state.radius)


def outer_rhs(state: AngularState, params: FlowParams, pots: CompositePotential):
    """Outer-scale field at ``state`` (``psi``, ``tau``)."""
    return make_rhs("outer", params, pots)(state.angle, state.radius)


def fixed_points(lam: float) -> dict[str, AngularState]:
    """Equilibria on the invariant lines ``radius = 0`` and ``radius = 1``.

    Keys: ``"0-"`` (regular at the origin), ``"0+"``, ``"1+"`` (decaying,
    ``arctan(-sqrt(lam))``) and ``"1-"`` (growing, ``arctan(sqrt(lam))``).
    """
    if not lam >= 0:
        raise ValueError("fixed points on radius 1 need lam >= 0")
    root = math.sqrt(lam)
    return {
        "0-": AngularState(0.0, 0.0),
        "0+": AngularState(HALF_PI, 0.0),
        "1+": AngularState(math.atan(-root), 1.0),
        "1-": AngularState(math.atan(root), 1.0),
    }


def time_from_radius(radius: float) -> float:
    """Desingularised time ``s = r + ln r`` (``s = 1`` at radius 1/2)."""
    r = _radius_to_r(radius)
    return r + math.log(r)


# integrator -------------------------------------------------------------------

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6]
# fifth-order minus embedded fourth-order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass
class Event:
    """State located on a requested radius section."""

    section: float
    s: float
    angle: float | np.ndarray
    radius: float


@dataclass
class Trajectory:
    """Accepted steps of one (possibly batched) angular flow.

    ``angle`` has shape ``(n,)`` for a single trajectory or ``(n, batch)``.
    """

    s: np.ndarray
    radius: np.ndarray
    angle: np.ndarray
    events: list[Event] = field(default_factory=list)
    system: str = ""
    params: FlowParams | None = None
    kind: str = ""

    @property
    def start(self) -> AngularState:
        return AngularState(self.angle[0], float(self.radius[0]))

    @property
    def end(self) -> AngularState:
        return AngularState(self.angle[-1], float(self.radius[-1]))

    @property
    def r(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.radius / (1.0 - self.radius)

    def event(self, section: float) -> Event:
        for ev in self.events:
            if ev.section == section:
                return ev
        raise KeyError(f"no event recorded at section {section!r}")

    def angle_at(self, section: float):
        return self.event(section).angle

    def shifted(self, k: int) -> "Trajectory":
        """The ``k``-th lift (angles shifted by ``k * pi``)."""
        shift = k * math.pi
        return replace(
            self,
            angle=self.angle + shift,
            events=[replace(ev, angle=ev.angle + shift) for ev in self.events],
        )

    def rows(self, branch_k: int | None = None) -> Iterable[list]:
        """Samples and events merged in integration order."""
        seq = [(float(s), float(x), a, 0) for s, x, a in zip(self.s, self.radius, self.angle)]
        seq += [(ev.s, ev.radius, ev.angle, 1) for ev in self.events]
        reverse = bool(len(self.s) > 1 and self.s[-1] < self.s[0])
        seq.sort(key=lambda row: (row[0], row[3]), reverse=reverse)
        for s, x, a, flag in seq:
            row = [format(s, ".17g"), format(x, ".17g"), format(float(np.squeeze(a)), ".17g")]
            if branch_k is not None:
                row.append(str(branch_k))
            row.append(str(flag))
            yield row

    def header(self, branch: bool = False) -> list[str]:
        names = ["t", "tau", "psi"] if self.system == "outer" else ["s", "sigma", "theta"]
        return names + (["branch_k"] if branch else []) + ["event"]

    def to_csv(self, path, branch_k: int | None = None) -> None:
        if self.angle.ndim != 1:
            raise ValueError("CSV export needs a single (unbatched) trajectory")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header(branch_k is not None))
            writer.writerows(self.rows(branch_k))


def _hermite_radius(x, h, y0, y1, f0, f1):
    # cubic Hermite on the unit interval
    h00 = 2 * x**3 - 3 * x**2 + 1
    h10 = x**3 - 2 * x**2 + x
    h01 = -2 * x**3 + 3 * x**2
    h11 = x**3 - x**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


class _Stepper:
    def __init__(self, rhs: Rhs):
        self.rhs = rhs
        self.nfev = 0

    def f(self, a, x):
        self.nfev += 1
        return self.rhs(a, x)

    def step(self, a, x, h, k1):
        ka = [k1[0]]
        kx = [k1[1]]
        for i in range(1, 7):
            row = _A[i]
            da = 0.0
            dx = 0.0
            for j, c in enumerate(row):
                if c:
                    da = da + c * ka[j]
                    dx = dx + c * kx[j]
            fa, fx = self.f(a + h * da, x + h * dx)
            ka.append(fa)
            kx.append(fx)
        # stage 7 is evaluated at the fifth-order solution (FSAL)
        a_new = a + h * sum(b * k for b, k in zip(_B, ka[:6]) if b)
        x_new = x + h * sum(b * k for b, k in zip(_B, kx[:6]) if b)
        err_a = h * sum(e * k for e, k in zip(_E, ka) if e)
        err_x = h * sum(e * k for e, k in zip(_E, kx) if e)
        return a_new, x_new, err_a, err_x, (ka[6], kx[6])


def _error_norm(a, x, a_new, x_new, err_a, err_x, ctl: StepControl) -> float:
    sa = ctl.atol + ctl.rtol * np.maximum(np.abs(a), np.abs(a_new))
    sx = ctl.atol + ctl.rtol * max(abs(x), abs(x_new))
    return max(float(np.max(np.abs(err_a) / sa)), abs(err_x) / sx)


def integrate(
    rhs: Rhs,
    start: AngularState,
    until: float,
    *,
    sections: Sequence[float] = (),
    direction: str | None = None,
    ctl: StepControl = StepControl(),
    stop: Callable[[float, np.ndarray], bool] | None = None,
    system: str = "",
    params: FlowParams | None = None,
    kind: str = "",
) -> Trajectory:
    """Integrate an angular flow in ``s`` until the radius reaches ``until``.

    Parameters
    ----------
    rhs : callable
        ``(angle, radius) -> (d_angle, d_radius)``, e.g. from :func:`make_rhs`.
    start : AngularState
        Initial state with radius strictly inside ``(0, 1)``.
    until : float
        Terminal radius, located like a section.
    sections : sequence of float
        Radii at which the state is located to ``|radius - section| <= 1e-12``.
    direction : {"forward", "backward"}, optional
        Checked against ``until`` when given.
    stop : callable, optional
        ``stop(radius, angle) -> bool`` evaluated after every accepted step;
        a true value ends the integration early.

    Notes
    -----
    Steps are rejected when the angle moves by ``pi/2`` or more so that the
    recorded samples always determine the lift unambiguously.
    """
    x0 = float(start.radius)
    if not 0.0 < x0 < 1.0:
        raise ValueError("start radius must lie strictly inside (0, 1)")
    if not 0.0 < until < 1.0:
        raise ValueError("terminal radius must lie strictly inside (0, 1)")
    sign = 1.0 if until > x0 else -1.0
    if direction is not None:
        expected = {"forward": 1.0, "backward": -1.0}[direction]
        if expected != sign and until != x0:
            raise ValueError(f"terminal radius {until} is not reachable going {direction}")
    targets = sorted({float(v) for v in sections if (v - x0) * sign > 0 and (until - v) * sign > 0})
    if any(not 0.0 < v < 1.0 for v in sections):
        raise ValueError("sections must lie inside (0, 1)")
    if sign < 0:
        targets.reverse()
    targets.append(float(until))

    scalar = np.ndim(start.angle) == 0
    a = np.atleast_1d(np.asarray(start.angle, dtype=float)).copy()
    x = x0
    s = time_from_radius(x0)
    stepper = _Stepper(rhs)
    k1 = stepper.f(a, x)

    s_list, x_list, a_list = [s], [x], [a.copy()]
    events: list[Event] = []
    h = min(ctl.h_init, ctl.h_max)
    steps = 0
    target_i = 0

    if until == x0:
        targets = []

    while target_i < len(targets):
        if steps >= ctl.max_steps:
            raise IntegrationError(f"max_steps={ctl.max_steps} exceeded at radius {x:.12g}")
        if h < 1e-14 * max(1.0, abs(s)):
            raise IntegrationError(f"step size collapsed to {h:.3e} at radius {x:.12g} (stiff?)")
        a_new, x_new, err_a, err_x, k_new = stepper.step(a, x, sign * h, k1)
        err = _error_norm(a, x, a_new, x_new, err_a, err_x, ctl)
        turn = float(np.max(np.abs(a_new - a)))
        if not np.isfinite(err) or err > 1.0 or turn >= HALF_PI or not 0.0 < x_new < 1.0:
            if not np.isfinite(err) or turn >= HALF_PI or not 0.0 < x_new < 1.0:
                h *= 0.25
            else:
                h *= max(0.2, 0.9 * err ** -0.2)
            continue
        steps += 1
        # locate every section crossed inside this step
        while target_i < len(targets) and (x_new - targets[target_i]) * sign >= 0:
            sec = targets[target_i]
            events.append(_locate(stepper, s, a, x, k1, sign * h, x_new, k_new[1], sec, ctl))
            target_i += 1
        if target_i == len(targets):
            last = events[-1]
            s_list.append(last.s)
            x_list.append(last.radius)
            a_list.append(np.atleast_1d(last.angle).copy())
            break
        s += sign * h
        a, x, k1 = a_new, x_new, k_new
        s_list.append(s)
        x_list.append(x)
        a_list.append(a.copy())
        if stop is not None and stop(x, a[0] if scalar else a):
            break
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = min(h * factor, ctl.h_max)

    angle = np.array(a_list)
    if scalar:
        angle = angle[:, 0]
        for ev in events:
            ev.angle = float(ev.angle[0])
    return Trajectory(
        s=np.array(s_list),
        radius=np.array(x_list),
        angle=angle,
        events=events,
        system=system,
        params=params,
        kind=kind,
    )


def _locate(stepper, s0, a0, x0, k0, h, x1, fx1, section, ctl) -> Event:
    """Place the state on ``radius == section`` inside the step ``[s0, s0 + h]``."""
    fx0 = k0[1]
    g = lambda t: _hermite_radius(t, h, x0, x1, fx0, fx1) - section
    lo, hi = g(0.0), g(1.0)
    if lo == 0.0:
        t = 0.0
    elif hi == 0.0:
        t = 1.0
    elif lo * hi > 0:
        t = 1.0 if abs(hi) < abs(lo) else 0.0
    else:
        t = brentq(g, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    # refine by direct steps from the step start; radius' is the Newton slope
    hh = t * h
    a, x = a0, x0
    for _ in range(8):
        if hh == 0.0:
            a, x = a0, x0
        else:
            a, x, *_ = stepper.step(a0, x0, hh, k0)
        miss = x - section
        if abs(miss) <= 1e-13:
            break
        dx = stepper.f(a, x)[1]
        if dx == 0:
            break
        hh -= miss / dx
    return Event(section=section, s=s0 + hh, angle=np.array(a, copy=True), radius=float(x))


# potential-free far field -----------------------------------------------------


def potential_profile(system: str, params: FlowParams, pots: CompositePotential) -> Callable[[float], float]:
    """Potential entering ``system`` as a function of its own radial coordinate."""
    term = _potential_term(system, params, pots)
    return lambda y: term(y / (1.0 + y))


def tail_radius(
    system: str,
    params: FlowParams,
    pots: CompositePotential,
    kappa_min: float = 0.0,
    tol: float = 1e-10,
    r_max: float = 1e9,
) -> float:
    """Radius beyond which the potential no longer moves the angle by ``tol``.

    The angle perturbation from the tail beyond ``y`` is bounded by
    ``|V(y)| * min(y, 1 / (2 kappa))``; ``kappa = sqrt(eigen_param)`` damps
    it for positive eigenvalue parameters.
    """
    profile = potential_profile(system, params, pots)
    grid = np.geomspace(1.0, r_max, 1201)
    reach = np.minimum(grid, 0.5 / kappa_min) if kappa_min > 0 else grid
    bad = np.array([abs(profile(y)) for y in grid]) * reach > tol
    if not bad.any():
        return 1.0
    last = int(np.flatnonzero(bad)[-1])
    return float(grid[min(last + 1, grid.size - 1)])


def _fold(phi):
    # map atan2 output to [-pi/2, pi/2)
    phi = np.where(phi >= HALF_PI, phi - math.pi, phi)
    return np.where(phi < -HALF_PI, phi + math.pi, phi)


def free_transport(angle, r0: float, r1: float, lam):
    """Carry a lifted angle from ``r0`` to ``r1`` through a region with no potential.

    Uses the closed-form solutions ``u = r p = A e^{kappa r} + B e^{-kappa r}``
    (``A + B r`` when ``lam = 0``); each zero of ``u`` between the radii
    shifts the lift by ``pi``.
    """
    angle = np.asarray(angle, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), angle.shape)
    if np.any(lam < 0):
        raise ValueError("free transport needs a non-negative eigenvalue parameter")
    kappa = np.sqrt(lam)
    k0 = np.floor((angle + HALF_PI) / math.pi)
    phi0 = angle - k0 * math.pi
    p0, dp0 = np.cos(phi0), np.sin(phi0)
    u0 = r0 * p0
    du0 = p0 + r0 * dp0
    delta = r1 - r0
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(kappa > 0, np.tanh(kappa * delta) / np.where(kappa > 0, kappa, 1.0), delta)
        # u and u' up to the common positive factor cosh(kappa delta)
        u1 = u0 + du0 * g
        du1 = u0 * lam * g + du0
        p1 = u1 / r1
        dp1 = (du1 - u1 / r1) / r1
        phi1 = _fold(np.arctan2(dp1, p1))
        # zero of u where g(x) = -u0/du0, strictly inside (0, delta)
        target = np.where(du0 != 0, -u0 / du0, np.inf)
    lo, hi = (0.0, g) if delta > 0 else (g, 0.0)
    crossed = (target > lo) & (target < hi)
    n = crossed.astype(float)
    k1 = k0 - n if delta > 0 else k0 + n
    out = k1 * math.pi + phi1
    return float(out) if out.ndim == 0 else out


def decaying_angle(r: float, lam):
    """Angle of the decaying free solution ``e^{-kappa r} / r``."""
    return np.arctan(-np.sqrt(lam) - 1.0 / r)
