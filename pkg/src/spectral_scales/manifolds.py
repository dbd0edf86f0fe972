"""Invariant-manifold trajectories of the angular flows.

Two boundary conditions become two trajectories:

* regularity at ``r = 0`` is the unstable manifold of ``(angle, radius) = (0, 0)``,
  seeded along its tangent ``angle = (lam + V(0)) / 3 * radius``;
* decay at ``r = oo`` is the center manifold of ``(arctan(-sqrt(lam)), 1)``,
  integrated backward, which is the contracting direction for it.

Beyond the radius where the potential stops mattering (:func:`odeflow.tail_radius`)
both are carried by the closed-form free solutions instead of the integrator.
That stretch spans up to ``10**6`` radius units and is stiff for explicit steps
whenever ``lam`` is of order one.

System names: ``"inner"`` (full, ``r`` scale), ``"model_inner"`` (``V0`` only),
``"outer"`` (full, ``rho = eps r`` scale) and ``"model_outer"`` (``V1`` only).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .odeflow import (
    HALF_PI,
    AngularState,
    Event,
    FlowParams,
    IntegrationError,
    StepControl,
    Trajectory,
    decaying_angle,
    free_transport,
    integrate,
    make_rhs,
    tail_radius,
    time_from_radius,
)
from .potentials import CompositePotential

__all__ = [
    "SYSTEMS",
    "ManifoldSeed",
    "LiftedAngle",
    "seed_unstable",
    "unstable_trajectory",
    "center_trajectory_backward",
    "unstable_section_angles",
    "center_section_angles",
    "lift",
    "convert_outer_to_inner_angle",
    "DecaySlope",
    "decay_slope",
]

DEFAULT_DELTA_SEED = 1e-6
DEFAULT_TAIL_TOL = 1e-10

# system name -> (flow, include inner potential, include outer potential)
SYSTEMS = {
    "inner": ("inner", True, True),
    "model_inner": ("inner", True, False),
    "outer": ("outer", True, True),
    "model_outer": ("outer", False, True),
}


def _flow(system: str, eigen_param, epsilon: float) -> tuple[str, FlowParams]:
    try:
        flow, use_in, use_out = SYSTEMS[system]
    except KeyError:
        raise ValueError(f"unknown system {system!r}; expected one of {sorted(SYSTEMS)}") from None
    return flow, FlowParams(eigen_param, epsilon, use_in, use_out)


def _check_delta(delta_seed: float) -> None:
    if not 0.0 < delta_seed < 1e-2:
        raise ValueError(f"delta_seed must lie in (0, 1e-2), got {delta_seed!r}")


@dataclass(frozen=True)
class ManifoldSeed:
    """Where and how a manifold trajectory is started."""

    radius_offset: float
    slope: float | np.ndarray
    side: str

    def __post_init__(self):
        _check_delta(self.radius_offset)
        if self.side not in ("radius0_unstable", "radius1_center"):
            raise ValueError(f"unknown seed side {self.side!r}")


@dataclass(frozen=True)
class LiftedAngle:
    """Angle on the covering line; ``branch`` is ``k`` with ``value - k pi`` in ``[-pi/2, pi/2)``."""

    value: float

    @property
    def branch(self) -> int:
        return int(math.floor((self.value + HALF_PI) / math.pi))

    @property
    def reduced(self) -> float:
        return self.value - self.branch * math.pi

    def shifted(self, k: int) -> "LiftedAngle":
        return LiftedAngle(self.value + k * math.pi)

    def __float__(self) -> float:
        return float(self.value)


# seeds ------------------------------------------------------------------------


def _potential_at_origin(system: str, epsilon: float, pots: CompositePotential) -> float:
    flow, use_in, use_out = SYSTEMS[system]
    v0, v1 = pots.v0.scalar(0.0), pots.v1.scalar(0.0)
    if flow == "inner":
        return (v0 if use_in else 0.0) + (epsilon**2 * v1 if use_out else 0.0)
    return (v0 / epsilon**2 if use_in else 0.0) + (v1 if use_out else 0.0)


def seed_slope(eigen_param, epsilon: float, pots: CompositePotential, system: str = "inner"):
    """Tangent slope ``d angle / d radius`` of the unstable manifold at the origin.

    Linearising at ``(0, 0)`` with ``radius' ~ radius`` gives
    ``angle ~ (lam + V(0)) / 3 * radius``.
    """
    return (np.asarray(eigen_param, dtype=float) + _potential_at_origin(system, epsilon, pots)) / 3.0


def seed_unstable(
    eigen_param,
    epsilon: float,
    pots: CompositePotential,
    delta_seed: float = DEFAULT_DELTA_SEED,
    system: str = "inner",
) -> AngularState:
    """First-order point on the unstable manifold of ``(0, 0)`` at ``radius = delta_seed``."""
    _check_delta(delta_seed)
    _flow(system, eigen_param, epsilon)
    slope = seed_slope(eigen_param, epsilon, pots, system)
    angle = slope * delta_seed
    return AngularState(float(angle) if angle.ndim == 0 else angle, delta_seed)


# far field --------------------------------------------------------------------


def _kappa_min(eigen_param) -> float:
    return float(np.sqrt(np.min(np.asarray(eigen_param, dtype=float))))


def _tail(system, eigen_param, epsilon, pots, tail_tol) -> float:
    flow, params = _flow(system, eigen_param, epsilon)
    if np.min(eigen_param) < 0:
        return math.inf
    return tail_radius(flow, params, pots, _kappa_min(eigen_param), tail_tol)


def _r(radius: float) -> float:
    return radius / (1.0 - radius)


def _radius(r: float) -> float:
    return r / (1.0 + r)


def _far_samples(r_from: float, r_to: float, n: int = 48) -> np.ndarray:
    return np.geomspace(r_from, r_to, n)[1:]


def _append(traj: Trajectory, radii: np.ndarray, angles: list, events: list[Event]) -> Trajectory:
    s_new = np.array([time_from_radius(x) for x in radii])
    traj.s = np.concatenate([traj.s, s_new])
    traj.radius = np.concatenate([traj.radius, radii])
    traj.angle = np.concatenate([traj.angle, np.array(angles).reshape((len(radii),) + traj.angle.shape[1:])])
    traj.events.extend(events)
    return traj


def _make_event(section: float, angle) -> Event:
    return Event(section=section, s=time_from_radius(section), angle=angle, radius=section)


# trajectories -----------------------------------------------------------------


def unstable_trajectory(
    eigen_param,
    epsilon: float,
    pots: CompositePotential,
    sigma_stop: float,
    sections: Sequence[float] = (),
    system: str = "inner",
    delta_seed: float = DEFAULT_DELTA_SEED,
    ctl: StepControl = StepControl(),
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> Trajectory:
    """Lifted unstable-manifold trajectory from the seed to ``sigma_stop``.

    Parameters
    ----------
    eigen_param : float or ndarray
        ``lam`` (inner systems) or ``mu`` (outer systems); an array gives a
        batch sharing the radius samples.
    sigma_stop : float
        Terminal compact radius in ``(delta_seed, 1)``.
    sections : sequence of float
        Radii at which the state is recorded as an :class:`Event`.

    Raises
    ------
    IntegrationError
        When a step would move the angle by ``pi/2`` or more, or the step
        budget runs out.
    """
    if not delta_seed < sigma_stop < 1.0:
        raise ValueError("sigma_stop must lie in (delta_seed, 1)")
    flow, params = _flow(system, eigen_param, epsilon)
    seed = seed_unstable(eigen_param, epsilon, pots, delta_seed, system)
    r_tail = _tail(system, eigen_param, epsilon, pots, tail_tol)
    x_tail = _radius(r_tail) if math.isfinite(r_tail) else 1.0
    numeric_end = min(sigma_stop, x_tail) if x_tail > delta_seed else sigma_stop
    near = [v for v in sections if v < numeric_end]
    far = sorted(v for v in sections if v > numeric_end)
    traj = integrate(
        make_rhs(flow, params, pots),
        seed,
        numeric_end,
        sections=near,
        direction="forward",
        ctl=ctl,
        system=flow,
        params=params,
        kind=f"unstable:{system}",
    )
    if numeric_end == sigma_stop:
        return traj
    # closed-form continuation through the potential-free region
    base_r, base_angle = _r(numeric_end), traj.angle[-1]
    lam = np.asarray(eigen_param, dtype=float)
    if sigma_stop not in far:
        far.append(sigma_stop)
    events = [_make_event(v, free_transport(base_angle, base_r, _r(v), lam)) for v in far]
    radii = _far_samples(base_r, _r(sigma_stop))
    angles = [free_transport(base_angle, base_r, r, lam) for r in radii]
    return _append(traj, np.array([_radius(r) for r in radii]), angles, events)


def center_trajectory_backward(
    eigen_param,
    epsilon: float,
    pots: CompositePotential,
    tau_stop: float,
    sections: Sequence[float] = (),
    system: str = "outer",
    delta_seed: float = DEFAULT_DELTA_SEED,
    ctl: StepControl = StepControl(),
    tail_tol: float = DEFAULT_TAIL_TOL,
    retries: int = 3,
) -> Trajectory:
    """Center-manifold trajectory of the decaying point, integrated backward to ``tau_stop``.

    The seed at ``radius = 1 - delta_seed`` is the decaying free angle
    ``arctan(-sqrt(eigen_param) - 1/r)``, which reduces to ``arctan(-sqrt(eigen_param))``
    at the boundary.  On an integration failure the seed is moved closer to
    radius 1 (``delta_seed / 10``) up to ``retries`` times.
    """
    lam = np.asarray(eigen_param, dtype=float)
    if np.any(lam < 0):
        raise ValueError("center manifold needs eigen_param >= 0")
    _check_delta(delta_seed)
    if not 0.0 < tau_stop < 1.0 - delta_seed:
        raise ValueError("tau_stop must lie in (0, 1 - delta_seed)")
    flow, params = _flow(system, eigen_param, epsilon)
    r_tail = _tail(system, eigen_param, epsilon, pots, tail_tol)
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        delta = delta_seed / 10**attempt
        x_seed = 1.0 - delta
        r_seed = _r(x_seed)
        r_numeric = min(r_seed, r_tail)
        x_numeric = _radius(r_numeric)
        try:
            if x_numeric <= tau_stop:
                start = np.array(decaying_angle(_r(tau_stop), lam))
                traj = Trajectory(
                    s=np.array([time_from_radius(tau_stop)]),
                    radius=np.array([tau_stop]),
                    angle=start[None] if start.ndim else np.array([float(start)]),
                    system=flow,
                    params=params,
                    kind=f"center:{system}",
                )
                numeric = None
            else:
                start_angle = decaying_angle(r_numeric, lam)
                numeric = integrate(
                    make_rhs(flow, params, pots),
                    AngularState(start_angle if start_angle.ndim else float(start_angle), x_numeric),
                    tau_stop,
                    sections=[v for v in sections if v < x_numeric],
                    direction="backward",
                    ctl=ctl,
                    system=flow,
                    params=params,
                    kind=f"center:{system}",
                )
            break
        except IntegrationError as exc:
            last_error = exc
            warnings.warn(f"center manifold reseeded after: {exc}", RuntimeWarning, stacklevel=2)
    else:
        raise IntegrationError(f"center manifold failed after {retries} reseeds: {last_error}")

    # free decaying solution on [r_numeric, r_seed]; it has no zeros, so branch 0
    far_sections = [v for v in sections if v >= x_numeric and v <= x_seed]
    events = [_make_event(v, np.array(decaying_angle(_r(v), lam))) for v in far_sections]
    if numeric is None:
        traj.events.extend(events + [_make_event(tau_stop, traj.angle[0])])
        return traj
    radii = np.geomspace(r_seed, r_numeric, 48)[:-1] if r_seed > r_numeric else np.array([])
    head_angles = np.array([decaying_angle(r, lam) for r in radii]).reshape((len(radii),) + numeric.angle.shape[1:])
    numeric.s = np.concatenate([[time_from_radius(_radius(r)) for r in radii], numeric.s])
    numeric.radius = np.concatenate([[_radius(r) for r in radii], numeric.radius])
    numeric.angle = np.concatenate([head_angles, numeric.angle])
    numeric.events = events + numeric.events
    return numeric


# grouped batches --------------------------------------------------------------


def _kappa_groups(eigen_param: np.ndarray, base: float = 0.1) -> list[np.ndarray]:
    """Index groups whose ``sqrt(eigen_param)`` spans at most a factor 2.

    Explicit steps are limited by the largest ``kappa`` in a batch while the
    tail radius grows as the smallest one shrinks; grouping keeps both tame.
    """
    kappa = np.sqrt(np.maximum(eigen_param, 0.0))
    key = np.floor(np.log2(np.maximum(kappa, base) / base)).astype(int)
    return [np.flatnonzero(key == k) for k in np.unique(key)]


def unstable_section_angles(
    eigen_param,
    epsilon: float,
    pots: CompositePotential,
    sections: Sequence[float],
    system: str = "inner",
    **kwargs,
) -> dict[float, np.ndarray]:
    """Unstable-manifold angles at ``sections`` for many eigenvalue parameters."""
    lam = np.atleast_1d(np.asarray(eigen_param, dtype=float))
    out = {v: np.empty(lam.size) for v in sections}
    stop = max(sections)
    for idx in _kappa_groups(lam):
        traj = unstable_trajectory(lam[idx], epsilon, pots, stop, sections, system, **kwargs)
        for v in sections:
            out[v][idx] = traj.angle_at(v)
    return out


def center_section_angles(
    eigen_param,
    epsilon: float,
    pots: CompositePotential,
    sections: Sequence[float],
    system: str = "outer",
    **kwargs,
) -> dict[float, np.ndarray]:
    """Center-manifold angles at ``sections`` for many eigenvalue parameters."""
    lam = np.atleast_1d(np.asarray(eigen_param, dtype=float))
    out = {v: np.empty(lam.size) for v in sections}
    stop = min(sections)
    for idx in _kappa_groups(lam):
        traj = center_trajectory_backward(lam[idx], epsilon, pots, stop, sections, system, **kwargs)
        for v in sections:
            out[v][idx] = traj.angle_at(v)
    return out


# lifting and conversion -------------------------------------------------------


def lift(raw_angles) -> np.ndarray:
    """Unwrap angles known modulo ``pi`` into a continuous sequence.

    Consecutive samples must differ by less than ``pi/2`` after reduction;
    a jump of exactly ``pi/2`` is ambiguous and rejected.
    """
    raw = np.asarray(raw_angles, dtype=float)
    if raw.ndim != 1:
        raise ValueError("lift expects a one-dimensional sequence")
    if raw.size == 0:
        return raw.copy()
    step = np.diff(raw)
    reduced = step - math.pi * np.round(step / math.pi)
    if np.any(np.abs(reduced) >= HALF_PI - 1e-12):
        bad = int(np.flatnonzero(np.abs(reduced) >= HALF_PI - 1e-12)[0])
        raise ValueError(f"ambiguous jump of {reduced[bad]:.6g} between samples {bad} and {bad + 1}")
    return raw[0] + np.concatenate([[0.0], np.cumsum(reduced)])


def convert_outer_to_inner_angle(psi, epsilon: float):
    """Map an outer-scale angle to the inner scale by ``tan theta = eps tan psi``.

    The branch index of the lift is kept; at ``psi - k pi = -pi/2`` the result
    is ``k pi - pi/2``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if isinstance(psi, LiftedAngle):
        return LiftedAngle(float(convert_outer_to_inner_angle(psi.value, epsilon)))
    psi = np.asarray(psi, dtype=float)
    k = np.floor((psi + HALF_PI) / math.pi)
    phi = psi - k * math.pi
    with np.errstate(over="ignore"):
        theta = np.where(phi <= -HALF_PI, -HALF_PI, np.arctan(epsilon * np.tan(phi)))
    out = k * math.pi + theta
    return float(out) if out.ndim == 0 else out


# zero-energy diagnostic -------------------------------------------------------


@dataclass
class DecaySlope:
    """Log-log slope of the folded zero-energy angle over a radius window."""

    slope: float
    r_window: tuple[float, float]
    r: np.ndarray = field(repr=False)
    angle: np.ndarray = field(repr=False)

    @property
    def resonance_suspect(self) -> bool:
        return abs(self.slope + 1.0) < 0.3

    def within(self, target: float = -2.0, tol: float = 0.3) -> bool:
        return abs(self.slope - target) <= tol


def decay_slope(
    pots: CompositePotential,
    epsilon: float = 1.0,
    system: str = "model_inner",
    r_window: tuple[float, float] = (20.0, 200.0),
    n: int = 25,
    **kwargs,
) -> DecaySlope:
    """Fit ``log |angle|`` against ``log r`` for the unstable manifold at zero eigenvalue.

    Away from a zero-energy resonance the regular solution tends to a
    constant and the angle decays like ``r**-2``; a slope near ``-1``
    points to a resonance and triggers a warning.
    """
    r = np.geomspace(*r_window, n)
    sections = [_radius(v) for v in r]
    traj = unstable_trajectory(0.0, epsilon, pots, sections[-1], sections, system, **kwargs)
    angle = np.array([traj.angle_at(v) for v in sections])
    folded = angle - math.pi * np.round(angle / math.pi)
    slope = float(np.polyfit(np.log(r), np.log(np.abs(folded)), 1)[0])
    result = DecaySlope(slope, tuple(r_window), r, angle)
    if result.resonance_suspect:
        warnings.warn(
            f"zero-energy angle decays with slope {slope:.3f}; a resonance makes counts unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    return result
