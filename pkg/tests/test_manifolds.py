import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from spectral_scales.manifolds import (
    SYSTEMS,
    LiftedAngle,
    ManifoldSeed,
    center_section_angles,
    center_trajectory_backward,
    convert_outer_to_inner_angle,
    decay_slope,
    lift,
    seed_slope,
    seed_unstable,
    unstable_section_angles,
    unstable_trajectory,
)
from spectral_scales.potentials import CompositePotential, gaussian, sech2, zero
from spectral_scales.scenarios import SCENARIOS

PT = CompositePotential(sech2(-6.0), zero(), 1.0)


def regular_angle_mod_pi(profile, lam, r, r0=1e-3):
    c = (float(profile(0.0)) + lam) / 6
    y0 = [r0 + c * r0**3, 1 + 3 * c * r0**2]
    sol = solve_ivp(lambda x, y: [y[1], (float(profile(x)) + lam) * y[0]], (r0, r), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    u, du = sol.y[:, -1]
    return math.atan((du - u / r) / u)


def decaying_angle_mod_pi(profile, lam, r, R=40.0):
    k = math.sqrt(lam)
    y0 = [1.0, -k]
    sol = solve_ivp(lambda x, y: [y[1], (float(profile(x)) + lam) * y[0]], (R, r), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    u, du = sol.y[:, -1]
    return math.atan((du - u / r) / u)


def same_mod_pi(a, b, tol):
    d = (a - b) / math.pi
    return abs(d - round(d)) * math.pi < tol


def test_seed_slope_per_system():
    pots = CompositePotential(gaussian(-2.8), gaussian(-30.0), 0.1)
    lam = 0.4
    assert seed_slope(lam, 0.1, pots, "inner") == pytest.approx((lam - 2.8 - 0.3) / 3)
    assert seed_slope(lam, 0.1, pots, "model_inner") == pytest.approx((lam - 2.8) / 3)
    assert seed_slope(lam, 0.1, pots, "outer") == pytest.approx((lam - 280.0 - 30.0) / 3)
    assert seed_slope(lam, 0.1, pots, "model_outer") == pytest.approx((lam - 30.0) / 3)
    assert set(SYSTEMS) == {"inner", "model_inner", "outer", "model_outer"}


def test_seed_examples():
    free = CompositePotential(zero(), zero(), 0.1)
    assert seed_unstable(0.0, 0.1, free).angle == 0.0
    assert seed_unstable(0.0, 1.0, SCENARIOS[1].composite(1.0), system="model_inner").angle == pytest.approx(-2.8 / 3 * 1e-6)
    with pytest.raises(ValueError):
        seed_unstable(0.0, 0.1, free, delta_seed=0.5)
    with pytest.raises(ValueError):
        ManifoldSeed(1e-6, 0.0, "middle")


@pytest.mark.parametrize("lam", [0.05, 0.5, 3.0])
@pytest.mark.parametrize("r", [0.5, 2.0, 6.0])
def test_unstable_manifold_is_regular_solution(lam, r):
    sigma = r / (1 + r)
    got = unstable_trajectory(lam, 1.0, PT, sigma, system="model_inner").end.angle
    assert same_mod_pi(got, regular_angle_mod_pi(PT, lam, r), 1e-8)


@pytest.mark.parametrize("lam", [0.2, 2.0])
def test_center_manifold_is_decaying_solution(lam):
    got = center_trajectory_backward(lam, 1.0, PT, 0.5, system="model_inner").end.angle
    assert same_mod_pi(got, decaying_angle_mod_pi(PT, lam, 1.0), 1e-7)


def test_manifolds_connect_at_eigenvalue():
    # -6 sech^2 has its only positive eigenvalue at 1
    up = unstable_section_angles([1.0, 0.9], 1.0, PT, [0.5], "model_inner")[0.5]
    down = center_section_angles([1.0, 0.9], 1.0, PT, [0.5], "model_inner")[0.5]
    assert same_mod_pi(up[0], down[0], 1e-8)
    assert not same_mod_pi(up[1], down[1], 1e-3)


def test_unstable_winding_counts_nodes():
    end = 1 - 1e-6
    below = unstable_trajectory(0.5, 1.0, PT, end, system="model_inner")
    above = unstable_trajectory(1.5, 1.0, PT, end, system="model_inner")
    assert round((below.angle[0] - below.angle[-1]) / math.pi) == 1
    assert round((above.angle[0] - above.angle[-1]) / math.pi) == 0
    assert abs(np.diff(below.angle)).max() < math.pi / 2


def test_seed_and_tail_robustness():
    pots = SCENARIOS[2].composite(0.1)
    mu = np.linspace(0.5, 15.0, 7)
    base = unstable_section_angles(0.01 * mu, 0.1, pots, [0.7])[0.7]
    half = unstable_section_angles(0.01 * mu, 0.1, pots, [0.7], delta_seed=5e-7)[0.7]
    np.testing.assert_allclose(half, base, atol=1e-8)
    c_base = center_section_angles(mu, 0.1, pots, [0.2])[0.2]
    c_tail = center_section_angles(mu, 0.1, pots, [0.2], tail_tol=5e-11)[0.2]
    c_seed = center_section_angles(mu, 0.1, pots, [0.2], delta_seed=5e-7)[0.2]
    np.testing.assert_allclose(c_tail, c_base, atol=1e-8)
    np.testing.assert_allclose(c_seed, c_base, atol=1e-8)


def test_batched_sections_equal_single():
    pots = SCENARIOS[1].composite(0.1)
    lam = np.array([1e-4, 0.03, 0.2])
    batch = unstable_section_angles(lam, 0.1, pots, [0.6, 0.9])
    for i, l in enumerate(lam):
        one = unstable_trajectory(float(l), 0.1, pots, 0.9, [0.6])
        assert batch[0.6][i] == pytest.approx(one.angle_at(0.6), abs=1e-8)
        assert batch[0.9][i] == pytest.approx(one.angle_at(0.9), abs=1e-8)


@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=40), st.floats(-10, 10))
def test_lift_recovers_continuous_sequence(steps, start):
    true = start + np.concatenate([[0.0], np.cumsum(steps)])
    raw = true - math.pi * np.floor(true / math.pi + 0.5)
    np.testing.assert_allclose(lift(raw) - lift(raw)[0], true - true[0], atol=1e-9)


def test_lift_rejects_ambiguous_jump():
    with pytest.raises(ValueError):
        lift([0.0, math.pi / 2])
    with pytest.raises(ValueError):
        lift([[0.0, 1.0]])
    assert lift([]).size == 0


@given(psi=st.floats(-20, 20), eps=st.floats(1e-3, 1.0))
def test_conversion_keeps_tangent_relation_and_branch(psi, eps):
    theta = convert_outer_to_inner_angle(psi, eps)
    k = math.floor((psi + math.pi / 2) / math.pi)
    assert math.floor((theta + math.pi / 2) / math.pi) == k
    phi = psi - k * math.pi
    assume(abs(abs(phi) - math.pi / 2) > 1e-6)
    assert math.tan(theta) == pytest.approx(eps * math.tan(psi), rel=1e-9, abs=1e-12)


def test_conversion_special_values():
    assert convert_outer_to_inner_angle(-math.pi / 2, 0.1) == -math.pi / 2
    assert convert_outer_to_inner_angle(0.0, 0.1) == 0.0
    assert convert_outer_to_inner_angle(3 * math.pi, 0.1) == pytest.approx(3 * math.pi)
    lifted = convert_outer_to_inner_angle(LiftedAngle(2 * math.pi + 0.3), 0.5)
    assert isinstance(lifted, LiftedAngle) and lifted.branch == 2
    psi = np.linspace(-7, 7, 101)
    assert np.all(np.diff(convert_outer_to_inner_angle(psi, 0.2)) >= 0)
    with pytest.raises(ValueError):
        convert_outer_to_inner_angle(0.0, 0.0)


@given(st.floats(-50, 50))
def test_lifted_angle_parts(v):
    a = LiftedAngle(v)
    assert -math.pi / 2 <= a.reduced < math.pi / 2 + 1e-12
    assert a.branch * math.pi + a.reduced == pytest.approx(v)
    assert a.shifted(3).branch == a.branch + 3
    assert float(a) == v


def test_decay_slope_non_resonant_well():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d = decay_slope(CompositePotential(gaussian(-0.5), zero(), 1.0))
    assert d.within(-2.0, 0.3)
    assert not d.resonance_suspect


def test_decay_slope_flags_resonance():
    # a Gaussian well of depth ~2.684 binds its first state exactly at zero energy
    with pytest.warns(RuntimeWarning, match="resonance"):
        d = decay_slope(CompositePotential(gaussian(-2.684), zero(), 1.0))
    assert d.resonance_suspect


def test_free_unstable_manifold_does_not_wind():
    free = CompositePotential(zero(), zero(), 0.1)
    traj = unstable_trajectory(0.0, 0.1, free, 1 - 1e-6)
    assert np.all(traj.angle <= 0.0) and np.all(traj.angle > -math.pi / 2)


def test_section_angle_continuous_in_lambda():
    pots = SCENARIOS[1].composite(0.1)
    # jumps shrink in proportion to the lambda step: no hidden branch flips
    jumps = []
    for n in (200, 2000):
        lam = np.linspace(1e-4, 0.3, n)
        jumps.append(np.max(np.abs(np.diff(unstable_section_angles(lam, 0.1, pots, [0.9])[0.9]))))
    assert jumps[1] < 0.2 and jumps[0] / jumps[1] > 5


def test_seed_is_repelled_backward():
    from spectral_scales.odeflow import FlowParams, integrate, make_rhs

    pots = SCENARIOS[1].composite(1.0)
    seed = seed_unstable(0.0, 1.0, pots, 1e-3, "model_inner")
    rhs = make_rhs("inner", FlowParams(0.0, 1.0, True, False), pots)
    back = integrate(rhs, seed, 1e-4)
    assert abs(back.end.angle) < abs(seed.angle)


def test_center_backward_limits():
    free = CompositePotential(zero(), zero(), 0.1)
    end = center_trajectory_backward(25.0, 0.1, free, 1e-6, system="model_outer").end.angle
    assert same_mod_pi(end, math.pi / 2, 1e-5)
    # two far-field states: the decaying solution at mu = 0 gains two half-turns
    traj = center_trajectory_backward(0.0, 0.1, SCENARIOS[1].composite(0.1), 1e-6, system="model_outer")
    assert abs(traj.angle[0]) < 1e-5
    assert traj.end.angle == pytest.approx(2 * math.pi - math.pi / 2, abs=1e-5)
    # free decaying solution at lambda = 0 is u = const, so the angle is atan(-1/r)
    zero_traj = center_trajectory_backward(0.0, 0.1, free, 0.5, system="model_outer")
    assert zero_traj.end.angle == pytest.approx(-math.pi / 4, abs=1e-8)


def test_lift_examples():
    np.testing.assert_array_equal(lift([0.3] * 5), [0.3] * 5)
    true = np.linspace(0.0, -2.5 * math.pi, 60)
    raw = true - math.pi * np.floor(true / math.pi + 0.5)
    out = lift(raw)
    assert np.all(np.diff(out) < 0) and out[0] - out[-1] > math.pi


@given(psi=st.floats(-10, 10))
def test_conversion_identity_at_unit_epsilon(psi):
    assert convert_outer_to_inner_angle(psi, 1.0) == pytest.approx(psi, abs=1e-12)


@pytest.mark.parametrize("k", [-2, 0, 3])
def test_conversion_fixed_values(k):
    assert convert_outer_to_inner_angle(k * math.pi, 0.1) == pytest.approx(k * math.pi)
    assert convert_outer_to_inner_angle(math.pi / 2 + k * math.pi, 0.1) == pytest.approx(math.pi / 2 + k * math.pi)
