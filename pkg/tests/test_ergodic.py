import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrector_lab.cocycle import CocycleField, coboundary, evaluate, potential
from corrector_lab.environment import GeneratorModel, TorusShape, generate_environment
from corrector_lab.ergodic import (
    RadiusError,
    ball_size,
    directional_average,
    holder_exponent,
    holder_radii,
    multiple_bounds_hold,
    nearest_multiple,
    oscillation_constant_stat,
    poincare_check,
    sublinearity_profile,
)
from corrector_lab.solver import harmonic_cocycle

from conftest import make_env


def ball_points(R, d):
    return [n for n in itertools.product(range(-R, R + 1), repeat=d) if sum(map(abs, n)) <= R]


def constant_field(d, L, y):
    y = np.asarray(y, dtype=float)
    return CocycleField(TorusShape(d, L), np.broadcast_to(y.reshape((d,) + (1,) * d), (d,) + (L,) * d))


@pytest.fixture(scope="module")
def kunnemann():
    env = make_env(2, 24, seed=3)
    S, _ = harmonic_cocycle(env, [1.0, 0.0])
    return env, S


def test_ball_size_formula():
    # |B_R| = 2R^2 + 2R + 1 in d = 2
    for R in range(10):
        assert ball_size(R, 2) == 2 * R * R + 2 * R + 1
    assert ball_size(3, 3) == len(ball_points(3, 3))


def test_profile_constant_field():
    prof = sublinearity_profile(constant_field(2, 16, [1.0, 0.5]), [1.0, 0.5], [1, 2, 4, 7])
    assert np.all(prof.values == 0.0)


def test_profile_coboundary_bound():
    g = np.random.default_rng(0).uniform(-1, 1, (32, 32))
    prof = sublinearity_profile(coboundary(g), [0.0, 0.0], [1, 2, 4, 8, 15])
    assert np.all(prof.values <= 2 * np.abs(g).max() / prof.radii)


def test_profile_brute_force(kunnemann):
    _, S = kunnemann
    y = np.array([1.0, 0.0])
    radii = [1, 3, 6, 11]
    prof = sublinearity_profile(S, y, radii)
    for R, M in zip(radii, prof.values):
        brute = max(abs(evaluate(S, n) - np.dot(n, y)) for n in ball_points(R, 2)) / R
        assert abs(M - brute) <= 1e-12


def test_profile_R_times_M_nondecreasing(kunnemann):
    _, S = kunnemann
    prof = sublinearity_profile(S, [1.0, 0.0], range(1, 12))
    scaled = prof.radii * prof.values
    assert np.all(np.diff(scaled) >= 0)


def test_profile_radius_guard():
    with pytest.raises(RadiusError):
        sublinearity_profile(constant_field(2, 16, [1.0, 0.0]), [1.0, 0.0], [1, 8])


def test_directional_full_period(kunnemann):
    _, S = kunnemann
    L = S.L
    assert directional_average(S, (1, 0), L).value == pytest.approx(1.0, abs=1e-12)
    assert abs(directional_average(S, (1, 1), L).value - 0.5) <= 1e-9
    assert abs(directional_average(S, (2, -1), L).value - 2 / 3) <= 1e-9
    assert directional_average(S, (1, 1), L).wrapped
    assert not directional_average(S, (1, 1), 3).wrapped


def test_directional_constant_field():
    S = constant_field(2, 8, [2.0, -1.0])
    for k in (1, 3, 8, 20):
        assert directional_average(S, (1, 2), k).value == pytest.approx(0.0, abs=1e-15)
        assert directional_average(S, (3, 1), k).value == pytest.approx(5 / 4, abs=1e-15)


def test_directional_zero_direction():
    with pytest.raises(ValueError):
        directional_average(constant_field(1, 4, [1.0]), (0,), 3)


def poincare_brute(u, R):
    d, L = u.ndim, u.shape[0]

    def at(n):
        return u[tuple(np.mod(n, L))]

    pts = ball_points(R, d)
    vals = np.array([at(n) for n in pts])
    lhs = np.sum((vals - vals.mean()) ** 2)
    rhs = 0.0
    for n in ball_points(R + 1, d):
        for i in range(d):
            e = np.eye(d, dtype=int)[i]
            rhs += (at(np.add(n, e)) - at(n)) ** 2 + (at(np.subtract(n, e)) - at(n)) ** 2
    return lhs, 4 * R * R * rhs


def test_poincare_constant():
    assert poincare_check(np.full((16, 16), 2.0), 3) == (0.0, 0.0, True)


def test_poincare_hand_example():
    u = np.zeros(16)
    u[0] = 1.0
    lhs, rhs, holds = poincare_check(u, 1)
    assert lhs == pytest.approx(2 / 3, abs=1e-15)
    assert rhs == 16.0
    assert holds


@pytest.mark.parametrize("d,L,R", [(1, 12, 4), (2, 10, 3), (3, 8, 2)])
def test_poincare_matches_brute_force(d, L, R):
    u = np.random.default_rng(d).standard_normal((L,) * d)
    lhs, rhs, _ = poincare_check(u, R)
    blhs, brhs = poincare_brute(u, R)
    assert lhs == pytest.approx(blhs, rel=1e-12)
    assert rhs == pytest.approx(brhs, rel=1e-12)


def test_poincare_off_centre():
    u = np.random.default_rng(5).standard_normal((12, 12))
    shifted = np.roll(u, (-3, -4), axis=(0, 1))
    assert poincare_check(u, 3, center=(3, 4)) == poincare_check(shifted, 3)


def test_poincare_guard():
    with pytest.raises(RadiusError):
        poincare_check(np.zeros((8, 8)), 3)


def test_holder_radii():
    assert holder_radii(64) == (8, 16, 32, 64)
    assert holder_radii(8) == (1, 2, 4, 8)


def test_holder_affine():
    env = generate_environment(TorusShape(2, 40), GeneratorModel.constant(1.0), (0.5, 2), 0)
    rho = 17
    u = np.broadcast_to(np.arange(-rho, rho + 1, dtype=float)[:, None], (2 * rho + 1,) * 2)
    est = holder_exponent(env, u, 8)
    assert abs(est.alpha_hat - 1.0) <= 0.05
    assert est.fit_quality > 0.99
    assert est.osc == (2.0, 4.0, 8.0, 16.0)


def test_holder_constant_degenerate():
    env = generate_environment(TorusShape(2, 40), GeneratorModel.constant(1.0), (0.5, 2), 0)
    est = holder_exponent(env, np.full((35, 35), 4.0), 8)
    assert est.degenerate
    assert np.isnan(est.alpha_hat)


def test_holder_rejects_non_harmonic():
    env = generate_environment(TorusShape(2, 40), GeneratorModel.constant(1.0), (0.5, 2), 0)
    x = np.arange(-17, 18, dtype=float)
    u = x[:, None] ** 2 + 0 * x[None, :]
    with pytest.raises(ValueError, match="not harmonic"):
        holder_exponent(env, u, 8)


def test_holder_guards():
    env = generate_environment(TorusShape(2, 30), GeneratorModel.constant(1.0), (0.5, 2), 0)
    with pytest.raises(RadiusError):
        holder_exponent(env, np.zeros((35, 35)), 8)
    env = generate_environment(TorusShape(2, 40), GeneratorModel.constant(1.0), (0.5, 2), 0)
    with pytest.raises(ValueError):
        holder_exponent(env, np.zeros((15, 15)), 4)


def test_holder_kunnemann_potential():
    env = make_env(2, 40, seed=1)
    S, _ = harmonic_cocycle(env, [1.0, 0.0])
    est = holder_exponent(env, potential(S, 17), 8)
    assert est.alpha_hat > 0.1 and est.fit_quality > 0.9


def test_oscillation_stat_closed_form():
    # all increments of direction 0 equal 1, direction 1 zero: each site contributes 2
    L = 64
    S = constant_field(2, L, [1.0, 0.0])
    env = make_env(2, L)
    for R in (1, 3, 7):
        B = lambda r: 2 * r * r + 2 * r + 1  # noqa: E731
        expected = np.sqrt((4 * R) ** 2 / B(4 * R) * 4 * 2 * B(4 * R + 1)) / R
        assert oscillation_constant_stat(env, S, R) == pytest.approx(expected, rel=1e-14)


def test_oscillation_stat_homogeneous(kunnemann):
    env, S = kunnemann
    scaled = CocycleField(S.shape, -2.5 * S.increments)
    assert oscillation_constant_stat(env, scaled, 2) == pytest.approx(2.5 * oscillation_constant_stat(env, S, 2), rel=1e-12)
    with pytest.raises(RadiusError):
        oscillation_constant_stat(env, S, 3)


def test_nearest_multiple_examples():
    assert nearest_multiple([7], 2).tolist() == [6]
    assert multiple_bounds_hold([7], [6], 2)
    assert nearest_multiple([0, 0], 3).tolist() == [0, 0]
    assert nearest_multiple([1, -1], 3).tolist() == [0, 0]
    assert nearest_multiple([-5, 3], 4).tolist() == [-6, 2]  # x = (2.5, 1.5), tie goes to axis 0


def test_nearest_multiple_exhaustive_small():
    for n in range(1, 6):
        for m in itertools.product(range(-12, 13), repeat=2):
            ell = nearest_multiple(m, n)
            assert multiple_bounds_hold(m, ell, n)
            M = sum(map(abs, m))
            assert np.abs(ell).sum() == (M // n) * n


@settings(max_examples=300, deadline=None)
@given(
    m=st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=5),
    n=st.integers(1, 50),
)
def test_nearest_multiple_property(m, n):
    ell = nearest_multiple(m, n)
    assert multiple_bounds_hold(m, ell, n)
    M = sum(map(abs, m))
    k = M // n
    assert np.abs(ell).sum() == k * n
    if k:
        v = ell // k
        assert np.array_equal(v * k, ell) and np.abs(v).sum() == n


def test_oscillation_stat_bounded_on_grid():
    # R = 32 needs 4R + 1 = 129 <= L // 2 - 1, hence L = 260
    env = make_env(2, 260, seed=0)
    S, _ = harmonic_cocycle(env, [1.0, 0.0])
    vals = [oscillation_constant_stat(env, S, R) for R in (4, 8, 16, 32)]
    assert max(vals) <= 2 * vals[0]
