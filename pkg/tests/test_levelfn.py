import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdimlab.covers import Region
from mdimlab.levelfn import (
    LevelFunction,
    TruncationError,
    bump_phi,
    eval_level_function,
    hitting_horizon,
    level_report,
    make_level_function,
)
from mdimlab.systems import make_rotation

ROT = make_rotation("sqrt(2)-1", horizon=64)
CENTER = ROT.from_angles([0.3])
LF = make_level_function(ROT, CENTER, 0.05, samples=ROT.sample(500, 0))


def markov_oracle(lf, state, cap=10_000):
    """Expected number of steps through the fundamental matrix of the absorbed walk."""
    phis = []
    for j in range(cap):
        p = float(lf.phi(lf.sys.act(state, -j))[0])
        phis.append(p)
        if p == 0.0:
            break
    n = len(phis)
    Q = np.zeros((n, n))
    for j in range(n - 1):
        Q[j, j + 1] = phis[j]
    visits = np.linalg.solve(np.eye(n) - Q, np.eye(n))[0]
    return float(visits @ np.array(phis))


def monte_carlo(lf, state, runs, rng):
    total = 0
    for _ in range(runs):
        s = 0
        while rng.random() < lf.phi(lf.sys.act(state, -s))[0]:
            s += 1
        total += s
    return total / runs


def test_zero_at_phi_zero():
    assert LF.phi(CENTER)[0] == 0.0
    assert eval_level_function(LF, CENTER)[0][0] == 0.0


def test_deterministic_walk_length():
    s0 = 7
    U = Region(0, 0, member=lambda s: np.atleast_2d(s)[:, 1] <= -s0)
    lf = LevelFunction(ROT, U, lambda s: np.where(np.atleast_2d(s)[:, 1] <= -s0, 0.0, 1.0), horizon_h=s0)
    x = ROT.from_angles([0.1])
    value, bound = eval_level_function(lf, x)
    assert value[0] == s0 and bound[0] == 0.0


def test_series_matches_markov_oracle():
    pts = ROT.sample(20, 11)
    values, bounds = eval_level_function(LF, pts)
    oracle = np.array([markov_oracle(LF, p[None, :]) for p in pts])
    np.testing.assert_allclose(values, oracle, atol=1e-8)
    assert np.all(bounds == 0.0)


def test_series_close_to_monte_carlo():
    rng = np.random.default_rng(0)
    pts = ROT.sample(3, 4)
    values = eval_level_function(LF, pts)[0]
    for p, v in zip(pts, values):
        est = monte_carlo(LF, p[None, :], 400, rng)
        assert abs(est - v) < 0.2 * max(v, 1.0)


def test_phi_side_conditions():
    samples = ROT.sample(500, 0)
    audit = LF.check(samples)
    assert audit["phi_one_off_U"] and audit["valid"]
    U, phi = bump_phi(ROT, CENTER, 0.05)
    outside = samples[~U.member(samples)]
    assert np.all(phi(outside) == 1.0)


def test_bad_phi_rejected():
    U, _ = bump_phi(ROT, CENTER, 0.05)
    with pytest.raises(ValueError):
        LevelFunction(ROT, U, lambda s: np.full(len(np.atleast_2d(s)), 0.5)).check(ROT.sample(100, 0))


def test_truncation_error_names_orbit_segment():
    U, _ = bump_phi(ROT, CENTER, 0.05)
    lf = LevelFunction(ROT, U, lambda s: np.full(len(np.atleast_2d(s)), 0.9), max_steps=50, tail_tol=1e-30)
    with pytest.raises(TruncationError) as err:
        eval_level_function(lf, ROT.sample(3, 0), accuracy=1e-6)
    assert err.value.report["orbit_segment"] == [0, -50]


def test_truncation_bound_monotone_in_max_steps():
    pts = ROT.sample(200, 5)
    U, phi = bump_phi(ROT, CENTER, 0.05)
    h = hitting_horizon(LF)
    bounds = []
    for steps in (5, 10, 20, 40, 80):
        lf = LevelFunction(ROT, U, phi, max_steps=steps, horizon_h=h)
        bounds.append(eval_level_function(lf, pts)[1].max())
    assert all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:]))
    assert bounds[-1] == 0.0


def test_level_report_identities():
    samples = ROT.sample(500, 0)
    rep = level_report(LF, 10, samples)
    bound = 2 * LF.tail_tol * LF.max_steps
    assert rep["recursion_residual"] <= bound
    assert rep["translation_residual"] <= bound
    assert rep["translation_residual_segmentwise"] <= bound
    assert rep["checked_count"] + rep["excluded_count"] == 500
    with pytest.raises(ValueError):
        level_report(LF, 40, samples)


def test_z_zero_translation_is_exact():
    samples = ROT.sample(100, 1)
    assert level_report(LF, 0, samples)["translation_residual"] == 0.0


def test_sample_in_shifted_u_is_excluded():
    lf = make_level_function(ROT, CENTER, 0.01)
    inside = ROT.act(CENTER, 3)
    far = ROT.from_angles([0.8])
    rep = level_report(lf, 5, np.vstack([inside, far]))
    assert rep["excluded_count"] >= 1


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0, 1, exclude_max=True))
def test_xi_nonnegative_and_recursion(x):
    p = ROT.from_angles([x])
    xi0 = eval_level_function(LF, p)[0][0]
    xi1 = eval_level_function(LF, ROT.act(p, 1))[0][0]
    assert xi0 >= 0
    assert abs(xi1 - LF.phi(ROT.act(p, 1))[0] * (xi0 + 1)) <= 1e-6
