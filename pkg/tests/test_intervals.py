import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdimlab.errors import ConstructionError
from mdimlab.intervals import (
    build_independent_set,
    build_interval_system,
    count_met,
    count_met_many,
    exact_sigma,
    make_independent_set,
    omega_hits,
    phi_sigma,
    phi_values,
)
from mdimlab.quadratic import QuadraticNumber, parse_quadratic


def brute_phi(values, t, q):
    """Minimum of |t+z1-a1| + |t+z2-a2| over distinct pairs (a, z), |z| <= ceil(q)+1."""
    zr = range(-(math.ceil(q) + 1), math.ceil(q) + 2)
    terms = sorted(abs(t + z - a) for a in values for z in zr)
    return terms[0] + terms[1]


def test_small_set_contains_one_and_is_independent():
    A = build_independent_set(3, 3, 0)
    assert len(A.points) == 3
    assert QuadraticNumber(Fraction(1)) in A.points
    assert A.independent
    assert all(0 <= v < 3 for v in A.values)


def test_dependent_probe_fails_certificate():
    probe = make_independent_set(3, [QuadraticNumber(1), parse_quadratic("sqrt(2)"), parse_quadratic("3-sqrt(2)")])
    assert not probe.independent


def test_dependent_probe_aborts_sigma():
    # 1 and 2 collide modulo Z, so phi vanishes at t = 0
    probe = make_independent_set(3, [QuadraticNumber(1), QuadraticNumber(2)])
    assert phi_values(probe, np.array([0.0]))[0] == 0
    with pytest.raises(ConstructionError) as err:
        phi_sigma(probe, grid=100)
    assert err.value.report["operation"] == "phi_sigma"


def test_count_bound_enforced():
    with pytest.raises(ValueError):
        build_independent_set(3, 20_000)
    with pytest.raises(ValueError):
        build_independent_set(2, 5)
    with pytest.raises(ValueError):
        build_independent_set(3, 1)


def test_phi_matches_pair_minimisation():
    A = build_independent_set(5, 12, 1)
    ts = np.linspace(0, 1, 301)
    fast = phi_values(A, ts)
    slow = np.array([brute_phi(A.values, t, 5) for t in ts])
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_phi_periodic_and_positive():
    A = build_independent_set(5, 40, 0)
    ts = np.linspace(0, 1, 997)
    np.testing.assert_allclose(phi_values(A, ts + 1), phi_values(A, ts), atol=1e-12)
    phi, lower = phi_sigma(A, grid=1000)
    assert lower > 0
    assert phi(ts).min() > 0
    assert lower <= exact_sigma(A) + 1e-12


def test_q3_base_intervals():
    E = build_interval_system(3, 0.2, 0)
    lo, hi = zip(*E.base_intervals)
    assert len(E.base_intervals) == 2
    assert all(b - a > 1 for a, b in E.base_intervals)
    assert hi[0] < lo[1] and lo[0] >= 0 and hi[1] < 3


@pytest.mark.parametrize("q", [3, 5, 8])
@pytest.mark.parametrize("mesh_bound", [0.2, 0.05])
def test_interval_system_contract(q, mesh_bound):
    E = build_interval_system(q, mesh_bound, 0)
    assert E.mesh <= mesh_bound
    ts = np.arange(1000) / 1000
    assert count_met_many(ts, E).min() >= q - 2
    assert omega_hits(ts, E).max() <= 1
    for fam in E.families:
        for (a, b), (c, d) in zip(fam, fam[1:]):
            assert b < c
        for a, b in fam:
            assert 0 <= a <= b < q
    assert E.families[-1] == []


def test_omega_scan_matches_brute_force():
    E = build_interval_system(5, 0.2, 2)
    for t in np.linspace(0, 1, 113, endpoint=False):
        brute = sum(
            any(abs(t + z - a) < E.omega_radius for a in E.points) for z in range(-2, 8)
        )
        assert omega_hits(np.array([t]), E)[0] == brute


def test_count_met_direct_scan():
    E = build_interval_system(5, 0.2, 0)
    lo, hi = E.families[0][0]
    t = (lo + hi) / 2
    scan = sum(
        any(a <= t % 1 + z <= b for z in range(0, 6) for a, b in fam) for fam in E.families
    )
    assert count_met(t, E) == scan
    assert count_met(t, E) in (E.q - 1, E.q - 2, E.q)


def test_mesh_too_small_reports():
    with pytest.raises(ConstructionError) as err:
        build_interval_system(5, 1e-4, 0)
    assert "attempts" in err.value.report


def test_populated_last_family():
    E = build_interval_system(5, 0.2, 0, populate_last=True)
    assert E.families[-1]
    assert count_met_many(np.arange(200) / 200, E).min() >= 3


def test_json_shape():
    E = build_interval_system(4, 0.2, 0)
    d = E.to_json()
    assert set(d) == {"q", "families", "sigma_lower", "mesh"}
    assert len(d["families"]) == 4


@settings(max_examples=40, deadline=None)
@given(t=st.floats(-50, 50, allow_nan=False), z=st.integers(-5, 5))
def test_count_met_integer_invariant(t, z):
    E = _E5
    assert count_met(t, E) == count_met(t + z, E)
    assert count_met(t, E) >= 3


_E5 = build_interval_system(5, 0.1, 3)
