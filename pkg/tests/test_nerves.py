import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _builders import predicate_cover
from mdimlab.covers import FiniteCover, Region, order_profile
from mdimlab.nerves import (
    SimplicialComplex,
    build_nerve,
    canonical_map,
    finite_to_one_map,
    hulls_intersect,
)
from mdimlab.systems import make_rotation
from mdimlab.torus import arc_cover

ROT = make_rotation("sqrt(2)-1")


def brute_nerve(c):
    """All region subsets whose hit sets share a point."""
    out = set()
    ids = [r.id for r in c.regions]
    hits = {r.id: set(r.hits.tolist()) for r in c.regions}
    for k in range(1, len(ids) + 1):
        for combo in itertools.combinations(ids, k):
            if set.intersection(*(hits[i] for i in combo)):
                out.add(frozenset(combo))
    return out


def test_disjoint_regions_give_two_vertices():
    pts = ROT.sample(100, 0)
    c = predicate_cover(ROT, [lambda s: ROT.angles(s) < 0.5, lambda s: ROT.angles(s) >= 0.5], pts)
    K = build_nerve(c)
    assert K.vertices == [0, 1] and K.dim == 0
    assert frozenset([0, 1]) not in K.simplices()


def test_three_arcs_form_a_cycle():
    pts = ROT.sample(600, 1)
    c = arc_cover(ROT, 3, 0.02, pts)
    K = build_nerve(c)
    assert K.simplices() == brute_nerve(c)
    assert K.dim == 1
    assert sorted(sorted(s) for s in K.maximal) == [[0, 1], [0, 2], [1, 2]]


def test_common_point_gives_full_simplex():
    pts = ROT.sample(50, 2)
    everything = lambda s: np.ones(len(s), bool)  # noqa: E731
    K = build_nerve(predicate_cover(ROT, [everything] * 4, pts))
    assert K.dim == 3 and frozenset(range(4)) in K


def test_complex_json_round_trip():
    K = SimplicialComplex([0, 1, 2, 3], [frozenset([0, 1, 2]), frozenset([2, 3])])
    back = SimplicialComplex.from_json(json.loads(json.dumps(K.to_json())))
    assert back.simplices() == K.simplices()
    with pytest.raises(ValueError):
        SimplicialComplex([0, 1], [frozenset([0, 5])])


@settings(max_examples=30, deadline=None)
@given(arcs=st.integers(2, 9), ov=st.floats(0.0, 0.2), seed=st.integers(0, 100))
def test_nerve_dim_matches_order(arcs, ov, seed):
    pts = ROT.sample(150, seed)
    c = arc_cover(ROT, arcs, ov, pts)
    K = build_nerve(c)
    assert K.dim + 1 == order_profile(c)[0]
    faces = K.simplices()
    for s in faces:  # downward closed
        for r in range(1, len(s)):
            assert all(frozenset(t) in faces for t in itertools.combinations(s, r))


def test_canonical_map_vertex_and_midpoint():
    # grid offset by half a step keeps sample points off the arc endpoints
    pts = ROT.from_angles(np.linspace(0.0, 1.0, 400, endpoint=False) + 1 / 800)
    c = arc_cover(ROT, 2, 0.05, pts)  # [-0.05, 0.55] and [0.45, 1.05]
    cm = canonical_map(c)
    interior = cm(ROT.from_angles([0.25]))[0]
    assert sorted(interior.tolist()) == [0.0, 1.0]
    mid = cm(ROT.from_angles([0.5]))[0]
    np.testing.assert_allclose(mid, [0.5, 0.5], atol=1e-12)


def test_canonical_map_rejects_uncovered():
    pts = ROT.sample(100, 0)
    c = predicate_cover(ROT, [lambda s: ROT.angles(s) < 0.5], pts)
    with pytest.raises(ValueError):
        canonical_map(c)


@settings(max_examples=20, deadline=None)
@given(arcs=st.integers(2, 7), ov=st.floats(0.005, 0.1), seed=st.integers(0, 50))
def test_canonical_map_is_partition_of_unity(arcs, ov, seed):
    pts = ROT.sample(200, seed)
    c = arc_cover(ROT, arcs, ov, pts)
    cm = canonical_map(c)
    coords = cm(pts)
    assert coords.min() >= 0
    np.testing.assert_allclose(coords.sum(axis=1), 1.0, atol=1e-12)
    K = build_nerve(c)
    ids = np.array(cm.vertices)
    for row in coords:
        assert frozenset(ids[row > 0].tolist()) in K
    assert cm.fibers_refine()


def test_fibers_refine_three_arcs_exhaustive():
    pts = ROT.sample(500, 3)
    c = arc_cover(ROT, 3, 0.03, pts)
    cm = canonical_map(c)
    coords = cm(pts)
    inc = c.sample_incidence
    for a, b in itertools.combinations(range(len(pts)), 2):
        if np.array_equal(coords[a], coords[b]):
            assert (inc[:, a] & inc[:, b]).any()
    assert cm.fibers_refine()


def test_single_vertex_map_is_constant():
    K = SimplicialComplex([7], [])
    g = finite_to_one_map(K, 1)
    assert np.ptp(g(np.ones((3, 1)), [7])) == 0
    assert g.audit["max_fiber"] <= 1


def brute_fiber_cycle(g, y):
    """Distinct points of the cycle over ``y``: edges whose image interval contains ``y``."""
    pts = set()
    for s in g.complex.maximal:
        a, b = sorted(s)
        ya, yb = g.vertex_images[a][0], g.vertex_images[b][0]
        if min(ya, yb) <= y <= max(ya, yb):
            lam = (y - ya) / (yb - ya)
            key = (a, round(1 - lam, 9), b, round(lam, 9))
            if lam == 0:
                key = (a, 1.0)
            elif lam == 1:
                key = (b, 1.0)
            pts.add(key)
    return len(pts)


def test_cycle_into_line_has_fibers_of_size_two():
    K = SimplicialComplex([0, 1, 2], [frozenset([0, 1]), frozenset([1, 2]), frozenset([0, 2])])
    g = finite_to_one_map(K, 1, seed=0)
    assert g.audit["max_fiber"] == 2
    ys = np.linspace(0.01, 0.99, 97) + 1e-4
    assert max(len(g.preimages([y])) for y in ys) == 2
    for y in ys:
        assert len(g.preimages([y])) == brute_fiber_cycle(g, y)


def test_triangle_into_plane_is_injective():
    K = SimplicialComplex([0, 1, 2], [frozenset([0, 1, 2])])
    g = finite_to_one_map(K, 2, seed=3)
    assert g.audit["max_fiber"] == 1
    assert g.audit["general_position_violations"] == []


def test_finite_to_one_errors_and_determinism():
    K = SimplicialComplex([0, 1, 2], [frozenset([0, 1, 2])])
    with pytest.raises(ValueError):
        finite_to_one_map(K, 0)
    with pytest.raises(ValueError):
        finite_to_one_map(K, 1)
    a, b = finite_to_one_map(K, 2, seed=5), finite_to_one_map(K, 2, seed=5)
    assert all(np.array_equal(a.vertex_images[v], b.vertex_images[v]) for v in K.vertices)


def test_hulls_intersect():
    sq = np.array([[0, 0], [1, 0], [0, 1]], float)
    assert hulls_intersect(sq, np.array([[0.2, 0.2]]))
    assert not hulls_intersect(sq, np.array([[1, 1], [2, 2]], float))
