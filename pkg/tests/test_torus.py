import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _builders import predicate_cover
from mdimlab.covers import mesh, order_profile
from mdimlab.errors import AuditError
from mdimlab.systems import make_rotation
from mdimlab.torus import (
    SlabSpace,
    arc_cover,
    build_shift_chain,
    build_torus,
    lift_cover,
    slab_grid_cover,
    torus_audit_sample,
    torus_box_cover,
)

ROT = make_rotation("sqrt(2)-1")
TS = build_torus(ROT)


def slab_samples(n, seed):
    rng = np.random.default_rng(seed)
    x = ROT.sample(n, seed)
    t = rng.random(n)
    t[: n // 4] = 0.0
    t[n // 4 : n // 2] = 1.0
    return np.column_stack([x, t])


def test_normalize_moves_integer_part_into_base():
    x = ROT.from_angles([0.2])
    p = TS.normalize(np.column_stack([x, [1.0]]))
    want = ROT.act(x, 1)
    assert ROT.dist(p[:, :-1], want)[0] == 0.0
    assert p[0, -1] == 0.0


def test_projection_and_real_action():
    x = ROT.from_angles([0.2])
    assert TS.pi(TS.embed(x, 0.25))[0] == 0.25
    p = TS.act_real(TS.embed(x, 0.0), 2.5)
    assert ROT.dist(p[:, :-1], ROT.act(x, 2))[0] < 1e-12
    assert abs(p[0, -1] - 0.5) < 1e-12


def test_glued_representatives_are_at_distance_zero():
    x = ROT.sample(20, 3)
    t = np.linspace(0.05, 0.95, 20)
    a = np.column_stack([x, t])
    b = np.column_stack([ROT.act(x, 1), t - 1.0])
    assert np.allclose(np.diag(TS._raw_pairwise(a, b)), 0.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_real_action_is_additive(r, s, seed):
    p = TS.sample(1, seed)
    one = TS.act_real(TS.act_real(p, r), s)
    two = TS.act_real(p, r + s)
    assert TS.dist(one, two)[0] < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(-5, 5), st.integers(0, 1000))
def test_real_action_extends_integer_action(z, seed):
    p = TS.sample(1, seed)
    assert TS.dist(TS.act_real(p, float(z)), TS.act(p, z))[0] < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4), st.integers(0, 1000))
def test_projection_is_equivariant(r, seed):
    p = TS.sample(1, seed)
    lhs = TS.pi(TS.act_real(p, r))[0]
    rhs = (TS.pi(p)[0] + r) % 1.0
    assert min(abs(lhs - rhs), 1 - abs(lhs - rhs)) < 1e-9


def test_lift_of_whole_slab_has_order_one():
    S = slab_samples(200, 0)
    B = predicate_cover(SlabSpace(ROT), [lambda s: np.ones(len(s), bool)], S)
    C, rep = lift_cover(B, TS, torus_audit_sample(TS, 400, 0))
    assert rep["ord_B"] == 1 and rep["ord_C"] == 1
    assert rep["uncovered"] == 0


def test_lift_of_grid_cover_respects_order_bounds():
    S = slab_samples(600, 1)
    base = arc_cover(ROT, 3, 0.02, S[:, :-1])
    B = slab_grid_cover(base, [(0.0, 0.6), (0.4, 1.0)], S)
    T = torus_audit_sample(TS, 2000, 1)
    C, rep = lift_cover(B, TS, T)
    assert rep["ord_B"] <= 4
    assert rep["ord_C"] <= 2 * rep["ord_B"] <= 8
    assert rep["ord_C_off_X"] <= rep["ord_B"]
    # brute force: preimages of each torus sample in the slab
    x, t = TS.split(T)
    counts = order_profile(B, np.column_stack([x, t]))[1].copy()
    on_x = t == 0.0
    pre = np.column_stack([ROT.act(x[on_x], -1), np.ones(on_x.sum())])
    inc_a = B.incidence(np.column_stack([x[on_x], t[on_x]]))
    inc_b = B.incidence(pre)
    counts[on_x] = (inc_a | inc_b).sum(axis=0)
    assert int(counts.max()) == rep["ord_C"]


def test_points_off_x_have_single_preimage():
    S = slab_samples(300, 2)
    base = arc_cover(ROT, 4, 0.02, S[:, :-1])
    B = slab_grid_cover(base, [(0.0, 1.0)], S)
    half = TS.embed(ROT.sample(300, 5), 0.5)
    C, rep = lift_cover(B, TS, half)
    assert rep["ord_C"] <= rep["ord_B"]


def test_shift_chain_with_one_step_is_the_cover():
    T = torus_audit_sample(TS, 300, 0)
    C = torus_box_cover(TS, 24, 16, 0.002, T)
    D, rep = build_shift_chain(C, TS, 1, 0.5, 0.5, rgrid=16)
    assert len(D.regions) == len(C.regions)
    assert np.array_equal(D.sample_incidence, C.sample_incidence)
    assert rep["meshes"][0][1] <= mesh(C) + 1e-12


def test_shift_chain_mesh_under_translates():
    T = torus_audit_sample(TS, 600, 0)
    C = torus_box_cover(TS, 24, 16, 0.002, T)
    D, rep = build_shift_chain(C, TS, 4, 0.5, 0.2, rgrid=32)
    assert rep["window"] == 32 and rep["step"] == 8
    assert [z for z, _ in rep["meshes"]] == list(range(32))
    assert rep["passed"] and rep["max_mesh"] < 0.2


def test_shift_chain_rejects_coarse_cover():
    T = torus_audit_sample(TS, 300, 0)
    C = torus_box_cover(TS, 3, 2, 0.01, T)
    with pytest.raises(AuditError) as err:
        build_shift_chain(C, TS, 4, 0.5, 0.2, rgrid=16)
    assert err.value.report["operation"] == "build_shift_chain"


def test_shift_chain_argument_checks():
    T = torus_audit_sample(TS, 100, 0)
    C = torus_box_cover(TS, 24, 16, 0.002, T)
    with pytest.raises(ValueError):
        build_shift_chain(C, TS, 0, 0.5, 0.2)
    with pytest.raises(ValueError):
        build_shift_chain(C, TS, 2, 0.0, 0.2)
