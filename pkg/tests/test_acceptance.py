"""Acceptance criteria 1-10, one test per criterion.

Each test asserts its property at the stated tolerance and its runtime
budget; ``conftest.py`` prints one pass/fail line per criterion.
"""
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from _builders import LINE, cylinder_cover, line_xi, synthetic_marking
from mdimlab.cli import main
from mdimlab.covers import join_with_shifts, mesh_under_translates
from mdimlab.fiber import (
    cosine_observable,
    delta_bound,
    delta_star,
    fiber_multiplicity,
    gamma_bound,
    marking_report,
    weighted_sum_observable,
)
from mdimlab.intervals import build_interval_system
from mdimlab.kolmogorov import exact_grid_audit, ko_audit, kolmogorov_ostrand_cover
from mdimlab.levelfn import eval_level_function, level_report, make_level_function
from mdimlab.pipeline import fiber_pipeline
from mdimlab.systems import make_rotation, make_sturmian
from mdimlab.torus import (
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


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


@pytest.fixture(scope="module")
def pipeline_run():
    timings = {}
    t0 = time.perf_counter()
    report = fiber_pipeline(timings=timings)
    return report, timings, time.perf_counter() - t0


@pytest.mark.criterion(1, "Kolmogorov multiplicity m-n+1, exact family disjointness, mesh < eps")
def test_criterion_1_kolmogorov_multiplicity():
    eps = Fraction(1, 4)
    with Budget(10):
        for n, m in [(1, 2), (1, 4), (2, 3), (2, 5), (3, 4)]:
            box = [["-1/3", "5/7"]] * n
            _, audit = exact_grid_audit(n, m, eps, box)
            assert audit["grid_points"] >= 10_000
            assert audit["min_multiplicity"] >= m - n + 1
            assert audit["max_cubes_per_family"] == 1
            assert Fraction(audit["cube_diameter"]) < eps


@pytest.mark.criterion(2, "Kolmogorov-Ostrand cover of three arcs refines and covers m times")
def test_criterion_2_kolmogorov_ostrand():
    with Budget(60):
        pts = ROT.sample(2000, 0)
        U = arc_cover(ROT, 3, 0.03, pts)
        u_hits = [set(r.hits.tolist()) for r in U.regions]
        for m in (3, 5):
            F = kolmogorov_ostrand_cover(ROT, U, 1, m, pts, 0)
            audit = ko_audit(F, U)
            assert all(any(set(r.hits.tolist()) <= h for h in u_hits) for r in F.regions)
            assert audit["refines_U"] and audit["family_disjoint"]
            assert audit["required_multiplicity"] == m
            assert audit["fraction_at_required"] >= 0.99, audit["below_required"]


def coset_meets(E, ts):
    """Families containing some ``t + z``: ``[lo - t, hi - t]`` holds an integer."""
    met = np.zeros((len(ts), E.q), dtype=bool)
    for p, fam in enumerate(E.families):
        for lo, hi in fam:
            met[:, p] |= np.floor(hi - ts) >= np.ceil(lo - ts)
    return met.sum(axis=1)


@pytest.mark.criterion(3, "every coset meets q-2 interval families")
def test_criterion_3_interval_families():
    ts = np.arange(10_000) / 10_000
    with Budget(30):
        for q in (3, 5, 8):
            for bound in (0.2, 0.05):
                E = build_interval_system(q, bound, seed=0, audit_grid=10_000)
                assert E.sigma_lower > 0
                assert E.mesh <= bound
                assert E.report["min_count_met"] >= q - 2
                assert coset_meets(E, ts).min() >= q - 2


def markov_expectation(lf, state, cap=10_000):
    phis = []
    for j in range(cap):
        phis.append(float(lf.phi(lf.sys.act(state, -j))[0]))
        if phis[-1] == 0.0:
            break
    n = len(phis)
    Q = np.diag(phis[:-1], k=1)
    return float(np.linalg.solve(np.eye(n) - Q, np.eye(n))[0] @ np.array(phis))


@pytest.mark.criterion(4, "level-function recursion, translation identity and Markov oracle")
def test_criterion_4_level_function():
    with Budget(60):
        samples = ROT.sample(500, 0)
        lf = make_level_function(ROT, ROT.from_angles([0.3]), 0.05, samples=samples)
        rep = level_report(lf, 10, samples)
        assert rep["recursion_residual"] <= 1e-6
        assert rep["translation_residual"] <= 1e-6
        assert rep["translation_residual_segmentwise"] <= 1e-6
        assert rep["segmentwise_pairs"] > 0
        print(f"literal translation set: {rep['checked_count']} points, segment-wise pairs: {rep['segmentwise_pairs']}")
        pts = ROT.sample(20, 11)
        vals = eval_level_function(lf, pts)[0]
        oracle = np.array([markov_expectation(lf, p[None, :]) for p in pts])
        assert np.abs(vals - oracle).max() <= 1e-8


def slab_points(n, seed):
    rng = np.random.default_rng(seed)
    t = rng.random(n)
    t[: n // 5] = 0.0
    t[n // 5 : 2 * n // 5] = 1.0
    return np.column_stack([ROT.sample(n, seed), t])


@pytest.mark.criterion(5, "lifted cover order <= 2 ord B, off X <= ord B")
def test_criterion_5_torus_order():
    with Budget(30):
        S = slab_points(4000, 1)
        T = torus_audit_sample(TS, 5000, 2)
        base = arc_cover(ROT, 5, 0.02, S[:, :-1])
        for rows, want in (([(0.0, 1.0)], 2), ([(0.0, 0.6), (0.4, 1.0)], 4)):
            B = slab_grid_cover(base, rows, S)
            C, rep = lift_cover(B, TS, T)
            assert rep["ord_B"] == want
            assert rep["samples"] == 5000
            assert rep["ord_C"] <= 2 * rep["ord_B"]
            assert rep["ord_C_off_X"] <= rep["ord_B"]
            # exact count through the slab preimages
            x, t = TS.split(T)
            inc = B.incidence(np.column_stack([x, t]))
            on_x = t == 0.0
            inc[:, on_x] |= B.incidence(np.column_stack([ROT.act(x[on_x], -1), np.ones(on_x.sum())]))
            counts = inc.sum(axis=0)
            assert int(counts.max()) == rep["ord_C"]
            assert int(counts[~on_x].max()) == rep["ord_C_off_X"]


@pytest.mark.criterion(6, "shift chain mesh < eps over the full window; join window on X")
def test_criterion_6_shift_chain():
    with Budget(60):
        T = torus_audit_sample(TS, 600, 0)
        C = torus_box_cover(TS, 24, 16, 0.002, T)
        D, rep = build_shift_chain(C, TS, 4, 0.5, 0.2, rgrid=64)
        window = math.floor(4 / 0.5) * 4
        assert rep["window"] == window
        assert [z for z, _ in rep["meshes"]] == list(range(window))
        assert rep["passed"]
        # independent diameters of every translate
        for z in range(window):
            worst = 0.0
            for r in D.regions:
                pts = TS.act(D.region_points(r), z)
                if len(pts) > 1:
                    worst = max(worst, float(TS.pairwise(pts, pts).max()))
            assert worst < 0.2
        # join of three covers on X: A_0 v (A_1 - m) v (A_2 - 2m) stays fine for 0 <= z < 3m
        sturm = make_sturmian("sqrt(2)-1", 20)
        R, m = 4, 3
        eps = 2.0 ** -(R - m + 1)
        pts = sturm.sample(3000, 5)
        covers = [cylinder_cover(sturm, R, pts) for _ in range(3)]
        for c in covers:
            assert all(v < eps for _, v in mesh_under_translates(c, sturm, m - 1))
        B = join_with_shifts(covers, sturm, m, pts)
        for z in range(3 * m):
            for r in B.regions:
                q = sturm.act(B.region_points(r), z)
                if len(q) > 1:
                    assert sturm.pairwise(q, q).max() < eps


@pytest.mark.criterion(7, "marking count: exact per window on the fixture, global bound end to end")
def test_criterion_7_marking(pipeline_run):
    with Budget(120):
        params, D = synthetic_marking(2, 5, 4, 1.0)
        xs = np.array([[0.5], [2.25], [-13.75], [7.9]])
        rep = marking_report(xs, D, params, LINE, line_xi)
        want = params.m - params.n - 2 * params.k
        assert all(c == want for counts in rep.window_counts.values() for c in counts)
        assert all(rep.window_counts.values())
    report, _, elapsed = pipeline_run
    assert elapsed < 120
    mk = report["marking"]
    k, q, l, n, d = 2, 5, 40, 4, report["params"]["d"]
    m = q * k
    assert (report["params"]["k"], report["params"]["q"], report["params"]["l"], report["params"]["n"]) == (k, q, l, n)
    assert mk["points"] > 0
    assert mk["marking_min"] >= (l / q - 3) * (m - n - 2 * k)
    assert all(row["S_x"] >= mk["global_bound"] for row in report["marking_rows"])
    r = k / (k - d)
    assert abs(mk["Delta"] - (1 - 3 * q / l) * (1 - 2 * r / q)) <= 1e-12
    assert abs(mk["Delta_star"] - (1 - 6 * r / q)) <= 1e-12
    assert mk["S_size"] == l * k
    assert mk["S_star_size"] == k * (q - 2)


@pytest.mark.criterion(8, "collapsed map: constant on groups, delta-close, separated")
def test_criterion_8_psi(pipeline_run):
    report, timings, _ = pipeline_run
    audit = report["psi"]
    assert timings["psi"] < 30
    assert audit["constant_on_groups"]
    assert audit["delta_close"] and audit["max_deviation"] <= audit["delta"]
    assert audit["distinct_values"]
    assert audit["separation_sound"]
    assert audit["passed"]


@pytest.mark.criterion(9, "fiber multiplicity 1 = floor(gamma) for d = 0; gamma regression")
def test_criterion_9_fiber_multiplicity():
    assert (gamma_bound(1, 0), gamma_bound(2, 1), gamma_bound(3, 1)) == (1.0, 4.0, 1.5)
    eps = 0.01
    with Budget(120):
        X = ROT.sample(2000, 0)
        mult, _ = fiber_multiplicity(ROT, cosine_observable(ROT, 1, amplitude=0.5, center=0.5), 64, 3 * eps, 1e-9, X)
        assert mult == 1 == math.floor(gamma_bound(1, 0))
        sturm = make_sturmian("sqrt(2)-1", 16)
        Y = sturm.sample(2000, 0)
        mult, _ = fiber_multiplicity(sturm, weighted_sum_observable(sturm), 64, 3 * eps, 1e-9, Y)
        assert mult == 1


DETERMINISM_CONFIGS = {
    "kolmogorov": {"n": 2, "m": 3, "eps": "1/4"},
    "intervals": {"q": 5, "mesh_bound": 0.05},
    "levelfn": {},
    "torus-chain": {},
    "fiber-check": {"samples": 500},
    "full-pipeline": {"torus_samples": 600, "x_samples": 700, "marking_points": 30, "fiber_samples": 150},
}


@pytest.mark.criterion(10, "identical config and seed give byte-identical reports")
def test_criterion_10_determinism(tmp_path):
    for command, cfg in DETERMINISM_CONFIGS.items():
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(dict(cfg, seed=3)))
        outputs = []
        for run in range(2):
            for fmt in ("json", "csv"):
                out = tmp_path / f"run{run}"
                assert main([command, "--config", str(path), "--out", str(out), "--format", fmt]) == 0
            outputs.append(((out / f"{command}.json").read_bytes(), (out / f"{command}.csv").read_bytes()))
        assert outputs[0] == outputs[1], command
