import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fomatch.errors import CapacityOutOfRange, MismatchedOutcome, ZeroOpt
from fomatch.instance import instance_from_deadlines, opt_fractional_general, random_instance
from fomatch.waterfill import (
    WF_RATIO, achieved_ratio, bottleneck_bound, bottleneck_square, certify_duals, linear_gain,
    pour, run_waterfill, waterfill_steps,
)

from oracles import discretized_pour

SQRT2 = math.sqrt(2.0)


def test_linear_gain_values():
    g = linear_gain()
    assert float(g.g(0.0)) == pytest.approx(1 - SQRT2 / 2, abs=1e-15)
    assert float(g.g(1.0)) == pytest.approx(1.0, abs=1e-15)
    assert float(g.G(1.0)) == pytest.approx(1 - SQRT2 / 4, abs=1e-15)


def test_antiderivative_matches_quadrature():
    g = linear_gain()
    grid = np.linspace(0, 1, 21)
    for a in grid:
        for b in grid[grid >= a]:
            ref = quad(lambda x: float(g.g(x)), a, b, epsabs=1e-13)[0]
            assert g.integral(a, b) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("levels,cap,expect", [
    ([0.2, 0.5], 1.0, [0.85, 0.85]),
    ([0.0, 0.0], 1.0, [0.5, 0.5]),
    ([0.9, 0.95], 1.0, [1.0, 1.0]),
    ([0.1, 0.7, 0.3], 0.3, [0.35, 0.7, 0.35]),
])
def test_pour_examples(levels, cap, expect):
    new = np.array(levels, dtype=float)
    for pos, old, level in pour(levels, cap):
        assert old == levels[pos]
        new[pos] = level
    assert new == pytest.approx(expect, abs=1e-12)


def test_pour_saturation_total():
    moved = sum(new - old for _, old, new in pour([0.9, 0.95], 1.0))
    assert moved == pytest.approx(0.15, abs=1e-12)


def test_pour_rejects_bad_capacity():
    with pytest.raises(CapacityOutOfRange):
        pour([0.1], 1.5)
    with pytest.raises(CapacityOutOfRange):
        pour([0.1], -0.1)


@settings(max_examples=200, deadline=None)
@given(levels=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), cap=st.floats(0.0, 1.0))
def test_pour_conserves_and_equalizes(levels, cap):
    lv = np.array(levels)
    moves = pour(lv, cap)
    moved = sum(new - old for _, old, new in moves)
    assert moved == pytest.approx(min(cap, float((1 - lv).sum())), abs=1e-9)
    finals = {new for _, _, new in moves}
    assert len(finals) <= 1
    if moves:
        w = finals.pop()
        raised = {p for p, _, _ in moves}
        # everything left alone sits at or above the waterline
        assert all(lv[i] >= w - 1e-12 for i in range(len(lv)) if i not in raised)


def test_pour_matches_discretized_reference(rng):
    for _ in range(50):
        lv = rng.random(int(rng.integers(1, 6)))
        cap = float(rng.random())
        new = lv.copy()
        for pos, _, level in pour(lv, cap):
            new[pos] = level
        assert np.abs(new - discretized_pour(lv, cap, 1e-6)).max() < 1e-4


def test_single_edge_run():
    inst = instance_from_deadlines(2, [(0, 1)], [0, 1], [0, 1])
    out = run_waterfill(inst)
    assert out.x_edge.tolist() == [1.0]
    assert out.p.tolist() == [0.0, 1.0]
    assert out.alpha == pytest.approx([SQRT2 / 4, 1 - SQRT2 / 4], abs=1e-15)
    rep = certify_duals(out, inst)
    assert rep.passed and rep.min_edge_sum == pytest.approx(1.0)
    assert achieved_ratio(out, inst) == 1.0


def test_star_splits_evenly():
    inst = instance_from_deadlines(3, [(0, 1), (0, 2)], [0, 1, 2])
    out = run_waterfill(inst)
    assert out.x_edge.tolist() == [0.5, 0.5]
    assert out.x[0] == 1.0


def test_empty_instance():
    inst = instance_from_deadlines(3, [], [0, 1, 2])
    out = run_waterfill(inst)
    assert not out.x.any() and not out.alpha.any()
    with pytest.raises(ZeroOpt):
        achieved_ratio(out, inst)


def test_triangle_ratio_at_most_one():
    inst = instance_from_deadlines(3, [(0, 1), (1, 2), (0, 2)], [0, 1, 2])
    out = run_waterfill(inst)
    assert opt_fractional_general(inst).value == 1.5
    assert 0 < achieved_ratio(out, inst) <= 1.0


def test_certify_rejects_foreign_outcome():
    a = instance_from_deadlines(2, [(0, 1)], [0, 1])
    b = instance_from_deadlines(3, [(0, 1)], [0, 1, 2])
    with pytest.raises(MismatchedOutcome):
        certify_duals(run_waterfill(a), b)


def test_certificate_json():
    inst = instance_from_deadlines(2, [(0, 1)], [0, 1])
    doc = json.loads(certify_duals(run_waterfill(inst), inst).to_json())
    assert set(doc) == {"min_edge_sum", "objective_gap", "ratio", "pass", "violations"}


def test_outcome_csv_sections():
    inst = instance_from_deadlines(3, [(0, 1), (0, 2)], [0, 1, 2])
    lines = run_waterfill(inst).to_csv().splitlines()
    assert lines[0] == "vertex,x,p,alpha"
    assert lines[4] == "edge,u,v,x_uv"
    assert len(lines) == 1 + 3 + 1 + 2


def test_run_invariants(rng):
    gain = linear_gain()
    for _ in range(100):
        inst = random_instance(int(rng.integers(1, 13)), float(rng.uniform(0.2, 0.9)), rng,
                               bipartite=bool(rng.integers(2)))
        prev = np.zeros(inst.n)
        for u, out in waterfill_steps(inst, gain):
            assert (out.x >= prev - 1e-15).all()  # levels never drop
            prev = out.x.copy()
            assert abs(out.x_edge.sum() - out.alpha.sum()) <= 1e-12
            avail = [w for w in inst.neighbors(u) if inst.deadline[w] > inst.deadline[u]]
            assert out.x[u] >= 1 - 1e-12 or all(out.x[w] >= 1 - 1e-12 for w in avail)
        load = np.zeros(inst.n)
        np.add.at(load, inst.edges[:, 0], out.x_edge)
        np.add.at(load, inst.edges[:, 1], out.x_edge)
        assert load == pytest.approx(out.x, abs=1e-12)
        assert (out.x <= 1 + 1e-12).all() and (out.x_edge >= 0).all()
        assert (out.p <= out.x + 1e-15).all()
        assert certify_duals(out, inst).passed


def test_bottleneck_completed_square():
    p, x = np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 1, 101))
    assert np.abs(bottleneck_bound(p, x) - bottleneck_square(p, x)).max() < 1e-10
    assert bottleneck_square(p, x).min() >= WF_RATIO - 1e-15
