import math

import numpy as np
import pytest
from scipy.special import lambertw

from fomatch.errors import SizeOverflow
from fomatch.instance import opt_bipartite
from fomatch.ranking import omega_constant, run_ranking
from fomatch.ranking_hardness import (
    bulk_layers, gen_ranking_hard_instance, hard_instance_ratio, omega_fixed_point,
    simulate_layers, u_id, v_id,
)


def test_fixed_point():
    x = omega_fixed_point()
    assert abs(x - math.exp(-x)) < 1e-14
    assert abs(x - omega_constant()) < 1e-12
    assert x == pytest.approx(float(lambertw(1).real), abs=1e-15)


def test_instance_shape():
    h = gen_ranking_hard_instance(4, 2)
    inst = h.instance
    assert inst.n == 16
    assert inst.m == 2 * 4 + 16
    assert opt_bipartite(inst).value == h.opt == 8
    for t in (1, 2):
        for i in range(1, 5):
            v = v_id(4, 2, t, i)
            assert inst.neighbors(v).tolist() == [u_id(4, t, i)]
            assert inst.deadline[u_id(4, t, i)] < inst.deadline[v]
    us = [u_id(4, t, i) for t in (1, 2) for i in range(1, 5)]
    assert np.all(np.diff(inst.deadline[us]) > 0)
    assert (inst.deadline[8:] > inst.deadline[:8].max()).all()


def test_matching_edges_are_perfect():
    h = gen_ranking_hard_instance(3, 4)
    pairs = h.matching_edges()
    assert len(pairs) == 12
    idx = h.instance.edge_index()
    assert all(p in idx for p in pairs)


def test_size_limit():
    with pytest.raises(SizeOverflow):
        gen_ranking_hard_instance(100, 100, max_edges=10_000)


def test_simulator_matches_generic_ranking():
    rng = np.random.default_rng(8)
    for _ in range(200):
        k, m = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        inst = gen_ranking_hard_instance(k, m).instance
        ur, vr = rng.random((1, m, k)), rng.random((1, m, k))
        counts = simulate_layers(ur, vr)
        out = run_ranking(inst, np.concatenate([ur.ravel(), vr.ravel()]))
        active = np.bincount([a // k for a, _ in out.matches], minlength=m)
        passive = np.bincount([v // k for v in range(k * m) if out.status[v].kind == "passive"], minlength=m)
        assert active.tolist() == counts.active[0].tolist()
        assert passive.tolist() == counts.passive[0].tolist()


def test_bulk_layers():
    assert bulk_layers(8).tolist() == [1, 2, 3, 4, 5]
    assert bulk_layers(1).tolist() == [0]


def test_single_group_ratio_one():
    r = hard_instance_ratio(1, 1, 50, 0)
    assert r.bulk == (1.0, 0.0) and r.overall == (1.0, 0.0)


def test_seeded_reproducibility():
    assert hard_instance_ratio(5, 8, 300, 4) == hard_instance_ratio(5, 8, 300, 4)


def test_convergence_trend():
    om = omega_constant()
    means = [hard_instance_ratio(k, 800 // k, 1000, 2).bulk.mean for k in (5, 10, 20, 40)]
    assert all(a > b for a, b in zip(means, means[1:]))
    assert means[-1] - om < 0.01
