import numpy as np
import pytest

from fomatch.errors import NonContraction, ParseError, QuadratureFailure, SizeOverflow
from fomatch.instance import opt_bipartite
from fomatch.special import C, eval_h, eval_tau
from fomatch.waterfill import WF_RATIO, run_waterfill
from fomatch import wf_hardness as wf
from fomatch.wf_hardness import (
    emit_edge_arrival_trace, gen_generalized_hard_instance, gen_wf_hard_instance, h_counts,
    load_trace, random_relabel, run_hard_instance, stationary_profile, transition_matrix,
    verify_lemma3, wf_u, wf_v,
)


def test_k4_m1_is_upper_triangle():
    k = 4
    inst = gen_wf_hard_instance(k, 1)
    expect = {(wf_u(k, 1, i), wf_v(k, 1, 1, j)) for i in range(1, 5) for j in range(i, 5)}
    assert {tuple(e) for e in inst.edges.tolist()} == expect


def test_first_vertex_sees_whole_next_layer():
    k = 4
    inst = gen_wf_hard_instance(k, 2)
    nb = set(inst.neighbors(wf_u(k, 1, 1)).tolist())
    assert {wf_u(k, 2, j) for j in range(1, k + 1)} <= nb
    assert h_counts(k)[0] == k


def test_h_counts_follow_floor_rule():
    k = 50
    direct = [int(np.floor(k * eval_h((i - 1) / k) + 1e-9)) for i in range(1, k + 1)]
    assert h_counts(k).tolist() == direct


@pytest.mark.parametrize("k,m", [(1, 1), (3, 2), (6, 4), (10, 3)])
def test_hard_instance_opt(k, m):
    inst = gen_wf_hard_instance(k, m)
    assert inst.n == 2 * k * m
    assert opt_bipartite(inst).value == k * m


def test_size_limit():
    with pytest.raises(SizeOverflow):
        gen_wf_hard_instance(100, 100, max_edges=1000)
    with pytest.raises(SizeOverflow):
        gen_generalized_hard_instance(3, 3, 50, max_vertices=100)


@pytest.mark.parametrize("k", [10, 100, 1000])
def test_stationary_profile(k):
    prof = stationary_profile(k)
    assert prof.row_sums.max() < 1
    p = prof.p_star
    assert np.abs(p - prof.M @ (1 - p)).max() < 1e-10
    assert (p >= 0).all() and (p < 1).all()


def test_stationary_ratio_decreases_toward_target():
    r10, r1000 = stationary_profile(10).ratio_k, stationary_profile(1000).ratio_k
    assert r1000 < r10
    assert abs(r1000 - WF_RATIO) < 0.01


def test_profile_tracks_tau():
    errs = []
    for k in (10, 100, 1000):
        j = np.arange(1, k + 1)
        errs.append(np.abs(stationary_profile(k).p_star - eval_tau(j / k)).max())
    assert errs[0] > errs[1] > errs[2]


def test_profile_matches_graph_simulation():
    # mid-instance passive levels of the actual graph run converge to the fixed point
    k = 10
    run = run_hard_instance(k, 200)
    assert np.abs(run.passive[100] - stationary_profile(k).p_star).max() < 1e-9


def test_matrix_pattern_matches_graph():
    # column j of row i is nonzero iff u_{t+1,i} is reachable from u_{t,j} by an h-edge
    k = 12
    _, M = transition_matrix(k)
    counts = h_counts(k)
    graph = np.array([[i <= counts[j - 1] for j in range(1, k + 1)] for i in range(1, k + 1)])
    assert np.array_equal(M > 0, graph)


def test_noncontraction_detected(monkeypatch):
    monkeypatch.setattr(wf, "transition_matrix", lambda k: (np.ones(k), np.ones((k, k))))
    with pytest.raises(NonContraction):
        wf.stationary_profile(5)


def test_small_instance_has_slack():
    assert run_hard_instance(5, 5).ratio > WF_RATIO


def test_large_instance_fills_early_vertices(wf_hard_200):
    assert wf_hard_200.full_after_deadline
    assert wf_hard_200.max_passive_u < 1


def test_waterline_pairing(wf_hard_200):
    # p_u + x_v sits near c in the bulk; the band is widest at the first and last positions
    k = 200
    s = (wf_hard_200.passive + wf_hard_200.partner_level)[50:150] - C
    interior = s[:, k // 20: k - k // 20]
    assert np.abs(interior).max() < 0.02
    small = run_hard_instance(100, 100)
    s100 = (small.passive + small.partner_level)[25:75] - C
    assert np.abs(s).max() < np.abs(s100).max()


def test_lemma3_reports():
    reports = verify_lemma3()
    assert [r.identity for r in reports] == ["flow-integral", "tau-integral", "inflow-below-one"]
    assert all(r.passed for r in reports)
    assert 0.8 < reports[2].value < 1
    assert set(reports[0].to_dict()) == {"identity", "grid", "max_residual", "pass"}
    with pytest.raises(ValueError):
        verify_lemma3(grid_size=10)


def test_flow_identity_at_zero():
    assert C - eval_tau(0.0) == 0.0


def test_quadrature_failure_is_reported():
    with pytest.raises(QuadratureFailure):
        wf._quad(lambda x: 1.0 / x, 0.0, 1.0)


def test_relabel():
    inst = gen_wf_hard_instance(6, 3)
    a, pa = random_relabel(inst, 7)
    b, pb = random_relabel(inst, 7)
    assert a == b and np.array_equal(pa, pb)
    assert not np.array_equal(pa, np.arange(inst.n))
    assert opt_bipartite(a).value == 18
    assert run_waterfill(a).value == pytest.approx(run_waterfill(inst).value, abs=1e-12)
    # the relabeling is an isomorphism
    mapped = {tuple(sorted((int(pa[u]), int(pa[v])))) for u, v in inst.edges.tolist()}
    assert mapped == {tuple(e) for e in a.edges.tolist()}


def test_trace_single_edge():
    inst = gen_wf_hard_instance(1, 1)
    n, rows = load_trace(emit_edge_arrival_trace(inst))
    assert n == 2 and [r for r in rows if r[0] == "E"] == [("E", 0, 1)]


def test_trace_order_and_count():
    inst = gen_wf_hard_instance(2, 1)
    _, rows = load_trace(emit_edge_arrival_trace(inst, seed=3))
    edges = [r for r in rows if r[0] == "E"]
    assert len(edges) == inst.m == 3
    assert [r[1] for r in edges] == [0, 0, 1]
    big = gen_wf_hard_instance(5, 3)
    assert sum(1 for r in load_trace(emit_edge_arrival_trace(big))[1] if r[0] == "E") == big.m


def test_trace_parse_error():
    with pytest.raises(ParseError):
        load_trace("eat 1 2 1\nX 0\n")


@pytest.mark.parametrize("k,m,L", [(3, 3, 50), (2, 3, 20), (4, 2, 10)])
def test_generalized_instance(k, m, L):
    g = gen_generalized_hard_instance(k, m, L)
    assert g.check_indistinguishability() == []
    assert g.check_deadline_order() == []
    assert g.dummy_count <= g.dummy_budget
    # every real copy carries its own perfect matching u_{t,i,l} -- v_{t,i,l}
    assert opt_bipartite(g.instance).value >= k * m * L


def test_generalized_full_scope_is_stricter():
    g = gen_generalized_hard_instance(3, 3, 50)
    assert len(g.check_indistinguishability("full")) >= len(g.check_indistinguishability("layer"))
    with pytest.raises(ValueError):
        g.check_indistinguishability("other")
