"""Named numerical checks run by ``fomatch verify``.

Each check returns a :class:`Check` with the worst residual (or slack) it
saw and the tolerance it was judged against.  Sizes are kept small enough
that the whole suite finishes in well under a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .instance import random_instance
from .ranking import (
    RankingGain, check_fact1, check_lemma1_monotonicity, check_lemma5, check_lemma6,
    draw_ranks, expected_edge_gain, fact1_average, lemma7_minimum, omega_constant,
)
from .ranking_hardness import omega_fixed_point
from .special import C, SQRT2, eval_f, eval_h
from .waterfill import certify_duals, linear_gain, run_waterfill
from .wf_hardness import (
    gen_generalized_hard_instance, gen_wf_hard_instance, involution_residual,
    stationary_profile, verify_f_ode, verify_lemma3,
)


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.name, "residual": self.residual, "tolerance": self.tolerance,
                "pass": self.passed, **self.detail}


def _within(name, residual, tol, **detail) -> Check:
    return Check(name, float(residual), tol, bool(residual <= tol), detail)


def _oriented_edges(inst):
    dl = inst.deadline
    return [(a, b) if dl[a] < dl[b] else (b, a) for a, b in inst.edges.tolist()]


def _small_bipartite(seed: int, count: int, max_n: int = 8):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(2, max_n + 1))
        inst = random_instance(n, 0.5, rng)
        if inst.m:
            out.append((inst, draw_ranks(n, rng)))
    return out


def check_lemma3(tol=1e-6, **_) -> Check:
    reports = verify_lemma3(tol=tol)
    worst = max(r.max_residual for r in reports[:2])
    inflow = reports[2].value
    return Check("lemma3", worst, tol, worst < tol and inflow < 1.0,
                 {"inflow_integral": inflow, "parts": [r.to_dict() for r in reports]})


def check_f_ode(tol=1e-8, **_) -> Check:
    r = verify_f_ode(tol=tol)
    return _within("f-ode", r.max_residual, tol, grid=r.grid)


def check_special_values(tol=1e-12, **_) -> Check:
    G = linear_gain().G
    res = {
        "f(0)-1": abs(eval_f(0.0) - 1.0),
        "f(c)": abs(eval_f(C)),
        "G(1)-(1-sqrt2/4)": abs(float(G(1.0)) - (1.0 - SQRT2 / 4.0)),
    }
    h_res = max(abs(eval_h(0.0) - 1.0), abs(eval_h(1.0)))
    inv = involution_residual()
    ok = max(res.values()) <= tol and h_res <= 1e-10 and inv <= 1e-9
    return Check("special-values", max(res.values()), tol, ok,
                 {**res, "h-endpoints": h_res, "involution": inv})


def check_dual_cert(tol=1e-9, instances=200, seed=0, **_) -> Check:
    rng = np.random.default_rng(seed)
    gain = linear_gain()
    worst_gap, min_sum, failures = 0.0, math.inf, 0
    cases = [random_instance(int(rng.integers(1, 13)), float(rng.uniform(0.2, 0.8)), rng,
                             bipartite=bool(i % 2 == 0)) for i in range(instances)]
    cases.append(gen_wf_hard_instance(20, 20))
    for inst in cases:
        rep = certify_duals(run_waterfill(inst, gain, keep_log=False), inst, tol=tol)
        worst_gap = max(worst_gap, rep.objective_gap)
        min_sum = min(min_sum, rep.min_edge_sum)
        failures += not rep.passed
    return Check("dual-cert", worst_gap, tol, failures == 0,
                 {"min_edge_sum": min_sum, "target": 2.0 - SQRT2, "instances": len(cases)})


def check_stationary(tol=0.01, k=1000, **_) -> Check:
    prof = stationary_profile(k)
    return _within("stationary", abs(prof.ratio_k - (2.0 - SQRT2)), tol, k=k, ratio_k=prof.ratio_k)


def check_omega(tol=1e-12, **_) -> Check:
    om = omega_constant()
    c = 1.0 / (1.0 + math.exp(om))
    res = {
        "omega*e^omega-1": abs(om * math.exp(om) - 1.0),
        "fixed-point": abs(omega_fixed_point() - om),
        "c-c*ln(c/(1-c))-omega": abs(c - c * math.log(c / (1.0 - c)) - om),
    }
    return _within("omega", max(res.values()), tol, omega=om, **res)


def check_lemma1(cases=5000, seed=0, **_) -> Check:
    rng = np.random.default_rng(seed)
    violations, done = 0, 0
    while done < cases:
        n = int(rng.integers(2, 9))
        inst = random_instance(n, 0.5, rng)
        for _ in range(20):
            y = draw_ranks(n, rng)
            u = int(rng.integers(n))
            violations += len(check_lemma1_monotonicity(inst, y, u).violations)
            done += 1
    return Check("lemma1", float(violations), 0.0, violations == 0, {"cases": done})


def _edge_sweep(name, fn, tol, gain, count, seed) -> Check:
    worst, edges = -math.inf, 0
    for inst, y in _small_bipartite(seed, count):
        for u, v in _oriented_edges(inst):
            r = fn(inst, u, v, y, gain, tol)
            edges += 1
            # residual is the amount by which the claimed relation is missed
            miss = abs(r.lhs - r.rhs) if name == "lemma5" else r.rhs - r.lhs
            worst = max(worst, miss)
    return Check(name, worst, tol, worst <= tol, {"edges": edges})


def check_lemma5_suite(tol=1e-9, gain=None, count=100, seed=5, **_) -> Check:
    return _edge_sweep("lemma5", check_lemma5, tol, gain, count, seed)


def check_lemma6_suite(tol=1e-9, gain=None, count=100, seed=6, **_) -> Check:
    return _edge_sweep("lemma6", check_lemma6, tol, gain, count, seed)


def check_fact1_suite(tol=1e-9, gain=None, count=100, seed=7, **_) -> Check:
    return _edge_sweep("fact1", check_fact1, tol, gain, count, seed)


def check_edge_gain(tol=1e-9, gain=None, count=100, seed=8, **_) -> Check:
    target = omega_constant()
    worst = math.inf
    for inst, y in _small_bipartite(seed, count):
        for u, v in _oriented_edges(inst):
            worst = min(worst, expected_edge_gain(inst, u, v, y, gain=gain).mean)
    return Check("edge-gain", target - worst, tol, worst >= target - tol, {"min_gain": worst, "target": target})


def check_lemma7(tol=1e-9, gain=None, **_) -> Check:
    gain = gain or RankingGain()
    target = omega_constant()
    value, arg = lemma7_minimum(gain)
    ordering = value >= fact1_average(gain) - tol
    return Check("lemma7", target - value, tol, value >= target - tol and ordering,
                 {"minimum": value, "argmin_tau_gamma_theta": list(arg), "target": target,
                  "fact1_average": fact1_average(gain), "ordering_pass": ordering})


def check_generalized(k=3, m=3, L=50, **_) -> Check:
    g = gen_generalized_hard_instance(k, m, L)
    bad = g.check_indistinguishability()
    order = g.check_deadline_order()
    ok = not bad and not order and g.dummy_count <= g.dummy_budget
    return Check("generalized", float(len(bad) + len(order)), 0.0, ok,
                 {"k": k, "m": m, "L": L, "dummies": g.dummy_count, "budget": g.dummy_budget})


CHECKS: dict[str, tuple[Callable, float]] = {
    "lemma3": (check_lemma3, 1e-6),
    "f-ode": (check_f_ode, 1e-8),
    "special-values": (check_special_values, 1e-12),
    "dual-cert": (check_dual_cert, 1e-9),
    "stationary": (check_stationary, 0.01),
    "omega": (check_omega, 1e-12),
    "lemma1": (check_lemma1, 0.0),
    "lemma5": (check_lemma5_suite, 1e-9),
    "lemma6": (check_lemma6_suite, 1e-9),
    "fact1": (check_fact1_suite, 1e-9),
    "edge-gain": (check_edge_gain, 1e-9),
    "lemma7": (check_lemma7, 1e-9),
    "generalized": (check_generalized, 0.0),
}

_TAKES_GAIN = {"lemma5", "lemma6", "fact1", "edge-gain", "lemma7"}


def run_checks(only=None, tol: float | None = None, plateau: float | None = None) -> list[Check]:
    """Run the named checks (all by default).

    ``tol`` replaces every default tolerance; ``plateau`` swaps in a modified
    Ranking gain for the checks that depend on it.
    """
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    gain = RankingGain(plateau=plateau) if plateau is not None else None
    results = []
    for name in names:
        fn, default = CHECKS[name]
        kwargs = {}
        if name not in ("lemma1", "generalized"):
            kwargs["tol"] = default if tol is None else tol
        if name in _TAKES_GAIN:
            kwargs["gain"] = gain
        results.append(fn(**kwargs))
    return results
