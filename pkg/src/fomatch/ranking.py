"""Randomized Ranking with gain-sharing duals, marginal ranks and thresholds.

The matching produced by Ranking depends only on the relative order of the
ranks, so with every rank but one or two held fixed it is piecewise constant
on the grid cut out by the fixed ranks.  Expectations over the free ranks are
therefore computed exactly: one simulation per grid cell, and closed-form
integrals of the gain function on each cell.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConstancyViolation, NotBipartite, TooLargeForExhaustive, ZeroOpt
from .instance import Instance, opt_value

EXHAUSTIVE_MAX_N = 10


# ---------------------------------------------------------------------------
# constants and the gain function


def omega_constant(tol: float = 1e-15) -> float:
    """Solution of x * e^x = 1 by Newton's method."""
    x = 0.5
    for _ in range(100):
        ex = math.exp(x)
        step = (x * ex - 1.0) / (ex * (1.0 + x))
        x -= step
        if abs(step) < tol:
            break
    return x


def ranking_constant() -> float:
    """c_r = 1 / (1 + e^Omega)."""
    return 1.0 / (1.0 + math.exp(omega_constant()))


@dataclass(frozen=True)
class RankingGain:
    """Piecewise gain: c/(1-y) below the breakpoint, a plateau up to 1, and g(1) = 1.

    The plateau defaults to 1 - c, which makes g continuous at the breakpoint.
    Other plateau values exist only to inject faults into the checks.
    """

    c: float = field(default_factory=ranking_constant)
    plateau: float | None = None

    @property
    def level(self) -> float:
        return 1.0 - self.c if self.plateau is None else self.plateau

    @property
    def breakpoint(self) -> float:
        return (1.0 - 2.0 * self.c) / (1.0 - self.c)

    def g(self, y: float) -> float:
        if y >= 1.0:
            return 1.0
        if y < self.breakpoint:
            return self.c / (1.0 - y)
        return self.level

    def G(self, s: float) -> float:
        """Integral of g over [0, s]."""
        b = self.breakpoint
        if s <= b:
            return -self.c * math.log1p(-s)
        return -self.c * math.log1p(-b) + self.level * (s - b)

    def H(self, s: float) -> float:
        """Integral of y * g(y) over [0, s]."""
        b = self.breakpoint
        if s <= b:
            return -self.c * math.log1p(-s) - self.c * s
        return -self.c * math.log1p(-b) - self.c * b + 0.5 * self.level * (s * s - b * b)

    def integral(self, a: float, b: float) -> float:
        return self.G(b) - self.G(a)

    def capped_integral(self, lo: float, cap: float) -> float:
        """Integral of min{cap, g(y)} over [lo, 1]."""
        b = self.breakpoint
        total = 0.0
        if lo < b:
            # c/(1-y) reaches cap at y = 1 - c/cap
            cross = lo if cap <= 0.0 else min(max(1.0 - self.c / cap, lo), b)
            total += self.G(cross) - self.G(lo) + cap * (b - cross)
        total += min(cap, self.level) * (1.0 - max(lo, b))
        return total


# ---------------------------------------------------------------------------
# the algorithm


PASSIVE, ACTIVE, UNMATCHED = "passive", "active", "unmatched"


class Status(NamedTuple):
    kind: str
    partner: int = -1
    detail: float = 0.0  # partner's deadline step if passive, partner's rank if active


@dataclass
class IntegralOutcome:
    matches: list[tuple[int, int]]  # (active, passive)
    status: list[Status]
    alpha: np.ndarray
    ranks: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.matches)

    def mate(self, v: int) -> int:
        return self.status[v].partner


def draw_ranks(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform ranks in [0, 1), redrawing any that collide."""
    y = rng.random(n)
    while len(np.unique(y)) < n:
        _, first = np.unique(y, return_index=True)
        dup = np.setdiff1d(np.arange(n), first)
        y[dup] = rng.random(len(dup))
    return y


def _sweep(instance: Instance, ranks, removed=()) -> list[int]:
    """Mate array of Ranking; -1 for unmatched or removed vertices."""
    adj = instance.adjacency_lists()
    dl = instance.deadline.tolist()
    y = ranks.tolist() if isinstance(ranks, np.ndarray) else list(ranks)
    mate = [-1] * instance.n
    gone = set(removed)
    for v in instance.deadline_order().tolist():
        if mate[v] >= 0 or v in gone:
            continue
        best, best_rank, d = -1, 2.0, dl[v]
        for w in adj[v]:
            if mate[w] < 0 and dl[w] > d and y[w] < best_rank and w not in gone:
                best, best_rank = w, y[w]
        if best >= 0:
            mate[v], mate[best] = best, v
    return mate


def run_ranking(instance: Instance, ranks, gain: RankingGain | None = None, removed=()) -> IntegralOutcome:
    """Ranking: at each unmatched vertex's deadline, match the lowest-rank available neighbor.

    ``removed`` vertices are deleted from the graph for counterfactual runs.
    """
    gain = gain or RankingGain()
    ranks = np.asarray(ranks, dtype=float)
    mate = _sweep(instance, ranks, removed)
    dl = instance.deadline
    alpha = np.zeros(instance.n)
    status = [Status(UNMATCHED)] * instance.n
    matches = []
    for v, w in enumerate(mate):
        if w < 0 or dl[v] > dl[w]:
            continue
        # v reached its deadline first, so v is active and w passive
        share = gain.g(float(ranks[w]))
        alpha[v], alpha[w] = 1.0 - share, share
        status[v] = Status(ACTIVE, w, float(ranks[w]))
        status[w] = Status(PASSIVE, v, float(dl[v]))
        matches.append((v, w))
    return IntegralOutcome(matches, status, alpha, ranks)


class RatioEstimate(NamedTuple):
    mean: float
    stderr: float


def _trial_ranks(n: int, seed: int, trial: int) -> np.ndarray:
    return draw_ranks(n, np.random.default_rng([seed, trial]))


def ranking_trials(instance: Instance, trials: int, seed: int, opt=None) -> list[dict]:
    """One row per trial: matched size and ratio to OPT.  Trial t uses the stream (seed, t)."""
    opt = opt_value(instance) if opt is None else opt
    if opt == 0:
        raise ZeroOpt("instance has no edges; ratio undefined")
    rows = []
    for t in range(trials):
        mate = _sweep(instance, _trial_ranks(instance.n, seed, t))
        size = sum(1 for w in mate if w >= 0) // 2
        rows.append({"trial": t, "seed": seed, "matched": size, "opt": float(opt), "ratio": size / float(opt)})
    return rows


def _mean_stderr(values) -> RatioEstimate:
    vals = np.asarray(values, dtype=float)
    if len(vals) < 2:
        return RatioEstimate(float(vals.mean()) if len(vals) else math.nan, 0.0)
    return RatioEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))))


def estimate_ratio(instance: Instance, trials: int, seed: int, opt=None) -> RatioEstimate:
    """Monte Carlo mean and standard error of |M| / OPT."""
    return _mean_stderr([r["ratio"] for r in ranking_trials(instance, trials, seed, opt)])


def trial_log_csv(rows: list[dict]) -> str:
    lines = ["trial,seed,matched,opt,ratio"]
    lines += [f"{r['trial']},{r['seed']},{r['matched']},{r['opt']!r},{r['ratio']!r}" for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# marginal ranks and thresholds


def _grid(ranks, skip) -> list[float]:
    """Sorted breakpoints in [0, 1] from the ranks of all vertices not in ``skip``."""
    pts = {float(r) for i, r in enumerate(np.asarray(ranks).tolist()) if i not in skip}
    return [0.0] + sorted(p for p in pts if 0.0 < p < 1.0) + [1.0]


def marginal_rank(instance: Instance, v: int, ranks, removed=()) -> float:
    """Largest theta such that v is passive whenever its rank is below theta.

    Every other vertex keeps its rank; v's own entry in ``ranks`` is ignored.
    Returns 0 if v is never passive and 1 if it always is.
    """
    y = np.array(ranks, dtype=float)
    gone = set(removed)
    pts = _grid(y, gone | {v})
    dl = instance.deadline
    theta = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        y[v] = 0.5 * (a + b)
        w = _sweep(instance, y, gone)[v]
        if w >= 0 and dl[w] < dl[v]:
            theta = b
    return theta


def _oriented(instance: Instance, u: int, v: int) -> None:
    if v not in instance.adjacency_lists()[u]:
        raise ValueError(f"({u}, {v}) is not an edge")
    if instance.deadline[u] > instance.deadline[v]:
        raise ValueError(f"vertex {u} must reach its deadline before {v}")


@dataclass
class ThresholdReport:
    u: int
    v: int
    tau: float
    gamma: float
    theta_samples: list[tuple[float, float]]  # (y_u, theta(y_u))
    constancy_pass: bool
    above_gamma: bool

    @property
    def theta(self) -> float:
        """The common value of theta(y_u) for y_u above tau (1 if there is no such cell)."""
        above = [t for y, t in self.theta_samples if y > self.tau]
        return above[0] if above else 1.0

    def to_json(self) -> str:
        return json.dumps({
            "u": self.u, "v": self.v, "tau": self.tau, "gamma": self.gamma,
            "theta_samples": [{"y_u": y, "theta": t} for y, t in self.theta_samples],
            "constancy_pass": self.constancy_pass,
        })


def thresholds(instance: Instance, u: int, v: int, ranks, strict: bool = True) -> ThresholdReport:
    """tau, gamma and the map y_u -> theta(y_u) for an edge (u, v) with u's deadline first.

    ``strict`` raises ConstancyViolation when theta is not constant above tau,
    or drops below gamma, on a bipartite instance.
    """
    _oriented(instance, u, v)
    y = np.array(ranks, dtype=float)
    tau = marginal_rank(instance, u, y, removed=(v,))
    gamma = marginal_rank(instance, v, y, removed=(u,))
    pts = _grid(y, {u, v})
    samples = []
    for a, b in zip(pts[:-1], pts[1:]):
        y[u] = 0.5 * (a + b)
        samples.append((float(y[u]), marginal_rank(instance, v, y)))
    above = {t for yu, t in samples if yu > tau}
    report = ThresholdReport(u, v, tau, gamma, samples, len(above) <= 1,
                             all(t >= gamma for _, t in samples))
    if strict and instance.bipartition is not None and not (report.constancy_pass and report.above_gamma):
        raise ConstancyViolation(f"thresholds of edge ({u}, {v}) break constancy or theta >= gamma")
    return report


# ---------------------------------------------------------------------------
# exact integration over the free ranks of an edge's endpoints
#
# On a cell the integrand is K + A g(y_u) + B g(y_v).  Off-diagonal cells are
# rectangles; a diagonal cell [a, b]^2 splits along y_u = y_v into two
# triangles because the relative order of y_u and y_v matters there.


class _Cell(NamedTuple):
    lo_u: float
    hi_u: float
    lo_v: float
    hi_v: float
    shape: str  # "rect", "u<v" or "v<u"


def _cells(pts: list[float]):
    for i, (a1, b1) in enumerate(zip(pts[:-1], pts[1:])):
        for j, (a2, b2) in enumerate(zip(pts[:-1], pts[1:])):
            if i != j:
                yield _Cell(a1, b1, a2, b2, "rect"), (0.5 * (a1 + b1), 0.5 * (a2 + b2))
            else:
                w = b1 - a1
                yield _Cell(a1, b1, a1, b1, "u<v"), (a1 + w / 3.0, a1 + 2.0 * w / 3.0)
                yield _Cell(a1, b1, a1, b1, "v<u"), (a1 + 2.0 * w / 3.0, a1 + w / 3.0)


def _cell_integral(gain: RankingGain, cell: _Cell, K: float, A: float, B: float) -> float:
    a, b = cell.lo_u, cell.hi_u
    if cell.shape == "rect":
        c, d = cell.lo_v, cell.hi_v
        return K * (b - a) * (d - c) + A * (d - c) * gain.integral(a, b) + B * (b - a) * gain.integral(c, d)
    dG, dH = gain.integral(a, b), gain.H(b) - gain.H(a)
    low = b * dG - dH  # integral of g over the lower coordinate of the triangle
    high = dH - a * dG  # integral of g over the upper coordinate
    gu, gv = (low, high) if cell.shape == "u<v" else (high, low)
    return K * 0.5 * (b - a) ** 2 + A * gu + B * gv


def _alpha_terms(x: int, u: int, v: int, mate: list[int], dl, y, gain: RankingGain) -> tuple[float, float, float]:
    """alpha_x as coefficients (const, g(y_u), g(y_v))."""
    w = mate[x]
    if w < 0:
        return 0.0, 0.0, 0.0
    passive_x = dl[w] < dl[x]
    if passive_x:
        return (0.0, 1.0, 0.0) if x == u else (0.0, 0.0, 1.0) if x == v else (gain.g(y[x]), 0.0, 0.0)
    if w == u:
        return 1.0, -1.0, 0.0
    if w == v:
        return 1.0, 0.0, -1.0
    return 1.0 - gain.g(y[w]), 0.0, 0.0


def _integrate_edge(instance: Instance, u: int, v: int, ranks, gain: RankingGain, weight) -> float:
    """Exact E over (y_u, y_v) of weight(cell, terms_u, terms_v) applied per cell.

    ``weight`` returns the multipliers applied to alpha_u and alpha_v on the cell.
    """
    y = np.array(ranks, dtype=float)
    pts = _grid(y, {u, v})
    dl = instance.deadline.tolist()
    total = 0.0
    for cell, (yu, yv) in _cells(pts):
        y[u], y[v] = yu, yv
        mate = _sweep(instance, y)
        ylist = y.tolist()
        wu, wv = weight(cell)
        tu = _alpha_terms(u, u, v, mate, dl, ylist, gain)
        tv = _alpha_terms(v, u, v, mate, dl, ylist, gain)
        K, A, B = (wu * p + wv * q for p, q in zip(tu, tv))
        if K or A or B:
            total += _cell_integral(gain, cell, K, A, B)
    return total


def expected_edge_gain(instance: Instance, u: int, v: int, ranks, mode: str = "exhaustive",
                       gain: RankingGain | None = None, samples: int = 1000, seed: int = 0) -> RatioEstimate:
    """E over (y_u, y_v) of alpha_u + alpha_v with every other rank fixed.

    ``exhaustive`` is exact (stderr 0) and limited to small instances;
    ``montecarlo`` averages ``samples`` uniform draws of (y_u, y_v).
    """
    gain = gain or RankingGain()
    if mode == "exhaustive":
        if instance.n > EXHAUSTIVE_MAX_N:
            raise TooLargeForExhaustive(f"n = {instance.n} > {EXHAUSTIVE_MAX_N}")
        return RatioEstimate(_integrate_edge(instance, u, v, ranks, gain, lambda cell: (1.0, 1.0)), 0.0)
    if mode != "montecarlo":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    y = np.array(ranks, dtype=float)
    vals = []
    for _ in range(samples):
        y[u], y[v] = rng.random(2)
        out = run_ranking(instance, y, gain)
        vals.append(out.alpha[u] + out.alpha[v])
    return _mean_stderr(vals)


# ---------------------------------------------------------------------------
# checks of the analysis on concrete instances


@dataclass
class CheckResult:
    name: str
    lhs: float
    rhs: float
    passed: bool
    detail: dict = field(default_factory=dict)


def check_lemma5(instance: Instance, u: int, v: int, ranks, gain: RankingGain | None = None,
                 tol: float = 1e-9) -> CheckResult:
    """E[alpha_u 1(y_u < tau) + alpha_v 1(y_v < gamma)] against the integrals of g up to tau and gamma."""
    gain = gain or RankingGain()
    th = thresholds(instance, u, v, ranks, strict=False)
    # tau and gamma are grid breakpoints, so each cell lies wholly on one side
    lhs = _integrate_edge(instance, u, v, ranks, gain,
                          lambda cell: (float(cell.hi_u <= th.tau), float(cell.hi_v <= th.gamma)))
    rhs = gain.G(th.tau) + gain.G(th.gamma)
    return CheckResult("lemma5", lhs, rhs, abs(lhs - rhs) <= tol, {"tau": th.tau, "gamma": th.gamma})


def _conditional_gain(instance: Instance, u: int, v: int, y, gain: RankingGain, gamma: float | None):
    """For fixed y_u: exact E over y_v of alpha_u + alpha_v (times 1(y_v > gamma) if given)."""
    y = np.array(y, dtype=float)
    pts = _grid(y, {v})
    dl = instance.deadline.tolist()
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        y[v] = 0.5 * (a + b)
        mate = _sweep(instance, y)
        ylist = y.tolist()
        Ku, Au, Bu = _alpha_terms(u, u, v, mate, dl, ylist, gain)
        Kv, Av, Bv = _alpha_terms(v, u, v, mate, dl, ylist, gain)
        if gamma is not None and b <= gamma:
            Kv = Av = Bv = 0.0
        gu = gain.g(ylist[u])
        total += (Ku + Kv + (Au + Av) * gu) * (b - a) + (Bu + Bv) * gain.integral(a, b)
    return total


def check_lemma6(instance: Instance, u: int, v: int, ranks, gain: RankingGain | None = None,
                 tol: float = 1e-9) -> CheckResult:
    """For every y_u cell above tau, E_{y_v}[alpha_u + alpha_v 1(y_v > gamma)] against its lower bound."""
    gain = gain or RankingGain()
    th = thresholds(instance, u, v, ranks, strict=False)
    y = np.array(ranks, dtype=float)
    worst, worst_lhs, worst_rhs = math.inf, math.nan, math.nan
    for yu, theta in th.theta_samples:
        if yu <= th.tau:
            continue
        y[u] = yu
        lhs = _conditional_gain(instance, u, v, y, gain, th.gamma)
        gt = gain.g(theta)
        rhs = 1.0 - th.gamma - (1.0 - theta) * gt + th.gamma * min(gain.g(yu), 1.0 - gt)
        if lhs - rhs < worst:
            worst, worst_lhs, worst_rhs = lhs - rhs, lhs, rhs
    if worst == math.inf:  # no cell above tau
        return CheckResult("lemma6", 0.0, 0.0, True, {"cells": 0})
    return CheckResult("lemma6", worst_lhs, worst_rhs, worst >= -tol, {"min_slack": worst})


def check_fact1(instance: Instance, u: int, v: int, ranks, gain: RankingGain | None = None,
                tol: float = 1e-9) -> CheckResult:
    """For every y_u cell, E_{y_v}[alpha_u + alpha_v] >= G(theta) + min{1 - g(theta), g(y_u)} at the actual theta(y_u)."""
    gain = gain or RankingGain()
    th = thresholds(instance, u, v, ranks, strict=False)
    y = np.array(ranks, dtype=float)
    worst, pair = math.inf, (math.nan, math.nan)
    for yu, theta in th.theta_samples:
        y[u] = yu
        lhs = _conditional_gain(instance, u, v, y, gain, None)
        rhs = gain.G(theta) + min(1.0 - gain.g(theta), gain.g(yu))
        if lhs - rhs < worst:
            worst, pair = lhs - rhs, (lhs, rhs)
    return CheckResult("fact1", pair[0], pair[1], worst >= -tol, {"min_slack": worst})


def edge_bound(gain: RankingGain, tau, gamma, theta) -> float:
    """The lower bound on E[alpha_u + alpha_v] in terms of the three thresholds."""
    gt = gain.g(theta)
    return (gain.G(tau) + gain.G(gamma) + (1.0 - tau) * (1.0 - gamma - (1.0 - theta) * gt)
            + gamma * gain.capped_integral(tau, 1.0 - gt))


def lemma7_minimum(gain: RankingGain | None = None, grid: int = 201) -> tuple[float, tuple[float, float, float]]:
    """Grid minimum of the threshold bound over tau in [0, 1] and 0 <= gamma <= theta <= 1.

    The grid includes the analytic minimizer, so for the default gain the
    result equals Omega up to rounding.
    """
    gain = gain or RankingGain()
    base = np.linspace(0.0, 1.0, grid)
    c = gain.c
    star = 1.0 - math.sqrt(c / (1.0 - c))  # tau = gamma with (1-tau)^2 = c/(1-c)
    pts = np.unique(np.concatenate([base, [gain.breakpoint, star]]))
    P = len(pts)
    Gp = np.array([gain.G(p) for p in pts])
    gp = np.array([gain.g(p) for p in pts])
    # capped[i, j] = integral over [pts[i], 1] of min{1 - g(pts[j]), g}
    capped = np.array([[gain.capped_integral(t, 1.0 - gp[j]) for j in range(P)] for t in pts])
    tau = pts[:, None, None]
    gam = pts[None, :, None]
    th = pts[None, None, :]
    val = (Gp[:, None, None] + Gp[None, :, None]
           + (1.0 - tau) * (1.0 - gam - (1.0 - th) * gp[None, None, :])
           + gam * capped[:, None, :])
    val = np.where(gam <= th, val, np.inf)
    idx = np.unravel_index(int(np.argmin(val)), val.shape)
    return float(val[idx]), tuple(float(pts[i]) for i in idx)


def fact1_average(gain: RankingGain | None = None, grid: int = 2001) -> float:
    """E_{y_u} of min over theta of G(theta) + min{1 - g(theta), g(y_u)} (midpoint rule in y_u)."""
    gain = gain or RankingGain()
    thetas = np.linspace(0.0, 1.0, grid)
    Gt = np.array([gain.G(t) for t in thetas])
    cap = 1.0 - np.array([gain.g(t) for t in thetas])
    ys = (np.arange(grid) + 0.5) / grid
    gy = np.array([gain.g(y) for y in ys])
    return float(np.min(Gt[None, :] + np.minimum(cap[None, :], gy[:, None]), axis=1).mean())


# ---------------------------------------------------------------------------
# neighbors never improve when a vertex is removed


def _status_key(st: Status) -> tuple[int, float]:
    if st.kind == PASSIVE:
        return 2, -st.detail
    if st.kind == ACTIVE:
        return 1, -st.detail
    return 0, 0.0


@dataclass
class MonotonicityReport:
    u: int
    violations: list[int]

    @property
    def passed(self) -> bool:
        return not self.violations


def check_lemma1_monotonicity(instance: Instance, ranks, u: int) -> MonotonicityReport:
    """Remove u and confirm that no neighbor of u ends in a strictly better state."""
    if instance.bipartition is None:
        raise NotBipartite("the monotonicity property is only claimed for bipartite graphs")
    before = run_ranking(instance, ranks).status
    after = run_ranking(instance, ranks, removed=(u,)).status
    bad = [w for w in instance.adjacency_lists()[u] if _status_key(after[w]) > _status_key(before[w])]
    return MonotonicityReport(u, bad)
