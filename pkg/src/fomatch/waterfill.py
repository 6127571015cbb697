"""Continuous water-filling with gain-sharing duals.

Pouring is solved in closed form by a waterline search, and the dual
increments integrate the gain function exactly through its antiderivative,
so the primal and dual objectives agree to rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import CapacityOutOfRange, MismatchedOutcome, ZeroOpt
from .instance import Instance, opt_value

SQRT2 = math.sqrt(2.0)
WF_RATIO = 2.0 - SQRT2


@dataclass(frozen=True)
class GainFunction:
    """Non-decreasing gain share ``g`` on [0, 1] with antiderivative ``G`` (G(0) = 0)."""

    g: Callable
    G: Callable
    name: str = "gain"

    def integral(self, a, b):
        return self.G(b) - self.G(a)


def linear_gain() -> GainFunction:
    """g(x) = (sqrt2/2) x + 1 - sqrt2/2, the share that balances both endpoints."""
    slope = SQRT2 / 2.0
    return GainFunction(
        g=lambda x: slope * np.asarray(x, dtype=float) + 1.0 - slope,
        G=lambda x: 0.5 * slope * np.asarray(x, dtype=float) ** 2 + (1.0 - slope) * np.asarray(x, dtype=float),
        name="linear",
    )


def waterline(levels: np.ndarray, capacity: float) -> float:
    """Final water level when ``capacity`` is poured onto ``levels`` (capped at 1)."""
    below = np.sort(levels[levels < 1.0])
    if len(below) == 0 or capacity <= 0.0:
        return float(below[0]) if len(below) else 1.0
    room = len(below) - below.sum()
    if capacity >= room:
        return 1.0
    csum = np.cumsum(below)
    counts = np.arange(1, len(below) + 1)
    cand = (capacity + csum) / counts
    nxt = np.append(below[1:], 1.0)
    j = int(np.argmax(cand <= nxt))
    return float(min(cand[j], 1.0))


def pour(levels, capacity: float) -> list[tuple[int, float, float]]:
    """Raise the lowest levels together until ``capacity`` is used or all are full.

    Returns ``(position, old_level, new_level)`` for every raised entry.
    """
    if not 0.0 <= capacity <= 1.0:
        raise CapacityOutOfRange(f"capacity {capacity} outside [0, 1]")
    levels = np.asarray(levels, dtype=float)
    if len(levels) == 0 or capacity == 0.0:
        return []
    w = waterline(levels, capacity)
    raised = np.nonzero(levels < w)[0]
    return [(int(i), float(levels[i]), w) for i in raised]


@dataclass(frozen=True)
class PourRecord:
    active: int
    raised: np.ndarray  # vertex ids
    old: np.ndarray  # their levels before the pour
    level: float  # common level after the pour


@dataclass
class FractionalOutcome:
    instance: Instance = field(repr=False)
    x_edge: np.ndarray  # by edge id
    x: np.ndarray  # water-levels
    p: np.ndarray  # passive water-levels
    alpha: np.ndarray
    pours: list[PourRecord] | None = None
    gain_name: str = ""

    @property
    def value(self) -> float:
        return float(self.x_edge.sum())

    def to_csv(self) -> str:
        rows = ["vertex,x,p,alpha"]
        rows += [f"{v},{x!r},{p!r},{a!r}" for v, (x, p, a) in
                 enumerate(zip(self.x.tolist(), self.p.tolist(), self.alpha.tolist()))]
        rows.append("edge,u,v,x_uv")
        rows += [f"{i},{u},{v},{x!r}" for i, ((u, v), x) in
                 enumerate(zip(self.instance.edges.tolist(), self.x_edge.tolist()))]
        return "\n".join(rows) + "\n"


def waterfill_steps(instance: Instance, gain: GainFunction, keep_log: bool = True) -> Iterator[tuple[int, FractionalOutcome]]:
    """Run water-filling deadline by deadline, yielding ``(vertex, live state)``.

    The yielded outcome object is updated in place; copy what you need.
    """
    n = instance.n
    out = FractionalOutcome(
        instance=instance,
        x_edge=np.zeros(instance.m),
        x=np.zeros(n),
        p=np.zeros(n),
        alpha=np.zeros(n),
        pours=[] if keep_log else None,
        gain_name=gain.name,
    )
    x, dl = out.x, instance.deadline
    for u in instance.deadline_order().tolist():
        out.p[u] = x[u]
        nb, eid = instance.incident(u)
        later = dl[nb] > dl[u]
        nb, eid = nb[later], eid[later]
        cap = 1.0 - x[u]
        if len(nb) and cap > 0.0:
            lv = x[nb]
            w = waterline(lv, cap)
            sel = lv < w
            if sel.any():
                v, e, old = nb[sel], eid[sel], lv[sel]
                amount = w - old
                share_v = gain.G(w) - gain.G(old)
                out.x_edge[e] += amount
                x[v] = w
                x[u] += amount.sum()
                out.alpha[v] += share_v
                out.alpha[u] += (amount - share_v).sum()
                if keep_log:
                    out.pours.append(PourRecord(u, v.copy(), old.copy(), w))
        yield u, out


def run_waterfill(instance: Instance, gain: GainFunction | None = None, keep_log: bool = True) -> FractionalOutcome:
    gain = gain or linear_gain()
    out = None
    for _, out in waterfill_steps(instance, gain, keep_log):
        pass
    if out is None:  # no vertices at all
        out = FractionalOutcome(instance, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                                [] if keep_log else None, gain.name)
    return out


@dataclass
class CertReport:
    min_edge_sum: float
    objective_gap: float
    ratio: float
    violating_edges: list[tuple[int, int]]
    passed: bool

    def to_json(self) -> str:
        return json.dumps({
            "min_edge_sum": self.min_edge_sum,
            "objective_gap": self.objective_gap,
            "ratio": self.ratio,
            "pass": self.passed,
            "violations": [list(e) for e in self.violating_edges],
        })


def certify_duals(outcome: FractionalOutcome, instance: Instance, ratio: float = WF_RATIO,
                  tol: float = 1e-9) -> CertReport:
    """Check dual feasibility at ``ratio`` on every edge and primal/dual equality."""
    if outcome.instance is not instance and outcome.instance != instance:
        raise MismatchedOutcome("outcome was produced on a different instance")
    if len(outcome.alpha) != instance.n or len(outcome.x_edge) != instance.m:
        raise MismatchedOutcome("outcome dimensions do not match the instance")
    gap = abs(float(outcome.x_edge.sum()) - float(outcome.alpha.sum()))
    if instance.m:
        sums = outcome.alpha[instance.edges[:, 0]] + outcome.alpha[instance.edges[:, 1]]
        min_sum = float(sums.min())
        bad = np.nonzero(sums < ratio - tol)[0]
        violations = [tuple(int(a) for a in instance.edges[i]) for i in bad[:100]]
    else:
        min_sum, violations = math.inf, []
    return CertReport(min_sum, gap, ratio, violations, not violations and gap <= tol)


def achieved_ratio(outcome: FractionalOutcome, instance: Instance, opt=None) -> float:
    """Fractional matching size over the offline optimum."""
    opt = opt_value(instance) if opt is None else opt
    if opt == 0:
        raise ZeroOpt("instance has no edges; ratio undefined")
    return outcome.value / float(opt)


def bottleneck_bound(p_u, x_v):
    """Dual lower bound for an edge whose earlier endpoint ends full.

    Sum of the passive gain up to ``p_u``, the active share of the remainder
    against a neighbor at level ``x_v``, and the passive gain of ``x_v``.
    """
    gain = linear_gain()
    p_u = np.asarray(p_u, dtype=float)
    x_v = np.asarray(x_v, dtype=float)
    return gain.G(p_u) + (1.0 - p_u) * (1.0 - gain.g(x_v)) + gain.G(x_v)


def bottleneck_square(p_u, x_v):
    """Completed-square form of :func:`bottleneck_bound`."""
    s = np.asarray(p_u, dtype=float) + np.asarray(x_v, dtype=float)
    return SQRT2 / 4.0 * (s - WF_RATIO) ** 2 + WF_RATIO
