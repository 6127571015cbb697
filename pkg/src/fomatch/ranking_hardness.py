"""Layered hard instance for Ranking and its limiting ratio.

Groups t = 1..m each hold a perfect matching u_{t,i} -- v_{t,i}, and every
pair of consecutive layers U_t, U_{t+1} is joined by a complete bipartite
graph.  All u-deadlines come first in (t, i) order, then the v-deadlines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import SizeOverflow
from .instance import Instance, instance_from_deadlines
from .ranking import RatioEstimate, _mean_stderr

MAX_EDGES = 25_000_000


def omega_fixed_point(tol: float = 1e-15) -> float:
    """Solution of x = e^-x by Newton's method."""
    x = 0.5
    for _ in range(100):
        ex = math.exp(-x)
        step = (x - ex) / (1.0 + ex)
        x -= step
        if abs(step) < tol:
            break
    return x


def u_id(k: int, t: int, i: int) -> int:
    return (t - 1) * k + (i - 1)


def v_id(k: int, m: int, t: int, i: int) -> int:
    return k * m + (t - 1) * k + (i - 1)


@dataclass(frozen=True)
class RankingHardInstance:
    instance: Instance
    k: int
    m: int

    @property
    def opt(self) -> int:
        return self.k * self.m

    def matching_edges(self) -> list[tuple[int, int]]:
        km = self.k * self.m
        return [(x, km + x) for x in range(km)]


def gen_ranking_hard_instance(k: int, m: int, max_edges: int = MAX_EDGES) -> RankingHardInstance:
    if k < 1 or m < 1:
        raise ValueError("k and m must be positive")
    n_edges = k * m + k * k * (m - 1)
    if n_edges > max_edges:
        raise SizeOverflow(f"k={k}, m={m} needs {n_edges} edges (limit {max_edges})")
    km = k * m
    us = np.arange(km)
    pairs = [np.stack([us, us + km], axis=1)]
    if m > 1:
        # layer t (0-based) to layer t + 1, all k^2 pairs
        t = np.repeat(np.arange(m - 1), k * k)
        i = np.tile(np.repeat(np.arange(k), k), m - 1)
        j = np.tile(np.arange(k), k * (m - 1))
        pairs.append(np.stack([t * k + i, (t + 1) * k + j], axis=1))
    edges = np.concatenate(pairs)
    layer = us // k
    sides = np.concatenate([layer % 2, 1 - layer % 2]).astype(np.int8)
    inst = instance_from_deadlines(2 * km, edges, np.arange(2 * km), sides)
    return RankingHardInstance(inst, k, m)


class LayerCounts(NamedTuple):
    passive: np.ndarray  # (trials, m): U_t vertices matched from U_{t-1}
    active: np.ndarray  # (trials, m): U_t vertices that matched at their own deadline


def simulate_layers(u_ranks: np.ndarray, v_ranks: np.ndarray) -> LayerCounts:
    """Ranking on the hard instance for many rank draws at once.

    ``u_ranks`` and ``v_ranks`` have shape (trials, m, k).  When u_{t,i}
    reaches its deadline the unmatched part of U_{t+1} is exactly its
    highest-ranked vertices, because earlier picks always took the lowest
    available rank.  So a per-layer counter of how many U_{t+1} vertices are
    taken fully describes the state.
    """
    trials, m, k = u_ranks.shape
    rows = np.arange(trials)
    passive = np.zeros((trials, m), dtype=np.int64)
    active = np.zeros((trials, m), dtype=np.int64)
    taken = np.zeros(trials, dtype=np.int64)  # matched prefix of the current layer
    for t in range(m):
        pos = np.argsort(np.argsort(u_ranks[:, t, :], axis=1), axis=1)
        nxt = np.sort(u_ranks[:, t + 1, :], axis=1) if t + 1 < m else None
        passive[:, t] = taken
        ptr = np.zeros(trials, dtype=np.int64)
        for i in range(k):
            free = pos[:, i] >= taken
            if nxt is not None:
                cand = np.where(ptr < k, nxt[rows, np.minimum(ptr, k - 1)], np.inf)
                ptr += free & (cand < v_ranks[:, t, i])
            active[:, t] += free
        taken = ptr
    return LayerCounts(passive, active)


def _draw_layers(trials: int, m: int, k: int, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return rng.random((trials, m, k)), rng.random((trials, m, k))


class HardRatio(NamedTuple):
    bulk: RatioEstimate
    overall: RatioEstimate


def bulk_layers(m: int) -> np.ndarray:
    """0-based indices of groups t with m/4 <= t <= 3m/4 (t counted from 1); all groups if none qualify."""
    t = np.arange(1, m + 1)
    idx = np.nonzero((4 * t >= m) & (4 * t <= 3 * m))[0]
    return idx if len(idx) else np.arange(m)


def hard_instance_ratio(k: int, m: int, trials: int, seed: int, chunk: int = 1000) -> HardRatio:
    """Matched fraction of Ranking on the hard instance, over the bulk groups and overall.

    Every match has its active endpoint in some U_t, so the matching size of
    group t is the number of active U_t vertices.
    """
    if k * m + k * k * (m - 1) > MAX_EDGES:
        raise SizeOverflow(f"k={k}, m={m} exceeds the edge limit")
    bulk_idx = bulk_layers(m)
    bulk_vals, all_vals = [], []
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        counts = simulate_layers(*_draw_layers(n, m, k, [seed, start]))
        bulk_vals.append(counts.active[:, bulk_idx].sum(axis=1) / (k * len(bulk_idx)))
        all_vals.append(counts.active.sum(axis=1) / (k * m))
    return HardRatio(_mean_stderr(np.concatenate(bulk_vals)), _mean_stderr(np.concatenate(all_vals)))
