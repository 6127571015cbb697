"""Fully online matching instances: timeline, validation, file format and OPT.

Vertices are dense integers ``0..n-1``.  Every vertex has exactly one arrival
and one deadline event; the timeline is a strict total order of those ``2n``
events, stored as two step arrays (``arrival[v]``, ``deadline[v]``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import (
    BipartitionViolation,
    DuplicateEdge,
    FullyOnlineViolation,
    InstanceError,
    MissingEvent,
    NotAtDeadline,
    NotBipartite,
    ParseError,
    SelfLoop,
    TimelineError,
)

ARRIVAL = "A"
DEADLINE = "D"


class Event(NamedTuple):
    kind: str  # "A" or "D"
    vertex: int
    step: int


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable, validated fully online matching instance.

    Build through :func:`build_instance` (or the generators); the constructor
    trusts its arguments.
    """

    n: int
    edges: np.ndarray  # (E, 2) int64, rows (u, v) with u < v, sorted
    arrival: np.ndarray  # (n,) step of each vertex's arrival
    deadline: np.ndarray  # (n,) step of each vertex's deadline
    bipartition: np.ndarray | None = None  # (n,) 0/1 side flags
    # derived CSR adjacency
    indptr: np.ndarray = field(init=False, repr=False)
    nbrs: np.ndarray = field(init=False, repr=False)
    eids: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        e = self.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        ids = np.concatenate([np.arange(len(e)), np.arange(len(e))])
        order = np.lexsort((dst, src))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n), out=indptr[1:])
        for name, arr in (("indptr", indptr), ("nbrs", dst[order]), ("eids", ids[order])):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for arr in (self.edges, self.arrival, self.deadline):
            arr.flags.writeable = False
        if self.bipartition is not None:
            self.bipartition.flags.writeable = False

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> np.ndarray:
        return self.nbrs[self.indptr[v]:self.indptr[v + 1]]

    def incident(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbors of ``v`` and the ids of the connecting edges."""
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.nbrs[lo:hi], self.eids[lo:hi]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def deadline_order(self) -> np.ndarray:
        """Vertices sorted by deadline step."""
        return np.argsort(self.deadline, kind="stable")

    @property
    def timeline(self) -> list[Event]:
        events = [Event(ARRIVAL, v, int(s)) for v, s in enumerate(self.arrival)]
        events += [Event(DEADLINE, v, int(s)) for v, s in enumerate(self.deadline)]
        events.sort(key=lambda ev: ev.step)
        return events

    def adjacency_lists(self) -> list[list[int]]:
        """Plain Python neighbor lists (cheap access in per-vertex loops)."""
        cached = self.__dict__.get("_adj_lists")
        if cached is None:
            flat = self.nbrs.tolist()
            ptr = self.indptr.tolist()
            cached = [flat[ptr[v]:ptr[v + 1]] for v in range(self.n)]
            object.__setattr__(self, "_adj_lists", cached)
        return cached

    def edge_index(self) -> dict[tuple[int, int], int]:
        cached = self.__dict__.get("_edge_index")
        if cached is None:
            cached = {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges.tolist())}
            object.__setattr__(self, "_edge_index", cached)
        return cached

    def is_bipartite_marked(self) -> bool:
        return self.bipartition is not None

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        if self.n != other.n:
            return False
        if (self.bipartition is None) != (other.bipartition is None):
            return False
        same_sides = self.bipartition is None or np.array_equal(self.bipartition, other.bipartition)
        return (
            same_sides
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.arrival, other.arrival)
            and np.array_equal(self.deadline, other.deadline)
        )

    __hash__ = None


def _canonical_edges(n: int, edges) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise InstanceError(f"edges must be pairs, got shape {e.shape}")
    bad = (e < 0) | (e >= n)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise InstanceError(f"edge {tuple(e[row])} has an endpoint outside [0, {n})")
    loops = e[:, 0] == e[:, 1]
    if loops.any():
        v = int(e[np.argmax(loops), 0])
        raise SelfLoop(f"self-loop at vertex {v}")
    e = np.sort(e, axis=1)
    keys = e[:, 0] * n + e[:, 1]
    order = np.argsort(keys, kind="stable")
    e, keys = e[order], keys[order]
    dup = np.nonzero(keys[1:] == keys[:-1])[0]
    if len(dup):
        raise DuplicateEdge(f"duplicate edge {tuple(int(x) for x in e[dup[0]])}")
    return np.ascontiguousarray(e)


def _validated(n, edges, arrival, deadline, bipartition) -> Instance:
    if (arrival >= deadline).any():
        v = int(np.argmax(arrival >= deadline))
        raise TimelineError(f"vertex {v}: deadline does not follow its arrival")
    if len(edges):
        u, v = edges[:, 0], edges[:, 1]
        bad = (arrival[u] >= deadline[v]) | (arrival[v] >= deadline[u])
        if bad.any():
            i = int(np.argmax(bad))
            raise FullyOnlineViolation(
                f"edge ({int(u[i])}, {int(v[i])}): an endpoint arrives after its partner's deadline"
            )
    if bipartition is not None:
        bipartition = np.asarray(bipartition, dtype=np.int8)
        if bipartition.shape != (n,) or not np.isin(bipartition, (0, 1)).all():
            raise BipartitionViolation("bipartition must be n flags in {0, 1}")
        if len(edges):
            same = bipartition[edges[:, 0]] == bipartition[edges[:, 1]]
            if same.any():
                i = int(np.argmax(same))
                raise BipartitionViolation(f"edge {tuple(int(x) for x in edges[i])} does not cross the bipartition")
    return Instance(n, edges, arrival, deadline, bipartition)


def build_instance(n: int, edges, timeline: Iterable, bipartition=None) -> Instance:
    """Validate and build an instance.

    ``timeline`` is a sequence of ``(kind, vertex)`` pairs (or :class:`Event`)
    in order; the position of an event is its step.
    """
    if n < 0:
        raise InstanceError("vertex count must be non-negative")
    edges = _canonical_edges(n, edges)
    arrival = np.full(n, -1, dtype=np.int64)
    deadline = np.full(n, -1, dtype=np.int64)
    step = -1
    for step, ev in enumerate(timeline):
        kind, v = ev[0], int(ev[1])
        if not 0 <= v < n:
            raise InstanceError(f"event {step} refers to vertex {v} outside [0, {n})")
        if kind == ARRIVAL:
            target = arrival
        elif kind == DEADLINE:
            target = deadline
        else:
            raise InstanceError(f"event {step}: unknown kind {kind!r}")
        if target[v] >= 0:
            raise MissingEvent(f"vertex {v} has two {kind} events")
        target[v] = step
    if step + 1 != 2 * n or (arrival < 0).any() or (deadline < 0).any():
        missing = np.nonzero((arrival < 0) | (deadline < 0))[0]
        who = int(missing[0]) if len(missing) else None
        raise MissingEvent(f"every vertex needs one arrival and one deadline (first offender: {who})")
    return _validated(n, edges, arrival, deadline, bipartition)


def synthesize_timeline(n: int, edges, deadline_order: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Arrival/deadline steps when only the deadline order is prescribed.

    A vertex arrives immediately before the earliest deadline among itself and
    its neighbors.  Several arrivals before one deadline are ordered by id.
    """
    deadline_order = np.asarray(deadline_order, dtype=np.int64)
    if sorted(deadline_order.tolist()) != list(range(n)):
        raise MissingEvent("deadline order must be a permutation of the vertices")
    pos = np.empty(n, dtype=np.int64)
    pos[deadline_order] = np.arange(n)
    key = pos.copy()
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e):
        np.minimum.at(key, e[:, 0], pos[e[:, 1]])
        np.minimum.at(key, e[:, 1], pos[e[:, 0]])
    # events sorted by (slot, arrivals first, vertex id)
    slots = np.concatenate([key, pos])
    kinds = np.concatenate([np.zeros(n, np.int64), np.ones(n, np.int64)])
    verts = np.concatenate([np.arange(n), np.arange(n)])
    order = np.lexsort((verts, kinds, slots))
    steps = np.empty(2 * n, dtype=np.int64)
    steps[order] = np.arange(2 * n)
    return steps[:n].copy(), steps[n:].copy()


def instance_from_deadlines(n: int, edges, deadline_order, bipartition=None) -> Instance:
    """Build an instance from a deadline order, synthesizing arrivals."""
    edges = _canonical_edges(n, edges)
    arrival, deadline = synthesize_timeline(n, edges, deadline_order)
    return _validated(n, edges, arrival, deadline, bipartition)


def available_neighbors(instance: Instance, u: int, step: int | None = None, matched=None) -> np.ndarray:
    """Neighbors of ``u`` whose deadlines are not yet reached at ``u``'s deadline.

    ``step`` is the current timeline position (must be ``u``'s deadline when
    given).  ``matched`` is an optional boolean mask; matched vertices are
    dropped (the integral algorithm's unmatched-neighbor set).
    """
    d = instance.deadline[u]
    if step is not None and step != d:
        raise NotAtDeadline(f"vertex {u}'s deadline is step {int(d)}, not {step}")
    nb = instance.neighbors(u)
    keep = instance.deadline[nb] > d
    if matched is not None:
        keep &= ~np.asarray(matched, dtype=bool)[nb]
    return nb[keep]


# ---------------------------------------------------------------------------
# offline optimum


@dataclass(frozen=True)
class OptValue:
    value: Fraction | int
    witness: object = None  # list of edges, or {edge: Fraction}


def two_coloring(instance: Instance) -> np.ndarray | None:
    """A proper 2-coloring if the graph is bipartite, else ``None``."""
    color = np.full(instance.n, -1, dtype=np.int8)
    adj = instance.adjacency_lists()
    for s in range(instance.n):
        if color[s] >= 0:
            continue
        color[s] = 0
        stack = [s]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if color[y] < 0:
                    color[y] = 1 - color[x]
                    stack.append(y)
                elif color[y] == color[x]:
                    return None
    return color


def _max_matching(n_left: int, n_right: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Hopcroft-Karp via scipy; returns the matched column of each row or -1."""
    if len(rows) == 0:
        return np.full(n_left, -1, dtype=np.int64)
    graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_left, n_right))
    return np.asarray(maximum_bipartite_matching(graph, perm_type="column"), dtype=np.int64)


def opt_bipartite(instance: Instance) -> OptValue:
    """Maximum matching size of a bipartite instance with a witness matching."""
    sides = instance.bipartition
    if sides is None:
        sides = two_coloring(instance)
        if sides is None:
            raise NotBipartite("instance has no bipartition and contains an odd cycle")
    left = np.nonzero(sides == 0)[0]
    right = np.nonzero(sides == 1)[0]
    local = np.empty(instance.n, dtype=np.int64)
    local[left] = np.arange(len(left))
    local[right] = np.arange(len(right))
    e = instance.edges
    a, b = e[:, 0], e[:, 1]
    lft = np.where(sides[a] == 0, a, b)
    rgt = np.where(sides[a] == 0, b, a)
    match = _max_matching(len(left), len(right), local[lft], local[rgt])
    rows = np.nonzero(match >= 0)[0]
    pairs = sorted(tuple(sorted((int(left[r]), int(right[match[r]])))) for r in rows)
    return OptValue(len(pairs), pairs)


def opt_fractional_general(instance: Instance) -> OptValue:
    """Maximum fractional matching via the bipartite double cover, halved.

    The witness assigns each edge a fraction in {0, 1/2, 1}.
    """
    n = instance.n
    e = instance.edges
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    match = _max_matching(n, n, rows, cols)
    witness: dict[tuple[int, int], Fraction] = {}
    for r in np.nonzero(match >= 0)[0]:
        key = tuple(sorted((int(r), int(match[r]))))
        witness[key] = witness.get(key, Fraction(0)) + Fraction(1, 2)
    return OptValue(Fraction(int((match >= 0).sum()), 2), witness)


def opt_value(instance: Instance) -> Fraction | int:
    """Offline optimum used for ratios: integral on bipartite, fractional otherwise."""
    if instance.bipartition is not None:
        return opt_bipartite(instance).value
    return opt_fractional_general(instance).value


# ---------------------------------------------------------------------------
# text format


def serialize_instance(instance: Instance) -> str:
    lines = [f"fom 1 {instance.n} {instance.m}"]
    if instance.bipartition is not None:
        lines.append("bipartition " + "".join(map(str, instance.bipartition.tolist())))
    for ev in instance.timeline:
        lines.append(f"{ev.kind} {ev.vertex}")
    lines.extend(f"E {u} {v}" for u, v in instance.edges.tolist())
    return "\n".join(lines) + "\n"


def _int_field(tok: str, lineno: int, name: str) -> int:
    try:
        val = int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", lineno, name) from None
    if val < 0:
        raise ParseError(f"expected a non-negative integer, got {val}", lineno, name)
    return val


def load_instance(text: str) -> Instance:
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty input", 1, "header")
    lineno, head = lines[0]
    parts = head.split()
    if len(parts) != 4 or parts[0] != "fom":
        raise ParseError("header must be 'fom 1 <n> <m_edges>'", lineno, "header")
    if parts[1] != "1":
        raise ParseError(f"unsupported format version {parts[1]!r}", lineno, "version")
    n = _int_field(parts[2], lineno, "n")
    m = _int_field(parts[3], lineno, "m_edges")
    bipartition = None
    timeline: list[tuple[str, int]] = []
    edges: list[tuple[int, int]] = []
    for lineno, ln in lines[1:]:
        tok = ln.split()
        tag = tok[0]
        if tag == "bipartition":
            if bipartition is not None or timeline or edges:
                raise ParseError("bipartition line must directly follow the header", lineno, "bipartition")
            flags = "".join(tok[1:])
            if len(flags) != n or set(flags) - {"0", "1"}:
                raise ParseError(f"expected {n} flags in {{0,1}}", lineno, "bipartition")
            bipartition = np.array([int(ch) for ch in flags], dtype=np.int8)
        elif tag in (ARRIVAL, DEADLINE):
            if len(tok) != 2:
                raise ParseError(f"event line takes one vertex id: {ln!r}", lineno, tag)
            if edges:
                raise ParseError("events must precede edge lines", lineno, tag)
            timeline.append((tag, _int_field(tok[1], lineno, "vertex")))
        elif tag == "E":
            if len(tok) != 3:
                raise ParseError(f"edge line takes two vertex ids: {ln!r}", lineno, "E")
            edges.append((_int_field(tok[1], lineno, "u"), _int_field(tok[2], lineno, "v")))
        else:
            raise ParseError(f"unknown line tag {tag!r}", lineno, "tag")
    if len(edges) != m:
        raise ParseError(f"header announces {m} edges, found {len(edges)}", lines[0][0], "m_edges")
    try:
        return build_instance(n, edges, timeline, bipartition)
    except InstanceError as exc:
        raise ParseError(f"invalid instance: {exc}") from exc


# ---------------------------------------------------------------------------
# random instances


def random_instance(n: int, p: float, rng: np.random.Generator, bipartite: bool = True) -> Instance:
    """G(n, p)-style random instance with a uniformly random deadline order.

    Bipartite instances draw a random side for each vertex and keep only
    crossing pairs.
    """
    rng = np.random.default_rng(rng)
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    sides = None
    if bipartite:
        sides = rng.integers(0, 2, size=n).astype(np.int8)
        keep &= sides[iu] != sides[iv]
    edges = np.stack([iu[keep], iv[keep]], axis=1)
    return instance_from_deadlines(n, edges, rng.permutation(n), sides)
