"""Adversarial instances for water-filling and the identities behind them.

Vertex layout of the layered hard instance with ``k`` vertices per side and
``m`` groups (1-based ``t``, ``i``):

    u_{t,i} -> (t-1)*k + (i-1)
    v_{t,i} -> k*m + (t-1)*k + (i-1)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import NonContraction, ParseError, QuadratureFailure, SizeOverflow
from .instance import Instance, _canonical_edges, _validated, instance_from_deadlines, opt_bipartite
from .special import C, eval_h, eval_h_inv, eval_tau, f_ode_residual
from .waterfill import GainFunction, achieved_ratio, linear_gain, waterfill_steps

MAX_EDGES = 25_000_000
MAX_GENERAL_VERTICES = 2_000_000
FLOOR_GUARD = 1e-9  # absorbs rounding when k*h(.) lands on an integer
DUMMY_BUDGET_CONSTANT = 2


@dataclass
class ResidualReport:
    identity: str
    grid: int
    max_residual: float
    tolerance: float
    value: float | None = None
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.max_residual < self.tolerance)

    def to_dict(self) -> dict:
        d = {"identity": self.identity, "grid": self.grid,
             "max_residual": self.max_residual, "pass": self.passed}
        if self.value is not None:
            d["value"] = self.value
        return d


def _quad(func, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            res = quad(func, a, b, epsabs=1e-11, epsrel=1e-10, limit=200, full_output=1)
        except IntegrationWarning as exc:
            raise QuadratureFailure(f"quadrature on [{a}, {b}] did not converge: {exc}") from exc
    if len(res) > 3:
        raise QuadratureFailure(f"quadrature on [{a}, {b}] did not converge: {res[3]}")
    return res[0]


def _flow_integrand(y):
    return (1.0 - eval_tau(y)) / (1.0 - y + eval_h(y))


def verify_lemma3(grid_size: int = 200, tol: float = 1e-6) -> list[ResidualReport]:
    """Quadrature checks of the three level-profile identities.

    (i)   int_0^x (1 - tau)/(1 - y + h) dy = c - tau(x) on an x-grid;
    (ii)  int_0^1 tau = 1 - c;
    (iii) int_0^1 1/(1 - y + h) dy < 1 (the value is reported).
    """
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    xs = np.linspace(0.0, 1.0, grid_size)
    pieces = [_quad(_flow_integrand, a, b) for a, b in zip(xs[:-1], xs[1:])]
    lhs = np.concatenate([[0.0], np.cumsum(pieces)])
    rhs = C - eval_tau(xs)
    first = ResidualReport("flow-integral", grid_size, float(np.max(np.abs(lhs - rhs))), tol)
    tau_int = _quad(eval_tau, 0.0, 1.0)
    second = ResidualReport("tau-integral", 1, abs(tau_int - (1.0 - C)), tol, value=tau_int)
    inflow = _quad(lambda y: 1.0 / (1.0 - y + eval_h(y)), 0.0, 1.0)
    # strict inequality: the "residual" is the value itself, compared against 1
    third = ResidualReport("inflow-below-one", 1, inflow, 1.0, value=inflow)
    return [first, second, third]


def verify_f_ode(grid_size: int = 10_000, margin: float = 1e-6, tol: float = 1e-8) -> ResidualReport:
    """Max |1 - f(phi) + f(c - phi) + (1 - phi) f'(phi)| with f' in closed form."""
    phi = np.linspace(margin, C - margin, grid_size)
    res = np.abs(f_ode_residual(phi))
    return ResidualReport("f-ode", grid_size, float(res.max()), tol)


def involution_residual(grid_size: int = 1000) -> float:
    """max |tau(h(x)) + tau(x) - c| over a grid of [0, 1]."""
    x = np.linspace(0.0, 1.0, grid_size)
    return float(np.max(np.abs(eval_tau(eval_h(x)) + eval_tau(x) - C)))


# ---------------------------------------------------------------------------
# the layered hard instance


def h_counts(k: int) -> np.ndarray:
    """floor(k * h((i-1)/k)) for i = 1..k: how many of U_{t+1} each u_{t,i} sees."""
    vals = k * eval_h(np.arange(k) / k)
    return np.clip(np.floor(vals + FLOOR_GUARD), 0, k).astype(np.int64)


def wf_u(k: int, t: int, i: int) -> int:
    return (t - 1) * k + (i - 1)


def wf_v(k: int, m: int, t: int, i: int) -> int:
    return k * m + (t - 1) * k + (i - 1)


def _layered_bipartition(k: int, m: int) -> np.ndarray:
    t = np.repeat(np.arange(1, m + 1), k)
    u_side = (t % 2 == 0).astype(np.int8)  # U_odd on side 0
    return np.concatenate([u_side, 1 - u_side])


def gen_wf_hard_instance(k: int, m: int, max_edges: int = MAX_EDGES) -> Instance:
    """Layered instance: upper triangles U_t -> V_t plus h-induced U_t -> U_{t+1}."""
    if k < 1 or m < 1:
        raise ValueError("k and m must be positive")
    counts = h_counts(k)
    n_edges = m * k * (k + 1) // 2 + (m - 1) * int(counts.sum())
    if n_edges > max_edges:
        raise SizeOverflow(f"k={k}, m={m} needs {n_edges} edges (limit {max_edges})")
    offsets = np.arange(m, dtype=np.int64) * k
    iu, ju = np.triu_indices(k)
    tri_u = (offsets[:, None] + iu[None, :]).ravel()
    tri_v = (k * m + offsets[:, None] + ju[None, :]).ravel()
    hi = np.repeat(np.arange(k), counts)
    hj = np.concatenate([np.arange(c) for c in counts]) if counts.sum() else np.zeros(0, np.int64)
    hoff = offsets[:-1]
    h_src = (hoff[:, None] + hi[None, :]).ravel()
    h_dst = (hoff[:, None] + k + hj[None, :]).ravel()
    edges = np.stack([np.concatenate([tri_u, h_src]), np.concatenate([tri_v, h_dst])], axis=1)
    # u deadlines in (t, i) order, then v deadlines in (t, i) order
    return instance_from_deadlines(2 * k * m, edges, np.arange(2 * k * m), _layered_bipartition(k, m))


# ---------------------------------------------------------------------------
# stationary level profile


@dataclass
class HardnessProfile:
    k: int
    a: np.ndarray
    M: np.ndarray
    p_star: np.ndarray
    iterations: int

    @property
    def ratio_k(self) -> float:
        return 1.0 - float(self.p_star.sum()) / self.k

    @property
    def row_sums(self) -> np.ndarray:
        return self.M.sum(axis=1)


def transition_matrix(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients a_j and the k x k level-transfer matrix between consecutive groups."""
    j = np.arange(1, k + 1)
    a = 1.0 / (k - j + 1 + h_counts(k))
    bound = np.floor(k * eval_h_inv(j / k) + 1.0 + FLOOR_GUARD)
    bound = np.clip(bound, 0, k).astype(np.int64)
    M = np.where(j[None, :] <= bound[:, None], a[None, :], 0.0)
    return a, M


def stationary_profile(k: int, tol: float = 1e-12, max_iter: int = 100_000) -> HardnessProfile:
    """Fixed point of p -> M (1 - p), iterated from p = 0."""
    if k < 2:
        raise ValueError("k must be at least 2")
    a, M = transition_matrix(k)
    worst = float(M.sum(axis=1).max())
    if worst >= 1.0:
        raise NonContraction(f"row sum {worst} >= 1 for k={k}")
    p = np.zeros(k)
    for it in range(1, max_iter + 1):
        nxt = M @ (1.0 - p)
        if np.max(np.abs(nxt - p)) < tol:
            p = nxt
            break
        p = nxt
    return HardnessProfile(k, a, M, p, it)


# ---------------------------------------------------------------------------
# running water-filling on the hard instance


@dataclass
class HardRun:
    k: int
    m: int
    ratio: float
    opt: int
    full_after_deadline: bool  # x_{u_{t,i}} = 1 for every t < m
    max_passive_u: float  # max_{t,i} p_{u_{t,i}}
    passive: np.ndarray = field(repr=False)  # (m, k) passive levels of U
    partner_level: np.ndarray = field(repr=False)  # (m, k) x_{v_{t,i}} right after u_{t,i}'s deadline


def run_hard_instance(k: int, m: int, gain: GainFunction | None = None, tol: float = 1e-9) -> HardRun:
    inst = gen_wf_hard_instance(k, m)
    gain = gain or linear_gain()
    n_u = k * m
    partner = np.zeros(n_u)
    after = np.zeros(n_u)
    out = None
    for u, out in waterfill_steps(inst, gain, keep_log=False):
        if u < n_u:
            partner[u] = out.x[n_u + u]
            after[u] = out.x[u]
    opt = opt_bipartite(inst).value
    ratio = achieved_ratio(out, inst, opt)
    bulk = after[: k * (m - 1)]
    full = bool(np.all(np.abs(bulk - 1.0) <= tol))
    passive = out.p[:n_u].reshape(m, k)
    return HardRun(k, m, ratio, opt, full, float(passive.max()), passive, partner.reshape(m, k))


def ratio_on_hard_instance(k: int, m: int, gain: GainFunction | None = None) -> float:
    return run_hard_instance(k, m, gain).ratio


# ---------------------------------------------------------------------------
# identity randomization and edge-arrival traces


def random_relabel(instance: Instance, seed) -> tuple[Instance, np.ndarray]:
    """Shuffle vertex identities within each deadline's available-neighbor set.

    Deadlines are processed in order; the not-yet-relabeled available
    neighbors of each vertex are permuted uniformly among their own labels.
    Returns the isomorphic instance and ``perm`` with new id ``perm[old]``.
    """
    rng = np.random.default_rng(seed)
    perm = np.arange(instance.n)
    done = np.zeros(instance.n, dtype=bool)
    dl = instance.deadline
    for u in instance.deadline_order().tolist():
        nb = instance.neighbors(u)
        group = nb[(dl[nb] > dl[u]) & ~done[nb]]
        if len(group) > 1:
            perm[group] = rng.permutation(group)
        done[group] = True
    edges = perm[instance.edges]
    arrival = np.empty_like(instance.arrival)
    deadline = np.empty_like(instance.deadline)
    arrival[perm] = instance.arrival
    deadline[perm] = instance.deadline
    sides = None
    if instance.bipartition is not None:
        sides = np.empty_like(instance.bipartition)
        sides[perm] = instance.bipartition
    return _validated(instance.n, _canonical_edges(instance.n, edges), arrival, deadline, sides), perm


def emit_edge_arrival_trace(instance: Instance, seed=0) -> str:
    """Edge-arrival linearization: at each deadline the vertex's edges to
    available neighbors appear one by one in random order, then ``D <u>``."""
    rng = np.random.default_rng(seed)
    dl = instance.deadline
    lines = [f"eat 1 {instance.n} {instance.m}"]
    for u in instance.deadline_order().tolist():
        nb = instance.neighbors(u)
        nb = nb[dl[nb] > dl[u]]
        for w in rng.permutation(nb).tolist():
            lines.append(f"E {u} {w}")
        lines.append(f"D {u}")
    return "\n".join(lines) + "\n"


def load_trace(text: str) -> tuple[int, list[tuple]]:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0][:2] != ["eat", "1"] or len(rows[0]) != 4:
        raise ParseError("header must be 'eat 1 <n> <m>'", 1, "header")
    n, m = int(rows[0][2]), int(rows[0][3])
    out = []
    for lineno, tok in enumerate(rows[1:], start=2):
        if tok[0] == "E" and len(tok) == 3:
            out.append(("E", int(tok[1]), int(tok[2])))
        elif tok[0] == "D" and len(tok) == 2:
            out.append(("D", int(tok[1])))
        else:
            raise ParseError(f"bad trace line {' '.join(tok)!r}", lineno, "tag")
    if sum(1 for r in out if r[0] == "E") != m:
        raise ParseError("edge count does not match header", 1, "m")
    return n, out


# ---------------------------------------------------------------------------
# shifted-copies instance against arbitrary algorithms


@dataclass
class GeneralizedHardInstance:
    instance: Instance
    k: int
    m: int
    L: int
    labels: np.ndarray  # (n, 4): side (0 = u, 1 = v), t, i, l
    index: dict = field(repr=False)  # (side, t, i, l) -> vertex

    @property
    def dummy(self) -> np.ndarray:
        return self.labels[:, 3] <= 0

    @property
    def dummy_count(self) -> int:
        return int(self.dummy.sum())

    @property
    def dummy_budget(self) -> int:
        return DUMMY_BUDGET_CONSTANT * self.m * self.k ** (self.m + 1)

    def u(self, t, i, l) -> int:
        return self.index[(0, t, i, l)]

    def scaled_deadline(self, t, i, l) -> int:
        """k^2 * (k^(t-3) + i k^(t-2) + l), an integer preserving the order."""
        k = self.k
        return k ** (t - 1) + i * k ** t + l * k * k

    def check_indistinguishability(self, scope: str = "layer") -> list[int]:
        """Real vertices u_{t,i,l} whose available neighbors do NOT share one
        revealed neighborhood at u's deadline (empty list = property holds).

        ``scope="layer"`` compares revealed neighbors among layer-t u-vertices,
        the part of the neighborhood through which water reaches N(u).
        ``scope="full"`` compares every revealed neighbor; shifted members of
        the next layer already see edges into their own earlier copies, so
        this stricter form is reported as a diagnostic only.
        """
        if scope not in ("layer", "full"):
            raise ValueError("scope must be 'layer' or 'full'")
        inst = self.instance
        adj = inst.adjacency_lists()
        arr, dl = inst.arrival, inst.deadline
        is_u = self.labels[:, 0] == 0
        layer = self.labels[:, 1]
        bad = []
        for x in np.nonzero(is_u & ~self.dummy)[0].tolist():
            d, t = dl[x], layer[x]
            avail = [w for w in adj[x] if dl[w] > d]
            if scope == "layer":
                seen = {frozenset(z for z in adj[w] if arr[z] < d and is_u[z] and layer[z] == t) for w in avail}
            else:
                seen = {frozenset(z for z in adj[w] if arr[z] < d) for w in avail}
            if len(seen) > 1:
                bad.append(x)
        return bad

    def check_deadline_order(self) -> list[tuple]:
        """(t, i, l, j) where u_{t+1, j, l-k^(t-1)(j-1)} does not come after u_{t,i,l}."""
        k, dl = self.k, self.instance.deadline
        bad = []
        for (side, t, i, l), x in self.index.items():
            if side or t == self.m:
                continue
            for j in range(1, k + 1):
                y = self.index.get((0, t + 1, j, l - k ** (t - 1) * (j - 1)))
                if y is not None and dl[y] <= dl[x]:
                    bad.append((t, i, l, j))
        return bad


def _lowest_copy(k: int, t: int) -> int:
    return 2 - k ** (t - 1)


def gen_generalized_hard_instance(k: int, m: int, L: int,
                                  max_vertices: int = MAX_GENERAL_VERTICES) -> GeneralizedHardInstance:
    """``L`` interleaved copies of the layered instance, cross edges shifted by copy.

    Copy indices below 1 are dummy groups needed to complete the shifted
    cross edges of the early copies.
    """
    if k < 1 or m < 1 or L < 1:
        raise ValueError("k, m, L must be positive")
    total = sum(2 * k * (L - _lowest_copy(k, t) + 1) for t in range(1, m + 1))
    if total > max_vertices or k ** m * L > max_vertices:
        raise SizeOverflow(f"k={k}, m={m}, L={L} needs {total} vertices (limit {max_vertices})")
    labels = []
    for side in (0, 1):
        for t in range(1, m + 1):
            for l in range(_lowest_copy(k, t), L + 1):
                for i in range(1, k + 1):
                    labels.append((side, t, i, l))
    index = {lab: x for x, lab in enumerate(labels)}
    counts = h_counts(k)
    edges = []
    for (side, t, i, l), x in index.items():
        if side:
            continue
        for j in range(i, k + 1):
            edges.append((x, index[(1, t, j, l)]))
        if t < m:
            for j in range(1, counts[i - 1] + 1):
                edges.append((x, index[(0, t + 1, j, l - k ** (t - 1) * (j - 1))]))
    lab = np.array(labels, dtype=np.int64)
    side, t, i, l = lab.T
    scaled = k ** (t - 1) + i * k ** t + l * k * k
    # u deadlines by scaled d (ties by t, i, l), then every v
    order = np.lexsort((l, i, t, np.where(side == 0, scaled, 0), side))
    sides = np.where(side == 0, t % 2 == 0, t % 2 == 1).astype(np.int8)
    inst = instance_from_deadlines(len(labels), np.array(edges, dtype=np.int64), order, sides)
    return GeneralizedHardInstance(inst, k, m, L, lab, index)
