"""Round-based stochastic growth of a personality-driven friendship network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .specs import SUBROUTINES, ModelSpec, realize_count

log = logging.getLogger(__name__)

_REBUILD_AFTER = 16


class NoAdmissibleCandidate(Exception):
    """Every candidate carries zero selection weight."""


class InvariantError(AssertionError):
    pass


class RoundEvent(NamedTuple):
    round: int
    subroutine: str
    node: int
    requested: int
    realized: int
    shortfall: int
    fallback: int


def weighted_select(candidates: Sequence[int], weights: Sequence[float], rng: np.random.Generator) -> int:
    """Pick one candidate with probability proportional to its weight."""
    w = np.asarray(weights, dtype=float)
    if len(w) == 0 or not np.any(w > 0):
        raise NoAdmissibleCandidate("all candidate weights are zero")
    cum = np.cumsum(w)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return candidates[min(i, len(w) - 1)]


def draw_many(weights: np.ndarray, n: int, rng: np.random.Generator, capacity=None) -> tuple[list[int], int]:
    """Successive proportional draws of positions into ``weights``.

    ``capacity`` bounds how often each position may be drawn (``None`` means
    unbounded, i.e. with replacement). Drawing stops early when every position
    is exhausted. Once all remaining positive weight is used up the rest are
    drawn uniformly from what is left; the second return value counts those.
    """
    size = len(weights)
    if n <= 0 or size == 0:
        return [], 0
    w = np.array(weights, dtype=float)
    left = None if capacity is None else np.array(capacity, dtype=np.int64)
    if left is not None:
        w[left <= 0] = 0.0
    cum = np.cumsum(w)
    total = cum[-1]
    n_open = size if left is None else int(np.count_nonzero(left > 0))
    n_positive = int(np.count_nonzero(w > 0))
    picks: list[int] = []
    fallback = 0
    rejects = 0
    while len(picks) < n and n_open > 0:
        if n_positive == 0:
            # only zero-weight positions remain
            if left is None:
                i = int(rng.integers(size))
            else:
                open_idx = np.flatnonzero(left > 0)
                i = int(open_idx[rng.integers(len(open_idx))])
            fallback += 1
        else:
            i = int(np.searchsorted(cum, rng.random() * total, side="right"))
            if i >= size:
                i = size - 1
            if left is not None and left[i] <= 0:
                rejects += 1
                if rejects >= _REBUILD_AFTER:
                    w[left <= 0] = 0.0
                    cum = np.cumsum(w)
                    total = cum[-1]
                    rejects = 0
                continue
        rejects = 0
        picks.append(i)
        if left is not None:
            left[i] -= 1
            if left[i] == 0:
                n_open -= 1
                if w[i] > 0:
                    n_positive -= 1
    return picks, fallback


@dataclass
class GraphState:
    """Evolving network with per-node personality and a degree cache.

    Simple variant stores neighbor sets; weighted variant stores
    ``{neighbor: weight}`` maps holding only strictly positive weights.
    """

    variant: str
    capacity: int
    personality: np.ndarray = field(init=False)
    degree: np.ndarray = field(init=False)
    adj: list = field(init=False, default_factory=list)
    n: int = field(init=False, default=0)
    total: int = field(init=False, default=0)
    added: int = field(init=False, default=0)
    removed: int = field(init=False, default=0)

    def __post_init__(self):
        self.personality = np.zeros(self.capacity, dtype=float)
        self.degree = np.zeros(self.capacity, dtype=float)

    @property
    def weighted(self) -> bool:
        return self.variant == "weighted"

    def add_node(self, p: float) -> int:
        if self.n == self.capacity:
            grow = max(16, self.capacity)
            self.personality = np.concatenate([self.personality, np.zeros(grow)])
            self.degree = np.concatenate([self.degree, np.zeros(grow)])
            self.capacity += grow
        i = self.n
        self.personality[i] = p
        self.degree[i] = 0.0
        self.adj.append({} if self.weighted else set())
        self.n += 1
        return i

    def add_edge(self, i: int, j: int):
        if i == j:
            raise InvariantError("self-loop")
        if self.weighted:
            self.adj[i][j] = self.adj[i].get(j, 0) + 1
            self.adj[j][i] = self.adj[j].get(i, 0) + 1
        else:
            if j in self.adj[i]:
                raise InvariantError(f"duplicate edge ({i}, {j})")
            self.adj[i].add(j)
            self.adj[j].add(i)
        self.degree[i] += 1
        self.degree[j] += 1
        self.total += 1
        self.added += 1

    def remove_edge(self, i: int, j: int):
        if self.weighted:
            w = self.adj[i].get(j, 0)
            if w <= 0:
                return False
            if w == 1:
                del self.adj[i][j]
                del self.adj[j][i]
            else:
                self.adj[i][j] = w - 1
                self.adj[j][i] = w - 1
        else:
            if j not in self.adj[i]:
                return False
            self.adj[i].discard(j)
            self.adj[j].discard(i)
        self.degree[i] -= 1
        self.degree[j] -= 1
        self.total -= 1
        self.removed += 1
        return True

    def weight(self, i: int, j: int) -> int:
        if self.weighted:
            return self.adj[i].get(j, 0)
        return int(j in self.adj[i])

    def recomputed_degrees(self) -> np.ndarray:
        if self.weighted:
            return np.array([sum(a.values()) for a in self.adj], dtype=float)
        return np.array([len(a) for a in self.adj], dtype=float)

    def edge_count(self) -> int:
        """Number of edges (simple) or total weight (weighted), recomputed from storage."""
        return int(round(self.recomputed_degrees().sum())) // 2

    def verify(self, initial_total: int | None = None, structure: bool = True):
        """Raise ``InvariantError`` if any structural invariant is broken."""
        deg = self.recomputed_degrees()
        if not np.array_equal(deg, self.degree[: self.n]):
            bad = int(np.flatnonzero(deg != self.degree[: self.n])[0])
            raise InvariantError(f"degree cache incoherent at node {bad}")
        if int(deg.sum()) != 2 * self.total:
            raise InvariantError("edge total disagrees with degree sum")
        if initial_total is not None and self.total != initial_total + self.added - self.removed:
            raise InvariantError("edge ledger does not balance")
        if not structure:
            return
        for i, nbrs in enumerate(self.adj):
            if i in nbrs:
                raise InvariantError(f"self-loop at {i}")
            if self.weighted:
                for j, w in nbrs.items():
                    if w <= 0:
                        raise InvariantError(f"nonpositive stored weight on ({i}, {j})")
                    if self.adj[j].get(i) != w:
                        raise InvariantError(f"asymmetric weight on ({i}, {j})")
            else:
                for j in nbrs:
                    if i not in self.adj[j]:
                        raise InvariantError(f"asymmetric edge ({i}, {j})")

    def edges(self) -> list[tuple[int, int, int]]:
        out = []
        for i, nbrs in enumerate(self.adj):
            for j in sorted(nbrs):
                if i < j:
                    out.append((i, j, self.weight(i, j)))
        return out


def init_state(spec: ModelSpec, rng: np.random.Generator) -> GraphState:
    """Random initial graph: ``N0`` nodes with personalities from rho and ``L0`` edges."""
    n0, l0 = spec.initial_nodes, spec.initial_edges
    state = GraphState(spec.graph_variant, capacity=n0 + spec.rounds)
    for p in spec.personality.sample(rng, size=n0):
        state.add_node(float(p))
    if spec.graph_variant == "simple":
        n_pairs = n0 * (n0 - 1) // 2
        if l0 > n_pairs:
            raise ValueError(f"cannot place {l0} edges on {n0} nodes")
        iu, ju = np.triu_indices(n0, k=1)
        for e in rng.choice(n_pairs, size=l0, replace=False):
            state.add_edge(int(iu[e]), int(ju[e]))
    else:
        for _ in range(l0):
            i, j = rng.choice(n0, size=2, replace=False)
            state.add_edge(int(i), int(j))
    state.added = 0
    return state


def _kernel_weights(kernel, state: GraphState, pool: np.ndarray, x_p: float, x_k: float) -> np.ndarray:
    w = kernel(state.personality[pool], state.degree[pool], x_p, x_k)
    return np.maximum(w, 0.0)


def subroutine_alpha(state: GraphState, spec: ModelSpec, rng: np.random.Generator, t: int = 0) -> RoundEvent:
    """Newcomer joins and attaches to existing nodes chosen by the alpha kernel."""
    p_x = float(spec.personality.sample(rng))
    n = realize_count(spec.counts[0], p_x, rng)
    pool = np.arange(state.n)
    w = _kernel_weights(spec.kernels[0], state, pool, p_x, 0.0)
    cap = None if state.weighted else np.ones(len(pool), dtype=np.int64)
    picks, fallback = draw_many(w, n, rng, cap)
    x = state.add_node(p_x)
    for i in picks:
        state.add_edge(x, int(pool[i]))
    return RoundEvent(t, "alpha", x, n, len(picks), n - len(picks), fallback)


def subroutine_beta(state: GraphState, spec: ModelSpec, rng: np.random.Generator, t: int = 0) -> RoundEvent:
    """An existing node forms edges with nodes chosen by the beta kernel."""
    x = int(rng.integers(state.n))
    p_x = float(state.personality[x])
    n = realize_count(spec.counts[1], p_x, rng)
    mask = np.ones(state.n, dtype=bool)
    mask[x] = False
    if not state.weighted and state.adj[x]:
        mask[np.fromiter(state.adj[x], dtype=np.int64)] = False
    pool = np.flatnonzero(mask)
    w = _kernel_weights(spec.kernels[1], state, pool, p_x, state.degree[x])
    cap = None if state.weighted else np.ones(len(pool), dtype=np.int64)
    picks, fallback = draw_many(w, n, rng, cap)
    for i in picks:
        state.add_edge(x, int(pool[i]))
    return RoundEvent(t, "beta", x, n, len(picks), n - len(picks), fallback)


def subroutine_gamma(state: GraphState, spec: ModelSpec, rng: np.random.Generator, t: int = 0) -> RoundEvent:
    """An existing node drops edges to neighbors chosen by the gamma kernel."""
    x = int(rng.integers(state.n))
    p_x = float(state.personality[x])
    n = realize_count(spec.counts[2], p_x, rng)
    pool = np.array(sorted(state.adj[x]), dtype=np.int64)
    w = _kernel_weights(spec.kernels[2], state, pool, p_x, state.degree[x])
    if state.weighted:
        cap = np.array([state.adj[x][j] for j in pool], dtype=np.int64)
    else:
        cap = np.ones(len(pool), dtype=np.int64)
    picks, fallback = draw_many(w, n, rng, cap)
    for i in picks:
        state.remove_edge(x, int(pool[i]))
    return RoundEvent(t, "gamma", x, n, len(picks), n - len(picks), fallback)


_STEPS = {"alpha": subroutine_alpha, "beta": subroutine_beta, "gamma": subroutine_gamma}


@dataclass
class RunResult:
    state: GraphState
    personality: np.ndarray
    degree: np.ndarray
    events: list[RoundEvent]
    summary: dict


def summarize(events: Sequence[RoundEvent]) -> dict:
    out = {name: {"rounds": 0, "requested": 0, "realized": 0, "shortfall": 0, "fallback": 0} for name in SUBROUTINES}
    for ev in events:
        s = out[ev.subroutine]
        s["rounds"] += 1
        s["requested"] += ev.requested
        s["realized"] += ev.realized
        s["shortfall"] += ev.shortfall
        s["fallback"] += ev.fallback
    return out


def run(spec: ModelSpec, rng: np.random.Generator, *, check_every: int = 0, rounds: int | None = None) -> RunResult:
    """Execute ``spec.rounds`` rounds (or ``rounds``) from a fresh random initial graph.

    ``check_every > 0`` verifies the invariants every that many rounds and at the end.
    """
    T = spec.rounds if rounds is None else rounds
    state = init_state(spec, rng)
    initial_total = state.total
    rates = np.asarray(spec.rates)
    events: list[RoundEvent] = []
    choices = rng.choice(3, size=T, p=rates / rates.sum()) if T else np.zeros(0, dtype=int)
    for t in range(1, T + 1):
        name = SUBROUTINES[choices[t - 1]]
        events.append(_STEPS[name](state, spec, rng, t))
        if check_every and t % check_every == 0:
            state.verify(initial_total, structure=(t % (check_every * 10) == 0))
    if check_every:
        state.verify(initial_total)
    summary = summarize(events)
    summary["edges_added"] = state.added
    summary["edges_removed"] = state.removed
    summary["final_nodes"] = state.n
    summary["final_edges"] = state.total
    fallbacks = sum(summary[s]["fallback"] for s in SUBROUTINES)
    if fallbacks:
        log.warning("%d selections fell back to uniform choice (all kernel weights zero)", fallbacks)
    return RunResult(
        state=state,
        personality=state.personality[: state.n].copy(),
        degree=state.degree[: state.n].copy(),
        events=events,
        summary=summary,
    )


@dataclass
class SampleSet:
    """Final-round (personality, degree) pairs pooled across runs."""

    run_id: np.ndarray
    node_id: np.ndarray
    personality: np.ndarray
    degree: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.personality)

    @classmethod
    def from_results(cls, results: Sequence[RunResult], metadata: dict | None = None) -> "SampleSet":
        run_id = np.concatenate([np.full(len(r.personality), i, dtype=np.int64) for i, r in enumerate(results)])
        node_id = np.concatenate([np.arange(len(r.personality), dtype=np.int64) for r in results])
        return cls(
            run_id=run_id,
            node_id=node_id,
            personality=np.concatenate([r.personality for r in results]),
            degree=np.concatenate([r.degree for r in results]),
            metadata=dict(metadata or {}),
        )

    @classmethod
    def from_arrays(cls, personality, degree, metadata: dict | None = None) -> "SampleSet":
        personality = np.asarray(personality, dtype=float)
        return cls(
            run_id=np.zeros(len(personality), dtype=np.int64),
            node_id=np.arange(len(personality), dtype=np.int64),
            personality=personality,
            degree=np.asarray(degree, dtype=float),
            metadata=dict(metadata or {}),
        )

    def select(self, mask) -> "SampleSet":
        return SampleSet(self.run_id[mask], self.node_id[mask], self.personality[mask], self.degree[mask], dict(self.metadata))
