"""Randomized-order incremental engine over time-varying topologies.

At each tick one agent holds the iterate; it applies a projected noisy
subgradient step on its own component and hands the iterate to a neighbor
drawn from the current transition matrix row.  The agent sequence is a
time-varying Markov chain whose matrices are built from the instantaneous
neighbor structure by one of three weight schemes, all of which produce
doubly stochastic matrices with positive diagonals and entries bounded
away from zero.

Conventions: agents are 0-indexed; entry (i, j) of a transition matrix is
the probability of handing off from agent i to agent j.  Neighbor sets
never contain the agent itself (staying put is the diagonal mass).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (DimensionMismatchError, NonFiniteError,
                     SchemeViolationError, TopologyError)
from .noise import NoiseStream
from .streams import (BLOCK, DOMAIN_TOPOLOGY, block_generator,
                      chain_uniform_block, init_generator)
from .trace import RunTrace, record_indices
from .version import __version__

log = logging.getLogger(__name__)

_STOCHASTIC_TOL = 1e-12


# -- graphs ------------------------------------------------------------------

def ring_edges(m):
    if m < 2:
        return []
    edges = [(i, i + 1) for i in range(m - 1)]
    edges.append((0, m - 1))
    return sorted(set(edges))


def path_edges(m):
    return [(i, i + 1) for i in range(m - 1)]


def complete_edges(m):
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


def neighbors_from_edges(m, edges):
    """Symmetric neighbor sets (sorted index arrays) from an undirected edge list."""
    sets = [set() for _ in range(m)]
    for i, j in edges:
        if i == j:
            raise TopologyError(f"self-loop ({i},{i}) not allowed in a neighbor graph")
        if not (0 <= i < m and 0 <= j < m):
            raise TopologyError(f"edge ({i},{j}) outside agent range [0, {m})")
        sets[i].add(j)
        sets[j].add(i)
    return [np.array(sorted(s), dtype=int) for s in sets]


def _connected(m, edges):
    if m == 1:
        return True
    adj = neighbors_from_edges(m, edges)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == m


# -- topology sequences -------------------------------------------------------

@dataclass(frozen=True)
class StaticTopology:
    """Fixed neighbor structure; the union over any window is the graph itself."""

    m: int
    edges: tuple
    window: int = 1

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted(set(map(tuple, self.edges)))))
        object.__setattr__(self, "_neighbors", neighbors_from_edges(self.m, self.edges))

    def neighbors(self, k):
        return self._neighbors

    def max_degree(self):
        return max((len(nb) for nb in self._neighbors), default=0)

    def validate(self):
        if not _connected(self.m, self.edges):
            raise TopologyError("static topology must be a connected graph")

    @property
    def is_static(self):
        return True


@dataclass(frozen=True)
class PeriodicTopology:
    """Cycles through a fixed list of graphs; window Q must connect every
    union of Q consecutive phases."""

    m: int
    phases: tuple  # tuple of edge tuples
    window: int

    def __post_init__(self):
        phases = tuple(tuple(sorted(set(map(tuple, p)))) for p in self.phases)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "_neighbors",
                           [neighbors_from_edges(self.m, p) for p in phases])

    @property
    def period(self):
        return len(self.phases)

    def neighbors(self, k):
        return self._neighbors[k % self.period]

    def max_degree(self):
        return max((len(nb) for phase in self._neighbors for nb in phase), default=0)

    def validate(self):
        if self.window < 1:
            raise TopologyError("window must be >= 1")
        for k in range(self.period):
            union = set()
            for j in range(self.window):
                union.update(self.phases[(k + j) % self.period])
            if not _connected(self.m, union):
                raise TopologyError(
                    f"union of phases over window starting at {k} is not connected")

    @property
    def is_static(self):
        return False


@dataclass(frozen=True)
class RandomEdgeTopology:
    """Random subgraphs of a base graph with a structural connectivity floor.

    The base graph must contain a Hamiltonian ring over 0..m-1; the ring's
    edges are partitioned round-robin into ``window`` groups and group
    (k mod window) is always present at tick k, so every window's union
    contains the full ring and is connected by construction.  Every other
    base edge is included independently with ``inclusion_prob``, realized
    deterministically from ``seed`` and the tick index.
    """

    m: int
    base_edges: tuple
    inclusion_prob: float
    window: int
    seed: int = 0

    def __post_init__(self):
        base = tuple(sorted(set(map(tuple, self.base_edges))))
        ring = set(ring_edges(self.m))
        if not ring <= set(base):
            raise TopologyError("base graph must contain the agent ring 0-1-...-0")
        if not 0.0 <= self.inclusion_prob <= 1.0:
            raise TopologyError("inclusion probability must be in [0, 1]")
        if self.window < 1:
            raise TopologyError("window must be >= 1")
        object.__setattr__(self, "base_edges", base)
        ring_list = sorted(ring)
        groups = [[] for _ in range(self.window)]
        for idx, e in enumerate(ring_list):
            groups[idx % self.window].append(e)
        object.__setattr__(self, "_ring_groups", [tuple(g) for g in groups])
        object.__setattr__(self, "_optional",
                           tuple(e for e in base if e not in ring))
        object.__setattr__(self, "_draw_cache", {})

    def _inclusion_row(self, k):
        block, off = k // BLOCK, k % BLOCK
        draws = self._draw_cache.get(block)
        if draws is None:
            gen = block_generator(self.seed, DOMAIN_TOPOLOGY, block)
            draws = gen.random((BLOCK, max(len(self._optional), 1)))
            self._draw_cache.clear()  # keep only the active block
            self._draw_cache[block] = draws
        return draws[off]

    def edges_at(self, k):
        edges = list(self._ring_groups[k % self.window])
        if self._optional and self.inclusion_prob > 0:
            row = self._inclusion_row(k)
            edges.extend(e for j, e in enumerate(self._optional)
                         if row[j] < self.inclusion_prob)
        return edges

    def neighbors(self, k):
        return neighbors_from_edges(self.m, self.edges_at(k))

    def max_degree(self):
        return max((len(nb) for nb in neighbors_from_edges(self.m, self.base_edges)),
                   default=0)

    def validate(self):
        # Connectivity is structural: each window's union contains the ring.
        if self.m >= 2 and not _connected(self.m, ring_edges(self.m)):
            raise TopologyError("agent ring must be connected")

    @property
    def is_static(self):
        return False


def make_topology(kind, m, **params):
    """Build a topology sequence by name.

    kind: "static" (params: edges or graph in {"ring","path","complete"}),
    "periodic" (params: phases, window), or "random_edges" (params:
    base_edges or graph, inclusion_prob, window, seed).
    """
    named = {"ring": ring_edges, "path": path_edges, "complete": complete_edges}

    def edge_list(spec):
        if isinstance(spec, str):
            return named[spec](m)
        return [tuple(e) for e in spec]

    if kind == "static":
        topo = StaticTopology(m, edge_list(params.get("graph", params.get("edges"))))
    elif kind == "periodic":
        phases = [edge_list(p) for p in params["phases"]]
        topo = PeriodicTopology(m, tuple(map(tuple, phases)),
                                int(params.get("window", len(phases))))
    elif kind == "random_edges":
        base = edge_list(params.get("base", params.get("graph", "complete")))
        topo = RandomEdgeTopology(m, tuple(base),
                                  float(params.get("inclusion_prob", 0.5)),
                                  int(params.get("window", 1)),
                                  int(params.get("seed", 0)))
    else:
        raise TopologyError(f"unknown topology kind {kind!r}")
    topo.validate()
    return topo


# -- transition matrices ------------------------------------------------------

@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic hand-off probabilities with its scheme's entry floor."""

    entries: np.ndarray
    eta: float

    @property
    def m(self):
        return self.entries.shape[0]

    def cumulative(self):
        return np.cumsum(self.entries, axis=1)


def _check_symmetric(neighbors):
    m = len(neighbors)
    sets = [set(int(j) for j in nb) for nb in neighbors]
    for i in range(m):
        if i in sets[i]:
            raise SchemeViolationError(f"agent {i} lists itself as a neighbor")
        for j in sets[i]:
            if i not in sets[j]:
                raise SchemeViolationError(
                    f"asymmetric neighbors: {j} in N_{i} but {i} not in N_{j}")


class EqualProbability:
    """Hand off to each current neighbor with probability 1/m."""

    name = "equal"

    def matrix(self, neighbors):
        m = len(neighbors)
        p = np.zeros((m, m))
        for i, nb in enumerate(neighbors):
            p[i, nb] = 1.0 / m
            p[i, i] = 1.0 - len(nb) / m
        return p

    def eta(self, neighbors):
        return 1.0 / len(neighbors)

    def uniform_eta(self, topology):
        return 1.0 / topology.m

    def _exact_entries(self, neighbors):
        m = len(neighbors)
        inv = Fraction(1, m)
        ent = {}
        for i, nb in enumerate(neighbors):
            for j in nb:
                ent[(i, int(j))] = inv
            ent[(i, i)] = 1 - len(nb) * inv
        return ent, inv


class MinEqualNeighbor:
    """Pairwise-minimum degree weights: min(1/(|N_i|+1), 1/(|N_j|+1))."""

    name = "min_equal"

    def matrix(self, neighbors):
        m = len(neighbors)
        deg = np.array([len(nb) for nb in neighbors], dtype=float)
        p = np.zeros((m, m))
        for i, nb in enumerate(neighbors):
            if len(nb):
                w = np.minimum(1.0 / (deg[i] + 1.0), 1.0 / (deg[nb] + 1.0))
                p[i, nb] = w
                p[i, i] = 1.0 - w.sum()
            else:
                p[i, i] = 1.0
        return p

    def eta(self, neighbors):
        max_deg = max((len(nb) for nb in neighbors), default=0)
        return 1.0 / (max_deg + 1.0)

    def uniform_eta(self, topology):
        return 1.0 / (topology.max_degree() + 1.0)

    def _exact_entries(self, neighbors):
        deg = [len(nb) for nb in neighbors]
        ent = {}
        for i, nb in enumerate(neighbors):
            total = Fraction(0)
            for j in nb:
                w = min(Fraction(1, deg[i] + 1), Fraction(1, deg[int(j)] + 1))
                ent[(i, int(j))] = w
                total += w
            ent[(i, i)] = 1 - total
        eta = Fraction(1, max(deg, default=0) + 1)
        return ent, eta


class WeightedMetropolisHastings:
    """Metropolis-Hastings-style weights scaled by a per-agent factor.

    Each agent i scales the pairwise weight min(1/|N_i|, 1/|N_j|) by its
    own factor in (0, 1).  Double stochasticity requires the factors of
    neighboring agents to match; building a matrix from mismatched factors
    raises a scheme violation.  A scalar weight applies to all agents.
    """

    name = "weighted_mh"

    def __init__(self, weights):
        self.weights = weights

    def _weight_array(self, m):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim == 0:
            w = np.full(m, float(w))
        if w.shape != (m,):
            raise SchemeViolationError(
                f"need one weight per agent ({m}), got shape {w.shape}")
        if np.any(w <= 0) or np.any(w >= 1):
            raise SchemeViolationError("weights must lie strictly in (0, 1)")
        return w

    def matrix(self, neighbors):
        m = len(neighbors)
        w = self._weight_array(m)
        deg = np.array([len(nb) for nb in neighbors], dtype=float)
        safe_deg = np.maximum(deg, 1.0)
        p = np.zeros((m, m))
        for i, nb in enumerate(neighbors):
            if len(nb):
                pair = np.minimum(1.0 / safe_deg[i], 1.0 / safe_deg[nb])
                p[i, nb] = w[i] * pair
                p[i, i] = 1.0 - (w[i] * pair).sum()
            else:
                p[i, i] = 1.0
        return p

    def eta(self, neighbors):
        m = len(neighbors)
        w = self._weight_array(m)
        degs = [len(nb) for nb in neighbors if len(nb)]
        if not degs:
            return float(np.min(np.minimum(w, 1.0 - w)))
        return float(np.min(np.minimum(w, 1.0 - w)) / max(degs))

    def uniform_eta(self, topology):
        w = self._weight_array(topology.m)
        return float(np.min(np.minimum(w, 1.0 - w)) / max(topology.max_degree(), 1))

    def _exact_entries(self, neighbors):
        m = len(neighbors)
        w = self._weight_array(m)
        wf = [Fraction(x) for x in w]
        deg = [len(nb) for nb in neighbors]
        ent = {}
        for i, nb in enumerate(neighbors):
            total = Fraction(0)
            for j in nb:
                pair = min(Fraction(1, max(deg[i], 1)), Fraction(1, max(deg[int(j)], 1)))
                ent[(i, int(j))] = wf[i] * pair
                total += wf[i] * pair
            ent[(i, i)] = 1 - total
        degs = [d for d in deg if d]
        eta = min(min(x, 1 - x) for x in wf)
        if degs:
            eta = eta * Fraction(1, max(degs))
        return ent, eta


SCHEMES = {
    "equal": EqualProbability,
    "min_equal": MinEqualNeighbor,
    "weighted_mh": WeightedMetropolisHastings,
}


def make_scheme(kind, **params):
    if kind == "weighted_mh":
        return WeightedMetropolisHastings(params.get("weights", params.get("weight", 0.5)))
    if kind in SCHEMES:
        return SCHEMES[kind]()
    raise SchemeViolationError(f"unknown scheme kind {kind!r}")


def validate_transition(p, neighbors, eta, scheme=None):
    """Assert the probability-matrix contract; raises SchemeViolationError.

    Checks: entries in [0,1]; rows and columns sum to 1 within 1e-12;
    strictly positive diagonal; every positive entry at least ``eta``;
    zeros wherever the sparsity pattern demands them.  Entries within
    float rounding of the eta floor are re-checked in exact rational
    arithmetic when the scheme provides it.
    """
    m = len(neighbors)
    if p.shape != (m, m):
        raise SchemeViolationError(f"matrix shape {p.shape} does not match {m} agents")
    if np.any(p < 0) or np.any(p > 1):
        raise SchemeViolationError("entries must lie in [0, 1]")
    rows = p.sum(axis=1)
    cols = p.sum(axis=0)
    if np.max(np.abs(rows - 1.0)) > _STOCHASTIC_TOL:
        i = int(np.argmax(np.abs(rows - 1.0)))
        raise SchemeViolationError(f"row {i} sums to {rows[i]!r}, not 1")
    if np.max(np.abs(cols - 1.0)) > _STOCHASTIC_TOL:
        j = int(np.argmax(np.abs(cols - 1.0)))
        raise SchemeViolationError(
            f"column {j} sums to {cols[j]!r}, not 1 (matrix is not doubly stochastic)")
    diag = np.diag(p)
    if np.any(diag <= 0):
        i = int(np.flatnonzero(diag <= 0)[0])
        raise SchemeViolationError(f"agent {i} has non-positive self probability")
    allowed = np.zeros((m, m), dtype=bool)
    for i, nb in enumerate(neighbors):
        allowed[i, nb] = True
        allowed[i, i] = True
    if np.any(p[~allowed] != 0.0):
        bad = np.argwhere((p != 0.0) & ~allowed)[0]
        raise SchemeViolationError(
            f"entry {tuple(bad)} is positive but {bad[1]} is not a neighbor of {bad[0]}")
    positive = p > 0
    short = positive & (p < eta)
    if np.any(short):
        borderline = short & (p > eta - 1e-9)
        if scheme is not None and np.array_equal(short, borderline):
            ent, eta_exact = scheme._exact_entries(neighbors)
            for i, j in np.argwhere(short):
                if ent.get((int(i), int(j)), Fraction(0)) < eta_exact:
                    raise SchemeViolationError(
                        f"entry ({i},{j}) = {p[i, j]!r} is below the scheme floor")
        else:
            i, j = np.argwhere(short)[0]
            raise SchemeViolationError(
                f"entry ({i},{j}) = {p[i, j]!r} is below the scheme floor {eta!r}")


def build_transition(scheme, neighbors, m=None):
    """Transition matrix for the instantaneous neighbor structure.

    ``neighbors`` is one sorted index array per agent; the sets must be
    symmetric.  Returns a validated :class:`TransitionMatrix` carrying the
    scheme's analytic entry floor for that structure.
    """
    if m is not None and len(neighbors) != m:
        raise DimensionMismatchError(f"expected {m} neighbor sets, got {len(neighbors)}")
    _check_symmetric(neighbors)
    p = scheme.matrix(neighbors)
    eta = scheme.eta(neighbors)
    validate_transition(p, neighbors, eta, scheme)
    return TransitionMatrix(p, float(eta))


def sample_next_agent(transition, current, rng):
    """Draw the next agent from row ``current``; deterministic given rng state."""
    cum = transition.cumulative()[current]
    return _next_from_uniform(cum, rng.random())


def _next_from_uniform(cum_row, u):
    j = int(np.searchsorted(cum_row, u, side="right"))
    return min(j, len(cum_row) - 1)


# -- engine -------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovState:
    k: int
    x: np.ndarray
    agent: int


class _TransitionProvider:
    """Per-tick (P, cumP), cached for static and periodic sequences."""

    def __init__(self, topology, scheme, validate=True):
        self.topology = topology
        self.scheme = scheme
        self.validate = validate
        self._cache = {}
        if topology.is_static:
            self._phases = 1
        elif isinstance(topology, PeriodicTopology):
            self._phases = topology.period
        else:
            self._phases = None

    def at(self, k):
        key = 0 if self._phases == 1 else (
            k % self._phases if self._phases else k)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        neighbors = self.topology.neighbors(k)
        if self.validate:
            tm = build_transition(self.scheme, neighbors)
        else:
            tm = TransitionMatrix(self.scheme.matrix(neighbors),
                                  self.scheme.eta(neighbors))
        value = (tm.entries, tm.cumulative())
        if self._phases is not None:
            self._cache[key] = value
        return value


def markov_step(state, problem, noise_stream, schedule, topology, scheme, seed,
                provider=None):
    """Advance one tick: draw the next agent, then one projected step.

    The next agent is drawn from row ``state.agent`` of the transition
    matrix built from the topology at time k *before* the subgradient is
    evaluated, and the subgradient is evaluated at the current iterate.
    Draws replay the batch runner exactly for the same seed.
    """
    it = state.k + 1
    if provider is None:
        provider = _TransitionProvider(topology, scheme)
    _, cum = provider.at(state.k)
    u = chain_uniform_block(seed, (it - 1) // BLOCK)[(it - 1) % BLOCK]
    nxt = _next_from_uniform(cum[state.agent], u)
    alpha = schedule.step(it)
    x = state.x[None, :]
    g = problem.components[nxt].subgradient_many(x)
    if not getattr(noise_stream.model, "is_zero", False):
        g = g + noise_stream.draw(it, 0)[None, :]
    x = problem.feasible_set.project_many(x - alpha * g)
    if not np.isfinite(x).all():
        raise NonFiniteError(f"non-finite iterate at tick {it}")
    return MarkovState(it, x[0], nxt)


def run_markov(problem, noise, schedule, topology, scheme, x0, ticks, seed, *,
               s0="uniform", stride=1, tail_fraction=None, config_hash=None,
               validate=True):
    """Run one replication; see :func:`run_markov_batch`."""
    return run_markov_batch(problem, noise, schedule, topology, scheme, x0,
                            ticks, [seed], s0=s0, stride=stride,
                            tail_fraction=tail_fraction,
                            config_hash=config_hash, validate=validate)[0]


def run_markov_batch(problem, noise, schedule, topology, scheme, x0, ticks,
                     seeds, *, s0="uniform", stride=1, tail_fraction=None,
                     config_hash=None, validate=True):
    """Run ``len(seeds)`` independent replications for ``ticks`` ticks.

    The topology and scheme are validated before any tick runs: structural
    window-connectivity checks on the topology, and the full transition
    contract on every distinct matrix the run will use (static and periodic
    sequences cache these; random sequences validate each tick's matrix as
    it is built).  Validation failure aborts before the first step.

    Per-trace metadata records each agent's visit count over s(0..N).
    """
    if ticks < 0:
        raise ValueError(f"tick count must be >= 0, got {ticks}")
    m, n = problem.m, problem.n
    if topology.m != m:
        raise DimensionMismatchError(
            f"topology has {topology.m} agents but problem has {m}")
    fset = problem.feasible_set
    reps = len(seeds)

    if validate:
        topology.validate()
    provider = _TransitionProvider(topology, scheme, validate=validate)
    if validate and isinstance(topology, (StaticTopology, PeriodicTopology)):
        for k in range(1 if topology.is_static else topology.period):
            provider.at(k)

    x0 = np.asarray(x0, dtype=float)
    if not fset.contains(x0):
        log.warning("initial point outside the feasible set; projecting")
        x0 = fset.project_many(x0)
    x_batch = np.tile(x0, (reps, 1))

    if s0 == "uniform":
        agents = np.array([min(int(init_generator(s).random() * m), m - 1)
                           for s in seeds], dtype=int)
    else:
        s0 = int(s0)
        if not 0 <= s0 < m:
            raise ValueError(f"fixed initial agent {s0} outside [0, {m})")
        agents = np.full(reps, s0, dtype=int)

    recs = record_indices(ticks, stride)
    rec_positions = {k: j for j, k in enumerate(recs)}
    nrows = len(recs)
    row_f = np.empty((reps, nrows))
    row_inf = np.empty((reps, nrows))
    row_agent = np.empty((reps, nrows), dtype=int)
    witness = problem.optimum.witness
    row_dist = np.empty((reps, nrows)) if witness is not None else None

    fv = problem.f_many(x_batch)
    run_min = fv.copy()
    tail_start = None
    tail_min = None
    if tail_fraction is not None:
        tail_start = ticks - int(np.floor(ticks * tail_fraction))
        tail_min = np.full(reps, np.inf)
        if tail_start == 0:
            tail_min = fv.copy()

    visits = np.zeros((reps, m), dtype=np.int64)
    visits[np.arange(reps), agents] += 1
    filled = 0

    def record(j):
        nonlocal filled
        row_f[:, j] = fv
        row_inf[:, j] = run_min
        row_agent[:, j] = agents
        if row_dist is not None:
            row_dist[:, j] = np.linalg.norm(x_batch - witness, axis=1)
        filled = j + 1

    record(0)

    f_star = problem.optimum.f_star

    def build_traces(final_x, aborted_at=None):
        used = recs[:filled]
        alphas_col = np.array(
            [np.nan if k == 0 else schedule.step(k) for k in used])
        traces = []
        for r, seed in enumerate(seeds):
            meta = {
                "engine": "markov",
                "engine_version": __version__,
                "seed": int(seed),
                "horizon": int(ticks),
                "stride": int(stride),
                "m": m,
                "n": n,
                "problem": problem.name,
                "f_star": None if f_star is None else float(f_star),
                "final_x": [float(v) for v in final_x[r]],
                "config_hash": config_hash,
                "visit_counts": [int(v) for v in visits[r]],
            }
            if aborted_at is not None:
                meta["aborted_at"] = int(aborted_at)
            if tail_start is not None and aborted_at is None:
                meta["tail_start"] = int(tail_start)
                meta["tail_min"] = float(tail_min[r])
            traces.append(RunTrace(
                np.array(used), row_f[r, :filled].copy(),
                row_inf[r, :filled].copy(), alphas_col.copy(),
                row_agent[r, :filled].copy(),
                None if row_dist is None else row_dist[r, :filled].copy(),
                meta))
        return traces

    skip_noise = getattr(noise, "is_zero", False)
    nblocks = (ticks + BLOCK - 1) // BLOCK
    for b in range(nblocks):
        start_it = b * BLOCK + 1
        count = min(BLOCK, ticks - b * BLOCK)
        alphas = schedule.steps(start_it, count)
        uniforms = np.stack([chain_uniform_block(s, b) for s in seeds])
        eps = None
        if not skip_noise:
            eps = np.stack([noise.sample_block(s, b, 1, n) for s in seeds])
        agent_buf = np.empty((reps, count), dtype=int)
        for off in range(count):
            it = start_it + off
            k = it - 1
            _, cum = provider.at(k)
            rows = cum[agents]
            u = uniforms[:, off]
            agents = np.minimum((u[:, None] >= rows).sum(axis=1), m - 1)
            agent_buf[:, off] = agents
            x_prev = x_batch  # retained as the last finite state on abort
            try:
                g = problem.subgradient_for_agents(x_batch, agents)
                if eps is not None:
                    g = g + eps[:, off, 0, :]
                x_batch = fset.project_many(x_batch - alphas[off] * g)
                fv = problem.f_many(x_batch)
                if not np.isfinite(fv).all():
                    bad = int(np.flatnonzero(~np.isfinite(fv))[0])
                    raise NonFiniteError(
                        f"non-finite objective in replication {bad} "
                        f"(seed {seeds[bad]})")
            except NonFiniteError as exc:
                visits[:, :] += np.stack(
                    [np.bincount(agent_buf[r, :off + 1], minlength=m)
                     for r in range(reps)])
                wrapped = NonFiniteError(
                    f"tick {it}: {exc}; last finite state at tick {it - 1}")
                wrapped.partial_traces = build_traces(x_prev, aborted_at=it)
                raise wrapped from exc
            np.minimum(run_min, fv, out=run_min)
            if tail_start is not None and it >= tail_start:
                np.minimum(tail_min, fv, out=tail_min)
            j = rec_positions.get(it)
            if j is not None:
                record(j)
        for r in range(reps):
            visits[r] += np.bincount(agent_buf[r], minlength=m)

    return build_traces(x_batch)


def make_markov_noise_stream(noise, problem, seed):
    """Stream matching the batch runner's draws for one replication."""
    return NoiseStream(noise, seed, 1, problem.n)
