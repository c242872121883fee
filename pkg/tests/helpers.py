"""Independent oracles shared by the unit and acceptance suites."""

import math

import numpy as np

import incsub as isb


def brute_force_window(alpha, c_eff, c0, beta, horizon=None):
    """Exhaustive minimization of alpha C^2 T + C_0 beta^(T+1) over T >= 0.

    Kept deliberately separate from the analysis module: this is the oracle
    the closed-form-plus-local-search implementation is judged against.
    """
    if horizon is None:
        # far enough out that the geometric term is numerically dead
        horizon = int(math.log(1e-18 / max(c0, 1e-300)) / math.log(beta)) + 2
        horizon = min(max(horizon, 4), 2_000_000)
    ts = np.arange(horizon + 1)
    g = alpha * c_eff * c_eff * ts + c0 * beta ** (ts + 1.0)
    return int(np.argmin(g))  # argmin takes the first (smallest) minimizer


def geometric_envelope_holds(scheme, topology, horizon=200, tol=1e-10):
    """Exhaustive check of the product-mixing envelope up to ``horizon``."""
    m = topology.m
    rc = isb.rate_constants(scheme.uniform_eta(topology), m, topology.window)
    prod = None
    for k in range(horizon + 1):
        tm = isb.build_transition(scheme, topology.neighbors(k))
        prod = tm.entries if prod is None else prod @ tm.entries
        dev = isb.max_uniform_deviation(prod)
        if dev > rc.b * rc.beta**k + tol:
            return False, k, dev
    return True, None, None


def random_symmetric_topology(rng, max_m=8):
    """Connected random undirected graph (ring floor plus random chords)."""
    from incsub.markov import ring_edges

    m = int(rng.integers(2, max_m + 1))
    edges = set(ring_edges(m))
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() < 0.4:
                edges.add((i, j))
    return m, sorted(edges)
