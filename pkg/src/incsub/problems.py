"""Sum-structured problem fixtures with certified optima.

Every fixture is a sum f = f_1 + ... + f_m of convex components over a
feasible set, together with an ``OptimumCertificate`` that records how the
optimal value was obtained: a closed form, a brute-force lattice search at
a stated resolution, or unknown.  Grid certificates are the desk-scale
oracle of record, so they are only offered for dimension <= 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CertificateError, DimensionMismatchError
from .objectives import (quadratic_distance, regression_component,
                         utility_component)
from .sets import Ball, Box, Simplex

GRID_MAX_DIM = 3
_CHUNK = 1 << 20


@dataclass(frozen=True)
class OptimumCertificate:
    """How f* was established, with a witness point when available.

    ``tolerance`` bounds f(witness) - f_star for grid certificates (derived
    from the lattice resolution and the components' subgradient bounds) and
    is a pure float-arithmetic allowance for closed forms.
    """

    f_star: Optional[float]
    witness: Optional[np.ndarray]
    method: str  # "closed_form" | "grid" | "unknown"
    tolerance: float = 0.0
    resolution: Optional[float] = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("closed_form", "grid", "unknown"):
            raise CertificateError(f"unknown certificate method {self.method!r}")
        if self.method != "unknown" and self.f_star is None:
            raise CertificateError(f"{self.method} certificate needs f_star")


@dataclass(frozen=True)
class ProblemInstance:
    """m convex components over a feasible set, plus an optimum certificate."""

    components: tuple
    feasible_set: object
    optimum: OptimumCertificate
    name: str = "problem"
    # Optional fused evaluators used by the engines; when present they are
    # the canonical forms (the generic sums are only a fallback).
    sum_evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    agent_subgradients: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if len(self.components) < 1:
            raise ValueError("a problem needs at least one component")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise DimensionMismatchError(f"components disagree on dimension: {dims}")
        (n,) = dims
        set_dim = getattr(self.feasible_set, "dim", n)
        if set_dim != n:
            raise DimensionMismatchError(
                f"feasible set dimension {set_dim} != component dimension {n}")

    @property
    def m(self):
        return len(self.components)

    @property
    def n(self):
        return self.components[0].dim

    @property
    def bounds(self):
        return np.array([c.bound for c in self.components])

    def f_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        squeeze = xs.ndim == 1
        if squeeze:
            xs = xs[None, :]
        if self.sum_evaluator is not None:
            vals = self.sum_evaluator(xs)
        else:
            vals = self.components[0].evaluate_many(xs).copy()
            for c in self.components[1:]:
                vals += c.evaluate_many(xs)
        return float(vals[0]) if squeeze else vals

    def f(self, x):
        return self.f_many(x)

    def subgradient_for_agents(self, xs, agents):
        """Per-row subgradient of component agents[r] at xs[r]."""
        if self.agent_subgradients is not None:
            return self.agent_subgradients(xs, agents)
        out = np.empty_like(xs)
        for a in np.unique(agents):
            rows = agents == a
            out[rows] = self.components[a].subgradient_many(xs[rows])
        return out

    def check_certificate(self):
        """Re-verify f(witness) ~ f_star; raises CertificateError on drift."""
        cert = self.optimum
        if cert.method == "unknown" or cert.witness is None:
            return
        val = self.f(cert.witness)
        tol = max(cert.tolerance, 1e-9 * (1.0 + abs(cert.f_star)))
        if not val - cert.f_star <= tol:
            raise CertificateError(
                f"{self.name}: f(witness)={val!r} exceeds f_star={cert.f_star!r} "
                f"by more than {tol!r}")


# -- brute-force lattice search (the desk-scale optimum oracle) --------------

def _box_lattice_axes(feasible_set, resolution):
    axes = []
    for lo, hi in zip(feasible_set.lower, feasible_set.upper):
        count = int(np.floor((hi - lo) / resolution + 1e-9)) + 1
        axes.append(lo + resolution * np.arange(count))
    return axes


def _iter_box_lattice(axes):
    sizes = [len(a) for a in axes]
    total = int(np.prod(sizes))
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        cols = []
        rem = idx
        for size, axis in zip(reversed(sizes), reversed(axes)):
            cols.append(axis[rem % size])
            rem = rem // size
        yield np.stack(cols[::-1], axis=1)


def _iter_lattice(feasible_set, resolution):
    """Chunks of lattice points covering the set (feasible points only)."""
    if isinstance(feasible_set, Box):
        yield from _iter_box_lattice(_box_lattice_axes(feasible_set, resolution))
    elif isinstance(feasible_set, Ball):
        c, r = feasible_set.center, feasible_set.radius
        box = Box(c - r, c + r)
        for chunk in _iter_box_lattice(_box_lattice_axes(box, resolution)):
            keep = np.linalg.norm(chunk - c, axis=1) <= r + 1e-12
            if keep.any():
                yield chunk[keep]
    elif isinstance(feasible_set, Simplex):
        s, n = feasible_set.scale, feasible_set.dim
        if n == 1:
            yield np.array([[s]])
            return
        count = int(np.floor(s / resolution + 1e-9)) + 1
        axis = resolution * np.arange(count)
        free = Box(np.zeros(n - 1), np.full(n - 1, s))
        for chunk in _iter_box_lattice(_box_lattice_axes(free, resolution)):
            last = s - chunk.sum(axis=1)
            keep = last >= -1e-12
            if keep.any():
                yield np.column_stack([chunk[keep], np.maximum(last[keep], 0.0)])
    else:
        raise NotImplementedError(
            f"grid search not available for {type(feasible_set).__name__}")


def grid_search(f_many, feasible_set, resolution):
    """Minimize ``f_many`` over a lattice of mesh ``resolution`` on the set.

    Returns (best value, best point).  Only supported up to dimension
    GRID_MAX_DIM; the lattice covers the set so that every feasible point
    has a feasible lattice point within resolution * dim.
    """
    dim = feasible_set.dim
    if dim > GRID_MAX_DIM:
        raise ValueError(f"grid search limited to dim <= {GRID_MAX_DIM}, got {dim}")
    best_val = np.inf
    best_x = None
    for chunk in _iter_lattice(feasible_set, resolution):
        vals = f_many(chunk)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_x = chunk[j].copy()
    if best_x is None:
        raise ValueError("lattice produced no feasible points")
    return best_val, best_x


def _grid_certificate(problem_f_many, feasible_set, resolution, c_sum, notes=None):
    val, x = grid_search(problem_f_many, feasible_set, resolution)
    tol = float(c_sum) * resolution * feasible_set.dim
    return OptimumCertificate(val, x, "grid", tolerance=tol,
                              resolution=resolution, notes=notes or {})


# -- fixtures -----------------------------------------------------------------

def make_quadratic_suite(m, n, spread, feasible_set, *, centers=None, seed=0,
                         grid_resolution=None):
    """m quadratic components ||x - c_i||^2 with centers in a ball of radius spread.

    The sum is m ||x - cbar||^2 plus a constant, so the constrained optimum
    is exactly the projection of the centroid for any convex set; Box and
    Ball (and Simplex) project in closed form.  Pass ``grid_resolution`` to
    certify by lattice search instead (dimension <= 3).
    """
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 components and dimension n >= 1")
    if centers is None:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((m, n))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        radii = spread * rng.random(m) ** (1.0 / n)
        centers = v * radii[:, None]
    centers = np.asarray(centers, dtype=float).reshape(m, n)

    comps = tuple(quadratic_distance(centers[i], feasible_set, label=f"quad_{i}")
                  for i in range(m))
    centroid = centers.mean(axis=0)
    offset = float(np.einsum("ij,ij->", centers - centroid, centers - centroid))

    def fused(xs):
        d = xs - centroid
        return m * np.einsum("ij,ij->i", d, d) + offset

    def agent_grads(xs, agents):
        return 2.0 * (xs - centers[agents])

    witness = feasible_set.project_many(centroid)
    dummy = ProblemInstance(comps, feasible_set,
                            OptimumCertificate(None, None, "unknown"),
                            sum_evaluator=fused)
    if grid_resolution is None:
        f_star = dummy.f(witness)
        cert = OptimumCertificate(f_star, witness, "closed_form",
                                  tolerance=1e-9 * (1.0 + abs(f_star)))
    else:
        cert = _grid_certificate(dummy.f_many, feasible_set, grid_resolution,
                                 sum(c.bound for c in comps))
        # The projected centroid is exact; keep whichever point is better.
        if dummy.f(witness) <= cert.f_star:
            cert = OptimumCertificate(dummy.f(witness), witness, "grid",
                                      tolerance=cert.tolerance,
                                      resolution=grid_resolution,
                                      notes={"refined_by": "projected centroid"})
    prob = ProblemInstance(comps, feasible_set, cert, name=f"quadratic_m{m}_n{n}",
                           sum_evaluator=fused, agent_subgradients=agent_grads)
    prob.check_certificate()
    return prob


def make_regression(sensor_locations, basis, feasible_set, *, samples=None,
                    x_true=None, noise_sigma=0.1, samples_per_agent=None,
                    noise_seed=0, grid_resolution=1e-3):
    """Least-squares model-fitting instance over m sensors.

    Each sensor i at location s_i holds samples r_{i,k} of the field and
    contributes f_i(x) = mean_k (r_{i,k} - basis(s_i) @ x)^2.  Samples may
    be passed explicitly (one array per agent) or synthesized from
    ``x_true`` plus Gaussian measurement noise.

    The certificate is the closed-form least-squares solution when it is
    feasible; otherwise (or when the normal matrix is rank-deficient) the
    optimum is certified by lattice search.
    """
    locations = list(sensor_locations)
    m = len(locations)
    if m < 1:
        raise ValueError("need at least one sensor")
    feats = [np.atleast_1d(np.asarray(basis(s), dtype=float)) for s in locations]
    n = feats[0].shape[0]

    if samples is None:
        if x_true is None or samples_per_agent is None:
            raise ValueError("either explicit samples or (x_true, samples_per_agent)")
        x_true = np.asarray(x_true, dtype=float)
        rng = np.random.default_rng(noise_seed)
        samples = [feats[i] @ x_true + noise_sigma * rng.standard_normal(samples_per_agent)
                   for i in range(m)]
    samples = [np.atleast_1d(np.asarray(r, dtype=float)) for r in samples]
    if len(samples) != m:
        raise ValueError(f"got {len(samples)} sample arrays for {m} sensors")
    for i, r in enumerate(samples):
        if r.size == 0:
            raise ValueError(f"sensor {i} has zero samples")

    comps = tuple(regression_component(feats[i], samples[i], feasible_set,
                                       label=f"sensor_{i}")
                  for i in range(m))
    prob_tmp = ProblemInstance(comps, feasible_set,
                               OptimumCertificate(None, None, "unknown"))

    normal = sum(np.outer(p, p) for p in feats)
    rhs = sum(float(r.mean()) * p for p, r in zip(feats, samples))
    sol, _, rank, _ = np.linalg.lstsq(normal, rhs, rcond=None)
    rank_deficient = rank < n

    notes = {"rank_deficient": True} if rank_deficient else {}
    if not rank_deficient and feasible_set.contains(sol):
        f_star = prob_tmp.f(sol)
        cert = OptimumCertificate(f_star, sol, "closed_form",
                                  tolerance=1e-9 * (1.0 + abs(f_star)), notes=notes)
    else:
        if n > GRID_MAX_DIM:
            raise ValueError(
                "closed form unavailable (infeasible or rank-deficient) and the "
                f"grid oracle is limited to dim <= {GRID_MAX_DIM}")
        cert = _grid_certificate(prob_tmp.f_many, feasible_set, grid_resolution,
                                 sum(c.bound for c in comps), notes=notes)

    prob = ProblemInstance(comps, feasible_set, cert,
                           name=f"regression_m{m}_n{n}")
    prob.check_certificate()
    return prob


def _check_concave_increasing(utility, lo, hi, rng, trials=200, tol=1e-9):
    a = rng.uniform(lo, hi, trials)
    b = rng.uniform(lo, hi, trials)
    mid = 0.5 * (a + b)
    ua = np.asarray(utility.value(a), dtype=float)
    ub = np.asarray(utility.value(b), dtype=float)
    um = np.asarray(utility.value(mid), dtype=float)
    if np.any(um + tol < 0.5 * (ua + ub)):
        raise ValueError("utility fails the midpoint concavity check")
    lo_pts = np.minimum(a, b)
    hi_pts = np.maximum(a, b)
    if np.any(np.asarray(utility.value(hi_pts), dtype=float)
              + tol < np.asarray(utility.value(lo_pts), dtype=float)):
        raise ValueError("utility fails the monotonicity check")


def make_allocation(utilities, feasible_set, *, grid_resolution=1e-3,
                    check_seed=0):
    """Total-utility maximization over per-coordinate concave rewards.

    Utility i depends only on coordinate i; the returned instance is the
    equivalent minimization with f_i(x) = -U_i(x_i).  Each utility is
    screened by random midpoint concavity and monotonicity checks on its
    coordinate range.  The optimum is certified by lattice search
    (dimension <= 3); larger instances get an "unknown" certificate.
    """
    from .sets import coordinate_range

    m = len(utilities)
    if m < 1:
        raise ValueError("need at least one utility")
    dim = getattr(feasible_set, "dim", m)
    if dim != m:
        raise DimensionMismatchError(
            f"allocation couples agent i to coordinate i: need set dimension "
            f"{m}, got {dim}")

    rng = np.random.default_rng(check_seed)
    for j, u in enumerate(utilities):
        lo, hi = coordinate_range(feasible_set, j)
        _check_concave_increasing(u, lo, hi, rng)

    comps = tuple(utility_component(u, j, m, feasible_set, label=f"utility_{j}")
                  for j, u in enumerate(utilities))
    prob_tmp = ProblemInstance(comps, feasible_set,
                               OptimumCertificate(None, None, "unknown"))

    if m <= GRID_MAX_DIM:
        cert = _grid_certificate(prob_tmp.f_many, feasible_set, grid_resolution,
                                 sum(c.bound for c in comps))
    else:
        cert = OptimumCertificate(None, None, "unknown")

    prob = ProblemInstance(comps, feasible_set, cert, name=f"allocation_m{m}")
    prob.check_certificate()
    return prob
