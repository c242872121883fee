"""Closed convex feasible sets with exact Euclidean projections.

Four set families are shipped: axis-aligned boxes, Euclidean balls, scaled
probability simplices, and intersections of halfspaces.  The first three
project in closed form; halfspace intersections use Dykstra's alternating
scheme, which (unlike plain cyclic projection) converges to the Euclidean
projection itself.

All projection code is written row-wise on ``(N, n)`` arrays so that
projecting a batch gives bit-identical results to projecting each row
alone; the engines rely on this for reproducibility across batched and
serial execution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError, ProjectionConvergenceError

CONTAINS_TOL = 1e-9


def _as_batch(x, dim, who):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatchError(
            f"{who}: expected points of dimension {dim}, got array of shape {x.shape}")
    if not np.isfinite(x).all():
        raise NonFiniteError(f"{who}: input contains NaN or infinity")
    return x, squeeze


@dataclass(frozen=True)
class Box:
    """Axis-aligned box { x : lower <= x <= upper } (componentwise)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        up = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != up.shape or lo.ndim != 1:
            raise DimensionMismatchError("box bounds must be 1-d arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(up).all()):
            raise NonFiniteError("box bounds must be finite")
        if np.any(lo > up):
            raise ValueError("box is empty: some lower bound exceeds its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self):
        return self.lower.shape[0]

    def project_many(self, x):
        x, squeeze = _as_batch(x, self.dim, "Box.project")
        out = np.clip(x, self.lower, self.upper)
        return out[0] if squeeze else out

    def contains(self, x, tol=CONTAINS_TOL):
        x, _ = _as_batch(x, self.dim, "Box.contains")
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))


@dataclass(frozen=True)
class Ball:
    """Euclidean ball { x : ||x - center|| <= radius }."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not np.isfinite(c).all():
            raise NonFiniteError("ball center must be finite")
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def project_many(self, x):
        x, squeeze = _as_batch(x, self.dim, "Ball.project")
        d = x - self.center
        norms = np.linalg.norm(d, axis=1)
        # Scale only rows strictly outside; interior rows pass through exactly.
        scale = np.ones_like(norms)
        outside = norms > self.radius
        scale[outside] = self.radius / norms[outside]
        out = self.center + d * scale[:, None]
        return out[0] if squeeze else out

    def contains(self, x, tol=CONTAINS_TOL):
        x, _ = _as_batch(x, self.dim, "Ball.contains")
        return bool(np.all(np.linalg.norm(x - self.center, axis=1) <= self.radius + tol))

    def diameter(self):
        return 2.0 * self.radius

    def sample(self, rng, size):
        v = rng.standard_normal((size, self.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = self.radius * rng.random(size) ** (1.0 / self.dim)
        return self.center + v * r[:, None]


@dataclass(frozen=True)
class Simplex:
    """Scaled probability simplex { x : x >= 0, sum(x) = scale }."""

    scale: float
    dim: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"simplex scale must be positive, got {self.scale}")
        if self.dim < 1:
            raise ValueError(f"simplex dimension must be >= 1, got {self.dim}")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "dim", int(self.dim))

    def project_many(self, x):
        # Sort-and-threshold projection onto the scaled simplex (exact).
        x, squeeze = _as_batch(x, self.dim, "Simplex.project")
        n = self.dim
        u = np.sort(x, axis=1)[:, ::-1]
        css = np.cumsum(u, axis=1) - self.scale
        scope = np.arange(1, n + 1, dtype=float)
        cond = u * scope > css
        rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
        theta = css[np.arange(x.shape[0]), rho] / (rho + 1.0)
        out = np.maximum(x - theta[:, None], 0.0)
        return out[0] if squeeze else out

    def contains(self, x, tol=CONTAINS_TOL):
        x, _ = _as_batch(x, self.dim, "Simplex.contains")
        return bool(np.all(x >= -tol)
                    and np.all(np.abs(x.sum(axis=1) - self.scale) <= tol * self.dim))

    def diameter(self):
        # Farthest pair of points is a pair of vertices scale * e_i, scale * e_j.
        if self.dim == 1:
            return 0.0
        return float(self.scale * np.sqrt(2.0))

    def sample(self, rng, size):
        g = rng.standard_exponential((size, self.dim))
        return self.scale * g / g.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class Halfspaces:
    """Intersection of halfspaces { x : normals @ x <= offsets }.

    Projection runs Dykstra's alternating method until the iterate moves
    less than ``tol`` over a full sweep, and reports non-convergence past
    ``max_sweeps``.  The set may be unbounded, in which case the diameter
    is reported as infinity.
    """

    normals: np.ndarray
    offsets: np.ndarray
    tol: float = 1e-10
    max_sweeps: int = 50_000

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if a.ndim != 2 or b.ndim != 1 or a.shape[0] != b.shape[0]:
            raise DimensionMismatchError("need one offset per halfspace normal")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise NonFiniteError("halfspace data must be finite")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0):
            raise ValueError("halfspace normals must be nonzero")
        object.__setattr__(self, "normals", a)
        object.__setattr__(self, "offsets", b)
        object.__setattr__(self, "_sqnorms", norms**2)

    @property
    def dim(self):
        return self.normals.shape[1]

    def _onto_halfspace(self, j, y):
        # Rows of y projected onto halfspace j.
        viol = y @ self.normals[j] - self.offsets[j]
        step = np.maximum(viol, 0.0) / self._sqnorms[j]
        return y - step[:, None] * self.normals[j]

    def project_many(self, x):
        x, squeeze = _as_batch(x, self.dim, "Halfspaces.project")
        p = x.copy()
        corrections = [np.zeros_like(p) for _ in range(self.normals.shape[0])]
        for _ in range(self.max_sweeps):
            start = p.copy()
            for j in range(self.normals.shape[0]):
                y = p + corrections[j]
                p = self._onto_halfspace(j, y)
                corrections[j] = y - p
            if np.max(np.abs(p - start)) <= self.tol:
                # Dykstra also stalls on an empty intersection (it converges
                # to the closest pair); a stationary infeasible point means
                # there is no projection to return.
                violation = np.max(p @ self.normals.T - self.offsets)
                if violation > 1e-8:
                    raise ProjectionConvergenceError(
                        f"projection stalled {violation!r} away from "
                        "feasibility; the halfspace intersection may be empty")
                out = p
                return out[0] if squeeze else out
        raise ProjectionConvergenceError(
            f"Dykstra projection did not reach tol={self.tol} "
            f"within {self.max_sweeps} sweeps")

    def contains(self, x, tol=CONTAINS_TOL):
        x, _ = _as_batch(x, self.dim, "Halfspaces.contains")
        return bool(np.all(x @ self.normals.T <= self.offsets + tol))

    def diameter(self):
        return float("inf")


def project(feasible_set, x):
    """Euclidean projection of a single point onto the set.

    Idempotent, and returns ``x`` unchanged (up to float identity of the
    closed-form formulas) when ``x`` already lies in the set.
    """
    return feasible_set.project_many(np.asarray(x, dtype=float))


def coordinate_range(feasible_set, j):
    """Range [lo, hi] of coordinate j over the set (used for 1-d utilities)."""
    if isinstance(feasible_set, Box):
        return float(feasible_set.lower[j]), float(feasible_set.upper[j])
    if isinstance(feasible_set, Ball):
        c = feasible_set.center[j]
        return float(c - feasible_set.radius), float(c + feasible_set.radius)
    if isinstance(feasible_set, Simplex):
        return 0.0, float(feasible_set.scale)
    raise NotImplementedError(
        f"coordinate ranges not available for {type(feasible_set).__name__}")


def linear_range(feasible_set, a):
    """Range of the linear form a @ x over the set (exact per variant)."""
    a = np.asarray(a, dtype=float)
    if isinstance(feasible_set, Box):
        lo = np.where(a >= 0, feasible_set.lower, feasible_set.upper) @ a
        hi = np.where(a >= 0, feasible_set.upper, feasible_set.lower) @ a
        return float(lo), float(hi)
    if isinstance(feasible_set, Ball):
        mid = float(a @ feasible_set.center)
        half = feasible_set.radius * float(np.linalg.norm(a))
        return mid - half, mid + half
    if isinstance(feasible_set, Simplex):
        vals = feasible_set.scale * a
        return float(vals.min()), float(vals.max())
    raise NotImplementedError(
        f"linear ranges not available for {type(feasible_set).__name__}")


def farthest_distance(feasible_set, point):
    """max_{x in set} ||x - point||, exact for the bounded variants."""
    point = np.asarray(point, dtype=float)
    if isinstance(feasible_set, Box):
        gaps = np.maximum(np.abs(feasible_set.lower - point),
                          np.abs(feasible_set.upper - point))
        return float(np.linalg.norm(gaps))
    if isinstance(feasible_set, Ball):
        return float(np.linalg.norm(feasible_set.center - point) + feasible_set.radius)
    if isinstance(feasible_set, Simplex):
        # Max of a convex function over a polytope is attained at a vertex.
        verts = feasible_set.scale * np.eye(feasible_set.dim)
        return float(np.linalg.norm(verts - point, axis=1).max())
    raise NotImplementedError(
        f"farthest distance not available for {type(feasible_set).__name__}")
