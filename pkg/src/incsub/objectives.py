"""Convex component objectives with exact subgradient oracles.

A ``ComponentObjective`` bundles an evaluator, a subgradient oracle, and a
claimed bound on subgradient norms over the feasible set.  The bundled
callables are trusted; the test suite checks the subgradient inequality
and the norm bound by sampling, as the contracts require.

Vectorized entry points (``evaluate_many`` / ``subgradient_many``) operate
on ``(N, n)`` batches and fall back to a row loop when no fast form was
supplied.  All shipped families provide fast forms whose row-wise results
are bit-identical to their scalar forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError
from .sets import farthest_distance, linear_range


@dataclass(frozen=True)
class ComponentObjective:
    """One agent's convex function f_i with subgradient oracle and bound C_i."""

    evaluate: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    bound: float
    dim: int
    label: str = ""
    evaluate_many_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    subgradient_many_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not self.bound >= 0:
            raise ValueError(f"subgradient bound must be >= 0, got {self.bound}")

    def evaluate_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"{self.label or 'objective'}: points of dim {self.dim} expected, "
                f"got shape {xs.shape}")
        if self.evaluate_many_fn is not None:
            return self.evaluate_many_fn(xs)
        return np.array([self.evaluate(x) for x in xs])

    def subgradient_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        if self.subgradient_many_fn is not None:
            return self.subgradient_many_fn(xs)
        return np.stack([self.subgradient(x) for x in xs])


# -- shipped families -------------------------------------------------------

def quadratic_distance(center, feasible_set=None, bound=None, label=""):
    """f(x) = ||x - center||^2 with gradient 2 (x - center).

    The norm bound is 2 * max_{x in X} ||x - center||, computed exactly for
    the bounded set variants when ``feasible_set`` is given.
    """
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if bound is None:
        if feasible_set is None:
            raise ValueError("need a feasible set (or explicit bound) to bound gradients")
        bound = 2.0 * farthest_distance(feasible_set, c)

    # scalar paths delegate to the batch forms: the engines require the two
    # to agree bit-for-bit, and reductions like einsum round differently
    def ev_many(xs):
        d = xs - c
        return np.einsum("ij,ij->i", d, d)

    def grad_many(xs):
        return 2.0 * (xs - c)

    def ev(x):
        return float(ev_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad(x):
        return grad_many(np.asarray(x, dtype=float)[None, :])[0]

    return ComponentObjective(ev, grad, float(bound), c.shape[0],
                              label or "quadratic", ev_many, grad_many)


def absolute_value(label="abs"):
    """Scalar f(x) = |x| with the subgradient convention sign(x), 0 at 0."""

    def ev_many(xs):
        return np.abs(xs[:, 0])

    def grad_many(xs):
        return np.sign(xs)

    def ev(x):
        return float(ev_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad(x):
        return grad_many(np.asarray(x, dtype=float)[None, :])[0]

    return ComponentObjective(ev, grad, 1.0, 1, label, ev_many, grad_many)


def regression_component(features, samples, feasible_set, label=""):
    """Mean squared residual of a linear model on one agent's samples.

    f(x) = mean_k (r_k - features @ x)^2, a convex quadratic.  Internally
    reduced to (features @ x - rbar)^2 + sample variance.  The norm bound
    2 ||features|| * max_{x in X} |features @ x - rbar| is exact on the
    bounded set variants.
    """
    phi = np.atleast_1d(np.asarray(features, dtype=float))
    r = np.atleast_1d(np.asarray(samples, dtype=float))
    if r.size == 0:
        raise ValueError("an agent with zero samples has no objective")
    rbar = float(r.mean())
    residual_var = float(np.mean((r - rbar) ** 2))

    lo, hi = linear_range(feasible_set, phi)
    span = max(abs(lo - rbar), abs(hi - rbar))
    bound = 2.0 * float(np.linalg.norm(phi)) * span

    def ev_many(xs):
        t = xs @ phi - rbar
        return t * t + residual_var

    def grad_many(xs):
        t = xs @ phi - rbar
        return 2.0 * t[:, None] * phi

    def ev(x):
        return float(ev_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad(x):
        return grad_many(np.asarray(x, dtype=float)[None, :])[0]

    return ComponentObjective(ev, grad, bound, phi.shape[0],
                              label or "regression", ev_many, grad_many)


# -- concave utilities for allocation problems ------------------------------

@dataclass(frozen=True)
class LogUtility:
    """U(t) = weight * log(1 + t), concave and increasing for t > -1."""

    weight: float = 1.0

    def value(self, t):
        return self.weight * np.log1p(t)

    def slope(self, t):
        return self.weight / (1.0 + t)

    def max_slope(self, lo, hi):
        return self.slope(lo)


@dataclass(frozen=True)
class SqrtUtility:
    """U(t) = sqrt(t) for t >= floor, extended linearly below.

    The raw square root has unbounded slope at 0, which breaks the bounded
    subgradient requirement on sets touching t = 0.  Below ``floor`` we use
    the tangent continuation sqrt(floor) + (t - floor) / (2 sqrt(floor)),
    which keeps the utility concave, increasing, and Lipschitz with
    constant 1 / (2 sqrt(floor)).
    """

    floor: float = 1e-4

    def __post_init__(self):
        if not self.floor > 0:
            raise ValueError("sqrt utility needs a positive smoothing floor")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        root = np.sqrt(np.maximum(t, self.floor))
        low = np.sqrt(self.floor) + (t - self.floor) / (2.0 * np.sqrt(self.floor))
        out = np.where(t >= self.floor, root, low)
        return out if out.ndim else float(out)

    def slope(self, t):
        t = np.asarray(t, dtype=float)
        out = 1.0 / (2.0 * np.sqrt(np.maximum(t, self.floor)))
        return out if out.ndim else float(out)

    def max_slope(self, lo, hi):
        return float(self.slope(lo))


@dataclass(frozen=True)
class LinearUtility:
    """U(t) = slope * t, optionally capped at a ceiling value."""

    slope_value: float
    cap: Optional[float] = None

    def __post_init__(self):
        if not self.slope_value >= 0:
            raise ValueError("linear utility slope must be nonnegative")

    def value(self, t):
        v = self.slope_value * np.asarray(t, dtype=float)
        if self.cap is not None:
            v = np.minimum(v, self.cap)
        return v if np.ndim(v) else float(v)

    def slope(self, t):
        t = np.asarray(t, dtype=float)
        s = np.full_like(t, self.slope_value, dtype=float)
        if self.cap is not None:
            s = np.where(self.slope_value * t >= self.cap, 0.0, s)
        return s if s.ndim else float(s)

    def max_slope(self, lo, hi):
        return float(self.slope_value)


def utility_component(utility, coord, dim, feasible_set, label=""):
    """Minimization component f(x) = -U(x_coord) for a concave utility U.

    The subgradient is -U'(x_coord) e_coord; its norm bound is the maximum
    slope of U over the coordinate's range on the set.
    """
    from .sets import coordinate_range

    lo, hi = coordinate_range(feasible_set, coord)
    bound = float(utility.max_slope(lo, hi))
    basis = np.zeros(dim)
    basis[coord] = 1.0

    def ev_many(xs):
        return -np.asarray(utility.value(xs[:, coord]), dtype=float)

    def grad_many(xs):
        slopes = np.asarray(utility.slope(xs[:, coord]), dtype=float)
        return -slopes[:, None] * basis

    def ev(x):
        return float(ev_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad(x):
        return grad_many(np.asarray(x, dtype=float)[None, :])[0]

    return ComponentObjective(ev, grad, bound, dim,
                              label or f"-U(x_{coord})", ev_many, grad_many)
