"""Right-continuous step functions with exact sup-norm arithmetic.

A step function is stored as strictly increasing breakpoints ``x_1 < ... < x_k``
and values ``v_0, ..., v_k``; ``v_j`` holds on ``[x_j, x_{j+1})``, ``v_0`` on
``(-inf, x_1)``.  Canonical form drops breakpoints where the value does not
change (exact float equality, no tolerance).
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class StepFunction:
    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints: Sequence[float] = (), values: Sequence[float] = (0.0,)):
        x = np.asarray(breakpoints, dtype=np.float64).reshape(-1)
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        if v.size != x.size + 1:
            raise ValueError("need one more value than breakpoints")
        if x.size and not np.all(np.diff(x) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("breakpoints and values must be finite")
        keep = v[1:] != v[:-1]
        self.breakpoints = x[keep]
        self.values = np.concatenate([v[:1], v[1:][keep]])
        self.breakpoints.setflags(write=False)
        self.values.setflags(write=False)

    # constructors
    @classmethod
    def constant(cls, c: float = 0.0) -> "StepFunction":
        return cls((), (c,))

    @classmethod
    def unit_step(cls, at: float, height: float = 1.0) -> "StepFunction":
        return cls((at,), (0.0, height))

    @classmethod
    def from_jumps(cls, points, weights=None, base: float = 0.0) -> "StepFunction":
        """``base + sum of weights[j] * 1[points[j] <= E]``.

        Equal points are merged before accumulating, so integer weights give
        exact counts.
        """
        p = np.asarray(points, dtype=np.float64).reshape(-1)
        if p.size == 0:
            return cls.constant(base)
        w = np.ones_like(p) if weights is None else np.broadcast_to(
            np.asarray(weights, dtype=np.float64), p.shape)
        order = np.argsort(p, kind="stable")
        p, w = p[order], w[order]
        starts = np.flatnonzero(np.concatenate([[True], p[1:] != p[:-1]]))
        xs = p[starts]
        jumps = np.add.reduceat(w, starts)
        vals = base + np.cumsum(jumps)
        return cls(xs, np.concatenate([[base], vals]))

    # evaluation
    def __call__(self, E):
        return eval_step(self, E)

    def jumps(self) -> tuple[np.ndarray, np.ndarray]:
        return self.breakpoints, np.diff(self.values)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def scale(self, c: float) -> "StepFunction":
        return StepFunction(self.breakpoints, self.values * c)

    def __add__(self, other):
        return linear_combination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return linear_combination([(1.0, self), (-1.0, other)])

    def __mul__(self, c):
        return self.scale(float(c))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, StepFunction)
                and np.array_equal(self.breakpoints, other.breakpoints)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.breakpoints.tobytes(), self.values.tobytes()))

    def __repr__(self):
        return f"StepFunction(breakpoints={self.breakpoints.tolist()}, values={self.values.tolist()})"

    def to_json(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "StepFunction":
        return cls(doc["breakpoints"], doc["values"])


def eval_step(f: StepFunction, E):
    """Right-continuous evaluation; accepts scalars or arrays."""
    idx = np.searchsorted(f.breakpoints, E, side="right")
    out = f.values[idx]
    return float(out) if np.ndim(out) == 0 else out


def _merged(fs: Iterable[StepFunction]) -> np.ndarray:
    parts = [f.breakpoints for f in fs]
    if not parts:
        return np.empty(0)
    return np.unique(np.concatenate(parts))


def sup_norm_distance(f: StepFunction, g: StepFunction) -> float:
    """Exact ``sup_E |f(E) - g(E)|`` over the merged breakpoint intervals."""
    xs = _merged([f, g])
    d0 = abs(f.values[0] - g.values[0])
    if xs.size == 0:
        return float(d0)
    d = np.abs(eval_step(f, xs) - eval_step(g, xs))
    return float(max(d0, d.max()))


def linear_combination(terms: Sequence[tuple[float, StepFunction]]) -> StepFunction:
    """Pointwise ``sum c_k f_k``, evaluated interval by interval in term order."""
    terms = list(terms)
    if not terms:
        return StepFunction.constant(0.0)
    xs = _merged([f for _, f in terms])
    v0 = 0.0
    vals = np.zeros(xs.size)
    for c, f in terms:
        v0 = v0 + c * f.values[0]
        if xs.size:
            vals = vals + c * eval_step(f, xs)
    return StepFunction(xs, np.concatenate([[v0], vals]))


def mean_of(fs: Sequence[StepFunction], weights: Sequence[float] | None = None) -> StepFunction:
    """Weighted average via jump accumulation; suited to many staircases.

    With ``weights=None`` the plain average is returned.
    """
    fs = list(fs)
    if not fs:
        return StepFunction.constant(0.0)
    w = np.full(len(fs), 1.0 / len(fs)) if weights is None else np.asarray(weights, float)
    base = float(np.dot(w, [f.values[0] for f in fs]))
    pts = np.concatenate([f.breakpoints for f in fs])
    jw = np.concatenate([wi * np.diff(f.values) for wi, f in zip(w, fs)])
    return StepFunction.from_jumps(pts, jw, base=base)
