"""Color laws, random colorings on finite windows and the translation action."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .errors import DomainError, EmptySet, OutOfWindow, ResourceLimit, Unsupported
from .geometry import FiniteSubset, Group, GroupElement, ball, r_boundary
from .stepfn import StepFunction

ENUMERATION_CAP = 2 ** 20
DYADIC_DEPTH = 30


@dataclass(frozen=True)
class ColorDistribution:
    """Single-site color law: a finite pmf or the dyadic uniform law on [0, 1)."""

    kind: str
    support: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind == "pmf":
            s = np.asarray(self.support, float)
            w = np.asarray(self.weights, float)
            if s.size == 0 or s.size != w.size:
                raise DomainError("support and weights must be nonempty and equally long")
            if not np.all(np.diff(s) > 0):
                raise DomainError("support must be strictly sorted")
            if not np.all(w > 0) or abs(w.sum() - 1) > 1e-12:
                raise DomainError("weights must be positive and sum to 1")
        elif self.kind != "uniform":
            raise DomainError(f"unknown color law {self.kind!r}")

    @classmethod
    def pmf(cls, support: Sequence[float], weights: Sequence[float]) -> "ColorDistribution":
        return cls("pmf", tuple(float(v) for v in support), tuple(float(w) for w in weights))

    @classmethod
    def bernoulli(cls, p: float = 0.5) -> "ColorDistribution":
        if p <= 0:
            return cls.atom(0.0)
        if p >= 1:
            return cls.atom(1.0)
        return cls.pmf((0.0, 1.0), (1.0 - p, p))

    @classmethod
    def atom(cls, a: float) -> "ColorDistribution":
        return cls.pmf((a,), (1.0,))

    @classmethod
    def uniform(cls) -> "ColorDistribution":
        return cls("uniform")

    @property
    def is_finite(self) -> bool:
        return self.kind == "pmf"

    def quantile(self, h: np.ndarray) -> np.ndarray:
        """Map uint64 hashes to colors."""
        if self.kind == "uniform":
            return rng.dyadic(h, DYADIC_DEPTH)
        u = rng.uniform53(h)
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        return np.asarray(self.support)[np.searchsorted(cum, u, side="right")]

    def cdf(self) -> StepFunction:
        if self.kind != "pmf":
            raise Unsupported("the dyadic uniform law has 2^30 atoms; use uniform_cdf_distance")
        return StepFunction.from_jumps(self.support, self.weights)

    def cdf_at(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.kind == "uniform":
            return np.clip(np.floor(x * 2 ** DYADIC_DEPTH + 1) / 2 ** DYADIC_DEPTH, 0.0, 1.0)
        return self.cdf()(x)

    def to_json(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "depth": DYADIC_DEPTH}
        return {"kind": "pmf", "support": list(self.support), "weights": list(self.weights)}

    @classmethod
    def from_json(cls, doc: dict) -> "ColorDistribution":
        if doc["kind"] == "uniform":
            return cls.uniform()
        if doc["kind"] == "bernoulli":
            return cls.bernoulli(doc.get("p", 0.5))
        if doc["kind"] == "atom":
            return cls.atom(doc["value"])
        return cls.pmf(doc["support"], doc["weights"])


@dataclass(frozen=True)
class RandomModel:
    """Color law plus dependence structure.

    ``product``: i.i.d. colors.  ``block``: the color at ``g`` aggregates a
    hidden i.i.d. field over the ball ``B_rho * g`` (``max``, or the mean
    quantized back onto the law's support); correlation length ``2*rho``.
    """

    law: ColorDistribution
    dependence: str = "product"
    rho: int = 0
    aggregator: str = "max"

    def __post_init__(self):
        if self.dependence not in ("product", "block"):
            raise DomainError(f"unknown dependence {self.dependence!r}")
        if self.dependence == "block":
            if self.rho < 1:
                raise DomainError("block dependence needs rho >= 1")
            if self.aggregator not in ("max", "mean"):
                raise DomainError(f"unknown aggregator {self.aggregator!r}")

    @property
    def r(self) -> int:
        return 0 if self.dependence == "product" else 2 * self.rho

    @property
    def is_product(self) -> bool:
        return self.dependence == "product"

    def to_json(self) -> dict:
        out = {"law": self.law.to_json(), "dependence": self.dependence, "r": self.r}
        if self.dependence == "block":
            out.update(rho=self.rho, aggregator=self.aggregator)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "RandomModel":
        return cls(ColorDistribution.from_json(doc["law"]), doc.get("dependence", "product"),
                   int(doc.get("rho", 0)), doc.get("aggregator", "max"))


class Coloring:
    """Colors on a finite window, aligned with the window's canonical order."""

    __slots__ = ("window", "values")

    def __init__(self, window: FiniteSubset, values):
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        if v.size != len(window):
            raise DomainError("one value per window element is required")
        self.window = window
        self.values = v

    def __getitem__(self, g):
        try:
            return float(self.values[self.window.index[g]])
        except KeyError:
            raise OutOfWindow(f"{g!r} not in the coloring window") from None

    def as_dict(self) -> dict:
        return dict(zip(self.window.elements, self.values.tolist()))

    def values_on(self, lam: FiniteSubset) -> np.ndarray:
        idx = self.window.index
        try:
            pos = np.fromiter((idx[g] for g in lam.elements), dtype=np.int64, count=len(lam))
        except KeyError as exc:
            raise OutOfWindow(f"{exc.args[0]!r} not in the coloring window") from None
        return self.values[pos]

    def __eq__(self, other):
        return (isinstance(other, Coloring) and self.window == other.window
                and np.array_equal(self.values, other.values))

    def __len__(self):
        return len(self.window)

    def to_csv(self) -> str:
        g = self.window.group
        rows = ["element,value"]
        for x, v in zip(self.window.elements, self.values.tolist()):
            rows.append(f"\"{g.element_to_json(x)}\",{v!r}")
        return "\n".join(rows) + "\n"


def _hidden(model: RandomModel, group: Group, elements, seed) -> np.ndarray:
    return model.law.quantile(rng.element_hashes(group, elements, seed, tags=(1,)))


def _quantize(law: ColorDistribution, x: np.ndarray) -> np.ndarray:
    if law.kind == "uniform":
        return np.floor(x * 2 ** DYADIC_DEPTH) / 2 ** DYADIC_DEPTH
    s = np.asarray(law.support)
    j = np.clip(np.searchsorted(s, x), 1, s.size - 1) if s.size > 1 else np.zeros(x.shape, int)
    if s.size == 1:
        return np.full(x.shape, s[0])
    left, right = s[j - 1], s[j]
    return np.where(x - left <= right - x, left, right)


def _aggregate(model: RandomModel, vals: np.ndarray) -> np.ndarray:
    if model.aggregator == "max":
        return vals.max(axis=-1)
    return _quantize(model.law, vals.mean(axis=-1))


def sample_coloring(model: RandomModel, window: FiniteSubset, seed: int) -> Coloring:
    """Color at ``g`` is a pure function of ``(seed, g)`` (product) or of the
    hidden values on ``B_rho * g`` (block)."""
    if len(window) == 0:
        raise EmptySet("window must be nonempty")
    g = window.group
    if model.is_product:
        h = rng.element_hashes(g, window.elements, seed)
        return Coloring(window, model.law.quantile(h))
    B = ball(g, model.rho).elements
    mul = g.mul
    hidden_pts = [mul(b, x) for x in window.elements for b in B]
    hv = _hidden(model, g, hidden_pts, seed).reshape(len(window), len(B))
    return Coloring(window, _aggregate(model, hv))


def sample_many(model: RandomModel, window: FiniteSubset, seeds: Sequence[int]) -> np.ndarray:
    """Stack of colorings (one row per seed), vectorized for product models."""
    if model.is_product:
        g = window.group
        cols, mask = g.key_columns(window.elements)
        rows = [model.law.quantile(rng.fold(s, (), cols, mask)) for s in seeds]
        return np.asarray(rows).reshape(len(seeds), len(window))
    return np.asarray([sample_coloring(model, window, s).values for s in seeds])


def sample_iid_block(model: RandomModel, size: int, count: int, seed: int) -> np.ndarray:
    """``count`` independent window configurations of ``size`` product-law sites,
    drawn from a single counter stream (row ``i``, column ``j`` keyed by ``(seed, i, j)``)."""
    if not model.is_product:
        raise Unsupported("i.i.d. window draws need a product model")
    ii, jj = np.meshgrid(np.arange(count), np.arange(size), indexing="ij")
    cols = np.stack([ii.ravel(), jj.ravel()], axis=1)
    h = rng.fold(seed, (2,), cols)
    return model.law.quantile(h).reshape(count, size)


def translate_coloring(omega: Coloring, g, window: FiniteSubset | None = None) -> Coloring:
    """``(tau_g omega)_x = omega_{x g}`` on ``omega.window * g^{-1}`` (or a requested window)."""
    grp = omega.window.group
    if isinstance(g, GroupElement):
        g = g.nf
    mul = grp.mul
    if window is None:
        gi = grp.inv(g)
        window = FiniteSubset(grp, (mul(x, gi) for x in omega.window.elements))
    idx = omega.window.index
    try:
        pos = np.fromiter((idx[mul(x, g)] for x in window.elements), dtype=np.int64,
                          count=len(window))
    except KeyError as exc:
        raise OutOfWindow(f"{exc.args[0]!r} outside the coloring window") from None
    return Coloring(window, omega.values[pos])


def restrict(omega: Coloring, lam: FiniteSubset) -> Coloring:
    if lam == omega.window:
        return omega
    return Coloring(lam, omega.values_on(lam))


def marginal_cdf(model: RandomModel, group: Group | None = None) -> StepFunction:
    """Exact single-site distribution function of the color at the identity."""
    if model.is_product:
        return model.law.cdf()
    if model.aggregator == "max" and model.law.is_finite:
        if group is None:
            raise DomainError("block models need the group to size the hidden ball")
        m = len(ball(group, model.rho))
        F = model.law.cdf()
        return StepFunction(F.breakpoints, np.asarray(F.values) ** m)
    raise Unsupported("no closed form for this aggregator; use marginal_cdf_mc")


def marginal_cdf_mc(model: RandomModel, group: Group, n: int, seed: int):
    """Monte Carlo marginal distribution function with the per-level standard error."""
    g = group
    vals = []
    ident = FiniteSubset(g, [g.identity])
    for k in range(n):
        vals.append(sample_coloring(model, ident, rng.derive_seed(seed, k)).values[0])
    vals = np.asarray(vals)
    F = StepFunction.from_jumps(vals, 1.0 / n)
    p = np.asarray(F.values)
    stderr = float(np.max(np.sqrt(p * (1 - p) / n)))
    return F, stderr


def enumerate_window_arrays(model: RandomModel, lam: FiniteSubset,
                            cap: int = ENUMERATION_CAP) -> tuple[np.ndarray, np.ndarray]:
    """All colorings of ``lam`` as a matrix (one row per configuration) plus weights.

    Block models enumerate the hidden field on ``B_rho * lam`` and push it forward.
    """
    law = model.law
    if not law.is_finite:
        raise Unsupported("exact enumeration needs a finite color law")
    s = len(law.support)
    g = lam.group
    if model.is_product:
        sites = len(lam)
    else:
        hidden = lam.union(r_boundary(lam, model.rho))
        sites = len(hidden)
    if s ** sites > cap:
        raise ResourceLimit(f"{s}^{sites} configurations exceed the cap {cap}")
    sup = np.asarray(law.support)
    w = np.asarray(law.weights)
    combos = np.asarray(list(itertools.product(range(s), repeat=sites)), dtype=np.int64)
    combos = combos.reshape(-1, sites)
    weights = np.prod(w[combos], axis=1) if sites else np.ones(1)
    vals = sup[combos]
    if model.is_product:
        return vals, weights
    B = ball(g, model.rho).elements
    hidx = hidden.index
    mul = g.mul
    pos = np.asarray([[hidx[mul(b, x)] for b in B] for x in lam.elements], dtype=np.int64)
    colors = _aggregate(model, vals[:, pos])
    return colors, weights


def enumerate_window_measure(model: RandomModel, lam: FiniteSubset,
                             cap: int = ENUMERATION_CAP) -> list:
    vals, weights = enumerate_window_arrays(model, lam, cap)
    return [(Coloring(lam, row), float(wt)) for row, wt in zip(vals, weights)]
