"""Groups, Cayley-graph metric and set calculus.

Elements are plain tuples in normal form:

* ``ZPowD(d)``: ``(x_1, ..., x_d)``
* ``Heisenberg3``: ``(x, y, z)`` with ``(x,y,z)(x',y',z') = (x+x', y+y', z+z'+x*y')``
* ``Lamplighter``: ``(lamps, pos)`` where ``lamps`` is a sorted tuple of lit positions

Edges of the Cayley graph join ``x`` and ``s*x`` for ``s`` in the generating
set, so the word metric ``d(x, y) = |x y^{-1}|`` is invariant under right
translation ``x -> x*g``.  Sets are translated on the right throughout.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (DomainError, EmptySet, InsufficientSequence, MixedGroups,
                     NonMonotoneBetas, ResourceLimit)

ELEMENT_CAP = 5_000_000

KINDS = ("ZPowD", "Heisenberg3", "Lamplighter")


class Group:
    """Descriptor of one of the implemented finitely generated groups."""

    def __init__(self, kind: str, d: int | None = None):
        if kind not in KINDS:
            raise DomainError(f"unknown group kind {kind!r}")
        if kind == "ZPowD":
            if d is None or int(d) < 1:
                raise DomainError("ZPowD needs a positive dimension")
            d = int(d)
        else:
            d = None
        self.kind = kind
        self.d = d
        self.generators = self._standard_generators()
        self._check_generators()

    # construction helpers
    @classmethod
    def zd(cls, d: int) -> "Group":
        return cls("ZPowD", d)

    @classmethod
    def heisenberg(cls) -> "Group":
        return cls("Heisenberg3")

    @classmethod
    def lamplighter(cls) -> "Group":
        return cls("Lamplighter")

    def _standard_generators(self):
        if self.kind == "ZPowD":
            gens = []
            for i in range(self.d):
                e = [0] * self.d
                e[i] = 1
                gens.append(tuple(e))
                e[i] = -1
                gens.append(tuple(e))
            return tuple(gens)
        if self.kind == "Heisenberg3":
            return ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
        # t, t^-1, a*t, (a*t)^-1 with a the lamp switch at the origin
        return (((), 1), ((), -1), ((0,), 1), ((-1,), -1))

    def _check_generators(self):
        gens = set(self.generators)
        if not gens or self.identity in gens:
            raise DomainError("generating set must be nonempty and exclude the identity")
        if {self.inv(s) for s in gens} != gens:
            raise DomainError("generating set must be symmetric")

    # group law
    @property
    def identity(self):
        if self.kind == "ZPowD":
            return (0,) * self.d
        if self.kind == "Heisenberg3":
            return (0, 0, 0)
        return ((), 0)

    def mul(self, g, h):
        if self.kind == "ZPowD":
            return tuple(a + b for a, b in zip(g, h))
        if self.kind == "Heisenberg3":
            return (g[0] + h[0], g[1] + h[1], g[2] + h[2] + g[0] * h[1])
        f, p = g
        lamps, q = h
        shifted = {x + p for x in lamps}
        return (tuple(sorted(set(f).symmetric_difference(shifted))), p + q)

    def inv(self, g):
        if self.kind == "ZPowD":
            return tuple(-a for a in g)
        if self.kind == "Heisenberg3":
            x, y, z = g
            return (-x, -y, -z + x * y)
        f, p = g
        return (tuple(x - p for x in f), -p)

    def normalize(self, raw):
        """Canonical normal form from a loosely typed value (lists, JSON)."""
        if self.kind == "ZPowD":
            if isinstance(raw, (int, np.integer)) and self.d == 1:
                return (int(raw),)
            t = tuple(int(v) for v in raw)
            if len(t) != self.d:
                raise DomainError(f"expected {self.d} coordinates, got {raw!r}")
            return t
        if self.kind == "Heisenberg3":
            t = tuple(int(v) for v in raw)
            if len(t) != 3:
                raise DomainError(f"expected a triple, got {raw!r}")
            return t
        lamps, pos = raw
        lamps = [int(v) for v in lamps]
        if len(set(lamps)) != len(lamps):
            raise DomainError("lamp positions must be distinct")
        return (tuple(sorted(lamps)), int(pos))

    def element_to_json(self, g):
        if self.kind == "Lamplighter":
            return [list(g[0]), g[1]]
        if self.kind == "ZPowD" and self.d == 1:
            return g[0]
        return list(g)

    def key_columns(self, elements: Sequence) -> tuple[np.ndarray, np.ndarray]:
        """Integer columns (and validity mask) encoding each element.

        Used to key counter-based random streams; padding columns are masked
        out so the key of an element does not depend on its neighbours.
        """
        n = len(elements)
        if self.kind != "Lamplighter":
            width = self.d if self.kind == "ZPowD" else 3
            cols = np.asarray(elements, dtype=np.int64).reshape(n, width)
            return cols, np.ones((n, width), dtype=bool)
        width = 2 + max((len(g[0]) for g in elements), default=0)
        cols = np.zeros((n, width), dtype=np.int64)
        mask = np.zeros((n, width), dtype=bool)
        for row, (lamps, pos) in enumerate(elements):
            k = len(lamps)
            cols[row, 0] = pos
            cols[row, 1] = k
            cols[row, 2:2 + k] = lamps
            mask[row, :2 + k] = True
        return cols, mask

    def word_length(self, g) -> int:
        """BFS distance from the identity (only for small elements)."""
        if self.kind == "ZPowD":
            return sum(abs(v) for v in g)
        return set_distance(FiniteSubset(self, [self.identity]), FiniteSubset(self, [g]))

    # descriptors
    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "ZPowD":
            out["d"] = self.d
        out["generators"] = [self.element_to_json(s) for s in self.generators]
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "Group":
        g = cls(doc["kind"], doc.get("d"))
        if "generators" in doc:
            gens = {g.normalize(s) for s in doc["generators"]}
            if gens != set(g.generators):
                raise DomainError("only the standard generating set is supported")
        return g

    def __eq__(self, other):
        return isinstance(other, Group) and (self.kind, self.d) == (other.kind, other.d)

    def __hash__(self):
        return hash((self.kind, self.d))

    def __repr__(self):
        return f"ZPowD({self.d})" if self.kind == "ZPowD" else self.kind


@dataclass(frozen=True)
class GroupElement:
    group: Group
    nf: tuple

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return group_op(self, other, "multiply")


def element(group: Group, raw) -> GroupElement:
    return GroupElement(group, group.normalize(raw))


class FiniteSubset:
    """Finite, duplicate-free, lexicographically sorted set of group elements."""

    __slots__ = ("group", "elements", "_members", "_index")

    def __init__(self, group: Group, elements: Iterable = ()):
        self.group = group
        self.elements = tuple(sorted(set(elements)))
        self._members = None
        self._index = None

    @classmethod
    def from_json(cls, group: Group, items) -> "FiniteSubset":
        return cls(group, (group.normalize(v) for v in items))

    def to_json(self):
        return [self.group.element_to_json(g) for g in self.elements]

    @property
    def members(self) -> frozenset:
        if self._members is None:
            self._members = frozenset(self.elements)
        return self._members

    @property
    def index(self) -> dict:
        """Element -> position in the canonical order."""
        if self._index is None:
            self._index = {g: i for i, g in enumerate(self.elements)}
        return self._index

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, g):
        return g in self.members

    def __eq__(self, other):
        return (isinstance(other, FiniteSubset) and self.group == other.group
                and self.elements == other.elements)

    def __hash__(self):
        return hash((self.group, self.elements))

    def __repr__(self):
        if len(self) <= 8:
            return f"FiniteSubset({self.group!r}, {list(self.elements)})"
        return f"FiniteSubset({self.group!r}, <{len(self)} elements>)"

    def _same(self, other: "FiniteSubset"):
        if self.group != other.group:
            raise MixedGroups(f"{self.group!r} vs {other.group!r}")

    def union(self, other):
        self._same(other)
        return FiniteSubset(self.group, self.members | other.members)

    def intersection(self, other):
        self._same(other)
        return FiniteSubset(self.group, self.members & other.members)

    def difference(self, other):
        self._same(other)
        return FiniteSubset(self.group, self.members - other.members)

    def issubset(self, other) -> bool:
        self._same(other)
        return self.members <= other.members

    __or__ = union
    __and__ = intersection
    __sub__ = difference
    __le__ = issubset


# ---------------------------------------------------------------- operations

def group_op(g: GroupElement, h: GroupElement | None = None, mode: str = "multiply") -> GroupElement:
    if mode == "inverse":
        return GroupElement(g.group, g.group.inv(g.nf))
    if mode != "multiply":
        raise DomainError(f"unknown mode {mode!r}")
    if g.group != h.group:
        raise MixedGroups(f"{g.group!r} vs {h.group!r}")
    return GroupElement(g.group, g.group.mul(g.nf, h.nf))


def _neighbours(group: Group) -> Callable:
    gens = group.generators
    mul = group.mul
    if group.kind == "ZPowD" and group.d <= 3:
        steps = gens

        def nb(x):
            return [tuple(a + b for a, b in zip(s, x)) for s in steps]
        return nb
    return lambda x: [mul(s, x) for s in gens]


def ball(group: Group, radius: int, cap: int = ELEMENT_CAP, center=None) -> FiniteSubset:
    """Closed word-metric ball ``{g : d(center, g) <= radius}``."""
    if radius < 0:
        raise DomainError("radius must be nonnegative")
    start = group.identity if center is None else center
    seen = {start}
    layer = [start]
    nb = _neighbours(group)
    for _ in range(radius):
        nxt = []
        for x in layer:
            for y in nb(x):
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if len(seen) > cap:
            raise ResourceLimit(f"ball of radius {radius} exceeds {cap} elements")
        layer = nxt
    return FiniteSubset(group, seen)


def translate_set(lam: FiniteSubset, g) -> FiniteSubset:
    """Right translate ``{x*g : x in lam}``."""
    if isinstance(g, GroupElement):
        if g.group != lam.group:
            raise MixedGroups(f"{lam.group!r} vs {g.group!r}")
        g = g.nf
    mul = lam.group.mul
    return FiniteSubset(lam.group, (mul(x, g) for x in lam.elements))


def set_product(K: FiniteSubset, lam: FiniteSubset) -> FiniteSubset:
    K._same(lam)
    mul = K.group.mul
    return FiniteSubset(K.group, (mul(k, t) for t in lam.elements for k in K.elements))


def _inner_levels(members, group: Group, r: int) -> set:
    """Points of the set at distance <= r from its complement."""
    nb = _neighbours(group)
    layer = set()
    for x in members:
        for y in nb(x):
            if y not in members:
                layer.add(y)
    found = set()
    for _ in range(r):
        nxt = set()
        for y in layer:
            for x in nb(y):
                if x in members and x not in found:
                    found.add(x)
                    nxt.add(x)
        layer = nxt
    return found


def _outer_levels(members, group: Group, r: int) -> set:
    """Points outside the set at distance <= r from it."""
    nb = _neighbours(group)
    layer = {x for x in members if any(y not in members for y in nb(x))}
    found = set()
    for _ in range(r):
        nxt = set()
        for x in layer:
            for y in nb(x):
                if y not in members and y not in found:
                    found.add(y)
                    nxt.add(y)
        layer = nxt
    return found


def r_boundary(lam: FiniteSubset, r: int) -> FiniteSubset:
    """Two-sided r-boundary: inner points within r of the complement plus
    outer points within r of the set."""
    if r < 0:
        raise DomainError("r must be nonnegative")
    if r == 0 or len(lam) == 0:
        return FiniteSubset(lam.group)
    members = lam.members
    return FiniteSubset(lam.group, _inner_levels(members, lam.group, r)
                        | _outer_levels(members, lam.group, r))


def inner_boundary(lam: FiniteSubset, r: int) -> FiniteSubset:
    if r <= 0 or len(lam) == 0:
        return FiniteSubset(lam.group)
    return FiniteSubset(lam.group, _inner_levels(lam.members, lam.group, r))


def r_interior(lam: FiniteSubset, r: int) -> FiniteSubset:
    if r < 0:
        raise DomainError("r must be nonnegative")
    if r == 0:
        return lam
    inner = _inner_levels(lam.members, lam.group, r)
    return FiniteSubset(lam.group, lam.members - inner)


def set_distance(a: FiniteSubset, b: FiniteSubset, cap: int = ELEMENT_CAP) -> int:
    if len(a) == 0 or len(b) == 0:
        raise EmptySet("set_distance needs nonempty sets")
    a._same(b)
    target = b.members
    if not a.members.isdisjoint(target):
        return 0
    nb = _neighbours(a.group)
    seen = set(a.members)
    layer = list(seen)
    dist = 0
    while layer:
        dist += 1
        nxt = []
        for x in layer:
            for y in nb(x):
                if y in target:
                    return dist
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if len(seen) > cap:
            raise ResourceLimit("distance search exceeded the element cap")
        layer = nxt
    raise AssertionError("unreachable: Cayley graphs are connected")


def folner_defect(lam: FiniteSubset, K: FiniteSubset) -> Fraction:
    """Exact ``|lam symdiff K*lam| / |lam|``."""
    if len(lam) == 0:
        raise EmptySet("folner_defect needs a nonempty set")
    prod = set_product(K, lam)
    return Fraction(len(lam.members ^ prod.members), len(lam))


def _exact(v):
    if isinstance(v, (int, np.integer, Fraction)):
        return Fraction(int(v)) if not isinstance(v, Fraction) else v
    return float(v)


def beta_prime(Q: FiniteSubset, b: Callable, r: int):
    """``max{b(Q)/|Q|, b(Q^r)/|Q|, |d^r Q|/|Q|}`` (exact when ``b`` is integral)."""
    if len(Q) == 0:
        raise EmptySet("beta_prime needs a nonempty set")
    n = len(Q)
    terms = [_exact(b(Q)) / n, _exact(b(r_interior(Q, r))) / n,
             Fraction(len(r_boundary(Q, r)), n)]
    return max(terms)


def ceil_inv_sqrt(eps) -> int:
    """Smallest ``n`` with ``n*n*eps >= 1``, i.e. ``ceil(1/sqrt(eps))`` without rounding error.

    Floats are read through their shortest decimal representation so that
    ``0.04`` means 1/25.
    """
    e = Fraction(repr(float(eps))) if not isinstance(eps, Fraction) else eps
    n = max(1, math.isqrt(int(1 / e)))
    while n * n * e < 1:
        n += 1
    while n > 1 and (n - 1) * (n - 1) * e >= 1:
        n -= 1
    return n


def beta(eps: float, betas: Sequence) -> float:
    """``beta'_1 sqrt(eps) + beta'_{ceil(1/sqrt(eps))}`` with ``betas[0] = beta'_1``."""
    if not 0 < eps < 0.1:
        raise DomainError("eps must lie in (0, 1/10)")
    n = ceil_inv_sqrt(eps)
    if len(betas) < n:
        raise InsufficientSequence(f"need {n} terms, got {len(betas)}")
    for prev, cur in zip(betas, betas[1:]):
        if cur > prev:
            raise NonMonotoneBetas("beta' sequence must be non-increasing")
    return float(betas[0]) * math.sqrt(eps) + float(betas[n - 1])


# ------------------------------------------------------------- Følner sets

def box(group: Group, n: int) -> FiniteSubset:
    if group.kind != "ZPowD":
        raise DomainError("boxes are defined for ZPowD only")
    return FiniteSubset(group, itertools.product(range(n), repeat=group.d))


def lamp_window(group: Group, n: int) -> FiniteSubset:
    """``{(B, q) : -n < q <= 0, B a subset of [q, q+n)}``, size ``n 2^n``.

    These are the inverses of the usual sets "lamps and lamplighter inside
    [0, n)", which makes them Følner for multiplication by generators on the left.
    """
    if group.kind != "Lamplighter":
        raise DomainError("lamp windows are defined for the lamplighter group only")
    out = []
    for q in range(-(n - 1), 1):
        cells = range(q, q + n)
        for k in range(n + 1):
            for B in itertools.combinations(cells, k):
                out.append((B, q))
    return FiniteSubset(group, out)


def default_shape(group: Group) -> str:
    return {"ZPowD": "box", "Lamplighter": "lamp"}.get(group.kind, "ball")


@dataclass
class FolnerSpec:
    """Følner sequence given by a generator rule and a stored index list.

    ``shape`` is ``"box"`` (``[0,n)^d``), ``"ball"`` (word ball of radius n) or
    ``"lamp"`` (lamplighter only, see :func:`lamp_window`).
    """

    group: Group
    indices: list
    shape: str = ""
    nested: bool = True
    betas: list | None = None
    r: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.shape:
            self.shape = default_shape(self.group)
        if self.shape not in ("box", "ball", "lamp"):
            raise DomainError(f"unknown shape {self.shape!r}")
        self.indices = [int(n) for n in self.indices]

    def window(self, n: int, cap: int = ELEMENT_CAP) -> FiniteSubset:
        if n not in self._cache:
            if self.shape == "box":
                if n ** self.group.d > cap:
                    raise ResourceLimit(f"box side {n} exceeds the element cap")
                self._cache[n] = box(self.group, n)
            elif self.shape == "lamp":
                if n * 2 ** n > cap:
                    raise ResourceLimit(f"lamp window {n} exceeds the element cap")
                self._cache[n] = lamp_window(self.group, n)
            else:
                self._cache[n] = ball(self.group, n, cap=cap)
        return self._cache[n]

    def sets(self) -> list:
        return [self.window(n) for n in self.indices]

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, j):
        return self.window(self.indices[j])

    def defects(self) -> list:
        S = FiniteSubset(self.group, self.group.generators)
        return [folner_defect(Q, S) for Q in self.sets()]

    def check(self) -> dict:
        sets = self.sets()
        nested = all(a <= b for a, b in zip(sets, sets[1:]))
        defects = self.defects()
        return {
            "contains_identity": all(self.group.identity in Q for Q in sets),
            "nested": nested,
            "defect_non_increasing": all(b <= a for a, b in zip(defects, defects[1:])),
        }

    @classmethod
    def monotone(cls, group: Group, candidates: Iterable[int], shape: str = "") -> "FolnerSpec":
        """Keep the candidate indices along which the defect does not increase."""
        spec = cls(group, [], shape)
        S = FiniteSubset(group, group.generators)
        last = None
        for n in candidates:
            dft = folner_defect(spec.window(n), S)
            if last is None or dft <= last:
                spec.indices.append(int(n))
                last = dft
        return spec

    def to_json(self) -> dict:
        out = {"group": self.group.to_json(), "shape": self.shape,
               "indices": list(self.indices), "nested": self.nested}
        if self.r is not None:
            out["r"] = self.r
        if self.betas is not None:
            out["betas"] = [str(v) if isinstance(v, Fraction) else v for v in self.betas]
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "FolnerSpec":
        betas = doc.get("betas")
        if betas is not None:
            betas = [Fraction(v) if isinstance(v, str) else v for v in betas]
        return cls(Group.from_json(doc["group"]), list(doc["indices"]),
                   doc.get("shape", ""), doc.get("nested", True), betas, doc.get("r"))


def build_nested_folner(group: Group, count: int, b: Callable, r: int,
                        shape: str = "", start: int = 1, cap: int = ELEMENT_CAP) -> FolnerSpec:
    """Greedy subsequence of boxes/balls with beta'_n non-increasing and
    beta'_n <= 1/(2n); the first qualifying index is kept at every step."""
    if count < 1:
        raise DomainError("count must be positive")
    spec = FolnerSpec(group, [], shape, nested=True, betas=[], r=r)
    n = start
    while len(spec.indices) < count:
        Q = spec.window(n, cap=cap)
        bp = beta_prime(Q, b, r)
        k = len(spec.indices) + 1
        ok = bp <= Fraction(1, 2 * k) and (not spec.betas or bp <= spec.betas[-1])
        if ok:
            spec.indices.append(n)
            spec.betas.append(bp)
        else:
            spec._cache.pop(n, None)
        n += 1
    return spec


# ------------------------------------------------------ indexed translates

def translate_indices(window: FiniteSubset, K: FiniteSubset, centers: Sequence) -> np.ndarray:
    """Row ``j`` holds the window positions of ``K * centers[j]`` (``-1`` outside)."""
    group = window.group
    m, k = len(centers), len(K)
    out = np.full((m, k), -1, dtype=np.int64)
    if m == 0 or k == 0:
        return out
    if group.kind == "ZPowD" and len(window):
        pts = np.asarray(window.elements, dtype=np.int64).reshape(-1, group.d)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        shape = hi - lo + 1
        vol = int(np.prod(shape))
        if vol <= 20 * len(window) + 1_000_000:
            lut = np.full(vol, -1, dtype=np.int64)
            strides = np.ones(group.d, dtype=np.int64)
            for i in range(group.d - 2, -1, -1):
                strides[i] = strides[i + 1] * shape[i + 1]
            lut[((pts - lo) * strides).sum(axis=1)] = np.arange(len(window))
            kp = np.asarray(K.elements, dtype=np.int64).reshape(-1, group.d)
            cp = np.asarray(list(centers), dtype=np.int64).reshape(-1, group.d)
            inside = np.ones((m, k), dtype=bool)
            lin = np.zeros((m, k), dtype=np.int64)
            for a in range(group.d):
                c = kp[None, :, a] + (cp[:, a, None] - lo[a])
                inside &= (c >= 0) & (c < shape[a])
                lin += c * strides[a]
            lin[~inside] = 0
            out = lut[lin]
            out[~inside] = -1
            return out
    idx = window.index
    mul = group.mul
    for j, t in enumerate(centers):
        for i, kk in enumerate(K.elements):
            out[j, i] = idx.get(mul(kk, t), -1)
    return out
