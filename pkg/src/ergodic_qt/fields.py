"""Admissible fields: level counts and eigenvalue counts of random operators."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import rng
from .errors import EigensolverFailure, WitnessMissing
from .geometry import FiniteSubset, Group, ball, r_boundary, translate_set
from .model import Coloring, RandomModel, restrict, sample_coloring, translate_coloring
from .stepfn import StepFunction, linear_combination, sup_norm_distance

EIG_DECIMALS = 9


class BoundaryTerm:
    """Evaluator ``b(Lambda)`` with its linear bound ``b <= C_b |Lambda|``."""

    def __init__(self, name: str, fn: Callable[[FiniteSubset], float], C_b: float):
        self.name = name
        self.fn = fn
        self.C_b = C_b

    def __call__(self, lam: FiniteSubset):
        return self.fn(lam)

    @classmethod
    def zero(cls) -> "BoundaryTerm":
        return cls("zero", lambda lam: 0, 0)

    @classmethod
    def cut(cls, group: Group) -> "BoundaryTerm":
        """``|d^1 Lambda|`` (inner plus outer 1-boundary); bounded by ``(1+|S|)|Lambda|``."""
        return cls("cut", lambda lam: len(r_boundary(lam, 1)), 1 + len(group.generators))

    def __repr__(self):
        return f"BoundaryTerm({self.name}, C_b={self.C_b})"


class AdmissibleField:
    """Counting field ``f(Lambda, omega)(E) = #{levels <= E}``.

    Subclasses provide ``levels`` (one configuration) and ``batch_levels``
    (a stack of configurations on one window).
    """

    kind = "abstract"

    def __init__(self, boundary: BoundaryTerm, K_f: float):
        self.boundary = boundary
        self.K_f = K_f

    @property
    def C_b(self) -> float:
        return self.boundary.C_b

    def b(self, lam: FiniteSubset):
        return self.boundary(lam)

    def levels(self, lam: FiniteSubset, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_levels(self, lam: FiniteSubset, values: np.ndarray) -> np.ndarray:
        return np.asarray([self.levels(lam, v) for v in values])

    def evaluate(self, lam: FiniteSubset, values: np.ndarray) -> StepFunction:
        """Field value from the colors on ``lam`` (aligned with its canonical order)."""
        return StepFunction.from_jumps(self.levels(lam, np.asarray(values, float)))

    def __call__(self, lam: FiniteSubset, omega: Coloring) -> StepFunction:
        # the evaluator only ever sees the restriction to lam
        return self.evaluate(lam, restrict(omega, lam).values)

    def to_json(self) -> dict:
        return {"kind": self.kind, "boundary": self.boundary.name, "C_b": self.C_b, "K_f": self.K_f}


class LevelCountField(AdmissibleField):
    kind = "level_count"

    def __init__(self):
        super().__init__(BoundaryTerm.zero(), 1)

    def levels(self, lam, values):
        return np.asarray(values, float)

    def batch_levels(self, lam, values):
        return np.asarray(values, float)


def level_count_field() -> LevelCountField:
    return LevelCountField()


class _AdjacencyCache:
    def __init__(self, size: int = 32):
        self.size = size
        self.data: OrderedDict = OrderedDict()

    def get(self, lam: FiniteSubset):
        key = (lam.group, lam.elements)
        hit = self.data.get(key)
        if hit is not None:
            self.data.move_to_end(key)
            return hit
        idx = lam.index
        mul = lam.group.mul
        rows, cols = [], []
        for i, x in enumerate(lam.elements):
            for s in lam.group.generators:
                j = idx.get(mul(s, x))
                if j is not None and j > i:
                    rows.append(i)
                    cols.append(j)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        bw = int((cols - rows).max()) if rows.size else 0
        hit = (rows, cols, bw)
        self.data[key] = hit
        if len(self.data) > self.size:
            self.data.popitem(last=False)
        return hit


class EigenvalueCountField(AdmissibleField):
    """Eigenvalue counting function of ``A_Lambda + coupling * diag(omega)``.

    ``A_Lambda`` is the Cayley-graph adjacency restricted to ``Lambda``.  Cutting
    the edges between disjoint pieces is a perturbation whose rank is at most
    the number of sites touching the cut, so ``b = |d^1 Lambda|`` bounds the
    count displacement.
    """

    kind = "eigenvalue_count"

    def __init__(self, group: Group, coupling: float = 1.0, boundary: BoundaryTerm | None = None):
        super().__init__(boundary or BoundaryTerm.cut(group), 1)
        self.group = group
        self.coupling = float(coupling)
        self._adj = _AdjacencyCache()

    def matrix(self, lam: FiniteSubset, values: np.ndarray) -> np.ndarray:
        rows, cols, _ = self._adj.get(lam)
        n = len(lam)
        H = np.zeros((n, n))
        H[rows, cols] = 1.0
        H[cols, rows] = 1.0
        H[np.arange(n), np.arange(n)] = self.coupling * np.asarray(values, float)
        return H

    def _solve(self, lam, values):
        rows, cols, bw = self._adj.get(lam)
        n = len(lam)
        values = np.asarray(values, float)
        try:
            if n > 256 and 4 * bw < n:
                ab = np.zeros((bw + 1, n))
                ab[0] = self.coupling * values
                ab[cols - rows, rows] = 1.0
                ev = scipy.linalg.eig_banded(ab, lower=True, eigvals_only=True,
                                             check_finite=False, overwrite_a_band=True)
            else:
                ev = np.linalg.eigvalsh(self.matrix(lam, values))
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolverFailure(f"eigensolver failed on |Lambda|={n}: {exc}",
                                     instance=(lam, values)) from exc
        if not np.all(np.isfinite(ev)):
            raise EigensolverFailure("non-finite eigenvalues", instance=(lam, values))
        return np.round(ev, EIG_DECIMALS)

    def levels(self, lam, values):
        return self._solve(lam, values)

    def batch_levels(self, lam, values):
        values = np.asarray(values, float)
        n = len(lam)
        if n > 64:
            return np.asarray([self._solve(lam, v) for v in values])
        rows, cols, _ = self._adj.get(lam)
        out = np.empty((values.shape[0], n))
        base = np.zeros((n, n))
        base[rows, cols] = 1.0
        base[cols, rows] = 1.0
        step = 20000
        diag = np.arange(n)
        for a in range(0, values.shape[0], step):
            chunk = values[a:a + step]
            H = np.broadcast_to(base, (chunk.shape[0], n, n)).copy()
            H[:, diag, diag] = self.coupling * chunk
            try:
                out[a:a + step] = np.linalg.eigvalsh(H)
            except np.linalg.LinAlgError as exc:
                raise EigensolverFailure(f"batched eigensolver failed: {exc}") from exc
        return np.round(out, EIG_DECIMALS)

    def to_json(self) -> dict:
        out = super().to_json()
        out["coupling"] = self.coupling
        return out


def eigenvalue_count_field(group: Group, coupling: float = 1.0) -> EigenvalueCountField:
    return EigenvalueCountField(group, coupling)


def field_from_json(doc: dict, group: Group) -> AdmissibleField:
    if doc["kind"] == "level_count":
        return level_count_field()
    if doc["kind"] == "eigenvalue_count":
        return eigenvalue_count_field(group, doc.get("coupling", 1.0))
    raise ValueError(f"unknown field kind {doc['kind']!r}")


def inertia_count(H: np.ndarray, E: float) -> int:
    """Number of eigenvalues ``<= E`` from the inertia of ``H - E I`` (LDL^T)."""
    n = H.shape[0]
    _, d, _ = scipy.linalg.ldl(H - E * np.eye(n))
    # d is block diagonal with 1x1 and 2x2 blocks
    count = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0:
            ev = np.linalg.eigvalsh(d[i:i + 2, i:i + 2])
            count += int(np.sum(ev <= 0))
            i += 2
        else:
            count += int(d[i, i] <= 0)
            i += 1
    return count


# ---------------------------------------------------------------- checking

def _random_subset(group: Group, rs: np.random.Generator, max_size: int, radius: int = 4):
    pool = ball(group, radius).elements if group.kind != "ZPowD" else None
    if group.kind == "ZPowD":
        side = max(2, int(round(max_size ** (1 / group.d))) + 1)
        size = int(rs.integers(1, max_size + 1))
        pts = rs.integers(0, side, size=(size, group.d))
        return FiniteSubset(group, (tuple(int(v) for v in p) for p in pts))
    size = int(rs.integers(1, min(max_size, len(pool)) + 1))
    pick = rs.choice(len(pool), size=size, replace=False)
    return FiniteSubset(group, (pool[i] for i in pick))


def _random_element(group: Group, rs: np.random.Generator, radius: int = 3):
    g = group.identity
    for _ in range(int(rs.integers(0, radius + 1))):
        g = group.mul(g, group.generators[int(rs.integers(len(group.generators)))])
    return g


@dataclass
class AdmissibilityReport:
    field: str
    trials: int
    clauses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.clauses.values())

    def to_json(self) -> dict:
        return {"field": self.field, "trials": self.trials, "passed": self.passed,
                "clauses": self.clauses}


def _clause(name, report):
    report.clauses.setdefault(name, {"passed": True, "checked": 0, "max_slack_used": 0.0,
                                     "counterexample": None})
    return report.clauses[name]


def check_admissibility(fld: AdmissibleField, model: RandomModel, trials: int, seed: int,
                        group: Group | None = None, max_size: int = 100) -> AdmissibilityReport:
    """Randomized check of equivariance, locality, almost additivity, antitonicity
    and boundedness; the first counterexample of each clause is recorded."""
    group = group or getattr(fld, "group", None) or Group.zd(2)
    rs = np.random.default_rng(seed)
    rep = AdmissibilityReport(fld.kind, trials)
    for k in range(trials):
        s = rng.derive_seed(seed, k)
        lam = _random_subset(group, rs, max_size)
        g = _random_element(group, rs)
        lam_g = translate_set(lam, g)
        win = lam.union(lam_g)
        omega = sample_coloring(model, win, s)

        c = _clause("A1", rep)
        c["checked"] += 1
        lhs = fld(lam_g, omega)
        rhs = fld(lam, translate_coloring(omega, g, lam))
        if lhs != rhs and c["passed"]:
            c["passed"] = False
            c["counterexample"] = {"lambda": lam.to_json(), "g": group.element_to_json(g),
                                   "distance": sup_norm_distance(lhs, rhs)}

        c = _clause("A2", rep)
        c["checked"] += 1
        other = omega.values.copy()
        outside = ~np.isin(np.arange(len(win)), [win.index[x] for x in lam.elements])
        other[outside] = other[outside] + 1.0 + rs.random(int(outside.sum()))
        if fld(lam, omega) != fld(lam, Coloring(win, other)) and c["passed"]:
            c["passed"] = False
            c["counterexample"] = {"lambda": lam.to_json()}

        c = _clause("A3", rep)
        c["checked"] += 1
        parts_n = int(rs.integers(2, 5))
        labels = rs.integers(0, parts_n, size=len(lam))
        parts = [FiniteSubset(group, (x for x, l in zip(lam.elements, labels) if l == q))
                 for q in range(parts_n)]
        parts = [p for p in parts if len(p)]
        whole = fld(lam, omega)
        total = linear_combination([(1.0, fld(p, omega)) for p in parts])
        gap = sup_norm_distance(whole, total)
        allowance = float(sum(fld.b(p) for p in parts))
        if allowance > 0:
            c["max_slack_used"] = max(c["max_slack_used"], gap / allowance)
        if gap > allowance + 1e-9 and c["passed"]:
            c["passed"] = False
            c["counterexample"] = {"parts": [p.to_json() for p in parts], "gap": gap,
                                   "allowance": allowance}

        c = _clause("A4", rep)
        c["checked"] += 1
        raised = omega.values.copy()
        hit = rs.random(len(win)) < 0.3
        raised[hit] += rs.random(int(hit.sum())) + 1e-3
        up = fld(lam, Coloring(win, raised))
        diff = linear_combination([(1.0, up), (-1.0, whole)])
        if float(np.max(diff.values)) > 0 and c["passed"]:
            c["passed"] = False
            c["counterexample"] = {"lambda": lam.to_json(), "excess": float(np.max(diff.values))}

        c = _clause("A5", rep)
        c["checked"] += 1
        one = FiniteSubset(group, [group.identity])
        w1 = sample_coloring(model, one, s)
        norm1 = fld(one, w1).sup_norm
        c["max_norm"] = max(c.get("max_norm", 0.0), norm1)
        norm = whole.sup_norm / len(lam)
        c["max_norm_per_site"] = max(c.get("max_norm_per_site", 0.0), norm)
        if (norm1 > fld.K_f or norm > fld.K_f + 1e-12) and c["passed"]:
            c["passed"] = False
            c["counterexample"] = {"lambda": lam.to_json(), "norm_per_site": norm}
    return rep


@dataclass
class EpsDisjointFamily:
    """Sets ``Q_i`` with witnessing cores (``|Q_i - core_i| <= eps|Q_i|``, cores disjoint)."""

    sets: list
    cores: list | None
    eps: float

    def check(self) -> bool:
        if self.cores is None or len(self.cores) != len(self.sets):
            return False
        e = Fraction(repr(float(self.eps)))
        seen = set()
        for Q, C in zip(self.sets, self.cores):
            if not C.issubset(Q) or len(Q) - len(C) > e * len(Q):
                return False
            if not seen.isdisjoint(C.members):
                return False
            seen |= C.members
        return True

    @classmethod
    def first_come(cls, sets: Sequence[FiniteSubset], eps: float) -> "EpsDisjointFamily":
        seen = set()
        cores = []
        for Q in sets:
            cores.append(FiniteSubset(Q.group, Q.members - seen))
            seen |= Q.members
        return cls(list(sets), cores, eps)


def quasi_additivity_gap(fld: AdmissibleField, family: EpsDisjointFamily,
                         omega: Coloring) -> tuple[float, float]:
    """``(||f(Q) - sum f(Q_i)||, eps(3K_f + 9C_b)|Q| + 3 sum b(Q_i))`` with ``Q`` the union."""
    if not isinstance(family, EpsDisjointFamily) or not family.check():
        raise WitnessMissing("family lacks valid eps-disjointness witnesses")
    Q = family.sets[0]
    for P in family.sets[1:]:
        Q = Q.union(P)
    whole = fld(Q, omega)
    total = linear_combination([(1.0, fld(P, omega)) for P in family.sets])
    gap = sup_norm_distance(whole, total)
    bound = (float(family.eps) * (3 * fld.K_f + 9 * fld.C_b) * len(Q)
             + 3 * float(sum(fld.b(P) for P in family.sets)))
    return gap, bound
