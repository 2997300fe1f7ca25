"""epsilon-quasi tilings: N(eps), eta_i(eps), greedy placement and verification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import (BadTileChain, DomainError, IndexOutOfRange, InsufficientSequence,
                     TilingInfeasible)
from .geometry import FiniteSubset, FolnerSpec, Group, ceil_inv_sqrt, translate_indices


def _rational(eps) -> Fraction:
    """Decimal reading of a float parameter (0.1 means 1/10)."""
    return eps if isinstance(eps, Fraction) else Fraction(repr(float(eps)))


def n_of_eps(eps) -> int:
    """``ceil(ln(eps) / ln(1 - eps))``.

    The quotient is estimated with 50-digit logarithms; the ceiling is then
    settled exactly as the least ``n`` with ``(1 - eps)^n <= eps``, which is
    the same condition with the logarithms cleared.
    """
    if not 0 < float(eps) < 1:
        raise DomainError("eps must lie in (0, 1)")
    e = _rational(eps)
    with mpmath.workdps(50):
        me = mpmath.mpf(e.numerator) / e.denominator
        q = mpmath.log(me) / mpmath.log(1 - me)
        n = max(1, int(mpmath.ceil(q)))
    while n > 1 and (1 - e) ** (n - 1) <= e:
        n -= 1
    while (1 - e) ** n > e:
        n += 1
    return n


def eta(eps, i: int) -> float:
    n = n_of_eps(eps)
    if not 1 <= i <= n:
        raise IndexOutOfRange(f"i={i} outside 1..{n}")
    eps = float(eps)
    return eps * (1.0 - eps) ** (n - i)


def etas(eps) -> np.ndarray:
    n = n_of_eps(eps)
    e = float(eps)
    return e * (1.0 - e) ** (n - np.arange(1, n + 1))


def _check_small_eps(eps):
    if not 0 < float(eps) < 0.1:
        raise DomainError("eps must lie in (0, 1/10)")


def weighted_eta_bound(alphas: Sequence[float], eps) -> float:
    """``A sqrt(eps) + A_eps`` with ``A = sup|alpha_i|`` and
    ``A_eps = sup_{i >= eps^{-1/2}} |alpha_i|`` (``alphas[0]`` is ``alpha_1``)."""
    _check_small_eps(eps)
    n = n_of_eps(eps)
    a = np.abs(np.asarray(alphas, dtype=float))
    if a.size < n:
        raise InsufficientSequence(f"need at least {n} weights, got {a.size}")
    start = ceil_inv_sqrt(eps)
    tail = a[start - 1:]
    a_eps = float(tail.max()) if tail.size else 0.0
    return float(a.max()) * math.sqrt(float(eps)) + a_eps


# ------------------------------------------------------------------ tilings

@dataclass
class TileReport:
    index: int
    eta_index: int
    size: int
    translates: int
    centers: int
    measure: int
    density: float
    eta: float
    deviation: float
    density_ok: bool
    center_gap: float
    center_bound: float
    center_ok: bool
    max_overlap: int
    overlap_cap: Fraction


@dataclass
class TilingDiagnostics:
    eps: float
    n_eps: int
    tolerance: float
    window_size: int
    cover: Fraction
    cover_fraction: float
    cover_ok: bool
    contained_ok: bool
    cross_disjoint_ok: bool
    eps_disjoint_ok: bool
    tiles: list
    violations: list = field(default_factory=list)

    @property
    def definition_ok(self) -> bool:
        """All clauses of the quasi-tiling definition."""
        return self.contained_ok and self.cross_disjoint_ok and self.eps_disjoint_ok and self.cover_ok

    @property
    def densities_ok(self) -> bool:
        return all(t.density_ok for t in self.tiles)

    @property
    def passed(self) -> bool:
        return self.definition_ok and self.densities_ok

    def to_json(self) -> dict:
        return {
            "eps": self.eps, "n_eps": self.n_eps, "tolerance": self.tolerance,
            "window_size": self.window_size, "cover_fraction": self.cover_fraction,
            "flags": {"contained": self.contained_ok, "cross_disjoint": self.cross_disjoint_ok,
                      "eps_disjoint": self.eps_disjoint_ok, "cover": self.cover_ok,
                      "definition": self.definition_ok, "densities": self.densities_ok,
                      "passed": self.passed},
            "tiles": [{"i": t.index, "eta_index": t.eta_index, "size": t.size,
                       "translates": t.translates, "measure": t.measure,
                       "density": t.density, "eta": t.eta, "deviation": t.deviation,
                       "density_ok": t.density_ok, "center_gap": t.center_gap,
                       "center_bound": t.center_bound, "center_ok": t.center_ok,
                       "max_overlap": t.max_overlap} for t in self.tiles],
            "violations": self.violations[:50],
        }

    def table(self) -> str:
        head = f"{'i':>3} {'|K|':>6} {'#T':>6} {'|KT|':>7} {'density':>9} {'eta':>9} {'dev':>9} {'ok':>3} {'gap':>10} {'bound':>10}"
        lines = [head]
        for t in self.tiles:
            lines.append(f"{t.index:>3} {t.size:>6} {t.translates:>6} {t.measure:>7} {t.density:9.5f} "
                         f"{t.eta:9.5f} {t.deviation:9.2e} {'y' if t.density_ok else 'n':>3} "
                         f"{t.center_gap:10.3e} {t.center_bound:10.3e}")
        lines.append(f"cover {self.cover_fraction:.5f} (need {1 - 2 * self.eps:.5f})  "
                     f"contained={self.contained_ok} cross_disjoint={self.cross_disjoint_ok} "
                     f"eps_disjoint={self.eps_disjoint_ok} passed={self.passed}")
        return "\n".join(lines)


@dataclass
class QuasiTiling:
    eps: float
    window: FiniteSubset
    tiles: list
    centers: list
    cores: list
    mode: str = "stp"
    tile_refs: dict | None = None
    diagnostics: TilingDiagnostics | None = None

    @property
    def group(self) -> Group:
        return self.window.group

    @property
    def n_eps(self) -> int:
        return n_of_eps(self.eps)

    def eta_index(self, i: int) -> int:
        """eta index of tile ``i`` (1-based); the largest tile is aligned to N(eps)."""
        return self.n_eps - len(self.tiles) + i

    def eta_of(self, i: int) -> float:
        j = self.eta_index(i)
        return eta(self.eps, j) if j >= 1 else 0.0

    def translates(self, i: int) -> list:
        mul = self.group.mul
        K = self.tiles[i - 1]
        return [FiniteSubset(self.group, (mul(k, t) for k in K.elements)) for t in self.centers[i - 1]]

    def center_set(self, i: int) -> FiniteSubset:
        return FiniteSubset(self.group, self.centers[i - 1])

    def to_json(self) -> dict:
        g = self.group
        out = {"eps": self.eps, "n_eps": self.n_eps, "mode": self.mode,
               "group": g.to_json()}
        if self.tile_refs:
            out["tile_refs"] = self.tile_refs
        else:
            out["window"] = self.window.to_json()
            out["tiles"] = [K.to_json() for K in self.tiles]
        out["centers"] = [[g.element_to_json(t) for t in c] for c in self.centers]
        out["cores"] = "first-come"
        if self.diagnostics is not None:
            out["diagnostics"] = self.diagnostics.to_json()
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "QuasiTiling":
        g = Group.from_json(doc["group"])
        if "tile_refs" in doc:
            refs = doc["tile_refs"]
            window = FolnerSpec.from_json(refs["window_folner"]).window(refs["window_index"])
            tspec = FolnerSpec.from_json(refs["tile_folner"])
            tiles = [tspec.window(n) for n in refs["tile_indices"]]
        else:
            window = FiniteSubset.from_json(g, doc["window"])
            tiles = [FiniteSubset.from_json(g, K) for K in doc["tiles"]]
        centers = [[g.normalize(t) for t in c] for c in doc["centers"]]
        qt = cls(doc["eps"], window, tiles, centers, first_come_cores(window, tiles, centers),
                 doc.get("mode", "manual"), doc.get("tile_refs"))
        qt.diagnostics = verify_quasi_tiling(qt)
        return qt


def check_tile_chain(tiles: Sequence[FiniteSubset]):
    if not tiles:
        raise BadTileChain("at least one tile is required")
    g = tiles[0].group
    if g.identity not in tiles[0]:
        raise BadTileChain("the smallest tile must contain the identity")
    for a, b in zip(tiles, tiles[1:]):
        if not (a.issubset(b) and len(a) < len(b)):
            raise BadTileChain("tiles must be strictly nested")


def first_come_cores(window: FiniteSubset, tiles, centers) -> list:
    """Core of each translate = the part not covered by earlier translates of the same tile."""
    g = window.group
    mul = g.mul
    cores = []
    for K, cs in zip(tiles, centers):
        seen = set()
        row = []
        for t in cs:
            pts = [mul(k, t) for k in K.elements]
            core = [x for x in pts if x not in seen]
            seen.update(pts)
            row.append(FiniteSubset(g, core))
        cores.append(row)
    return cores


def _int_window(eta_i: float, tol: float, n: int) -> tuple[int, int]:
    """Integer range of union sizes ``c`` with ``|c/n - eta_i| <= tol``."""
    ok = lambda c: abs(c / n - eta_i) <= tol
    lo = max(0, math.floor((eta_i - tol) * n) - 2)
    while lo <= n and not ok(lo) and lo / n < eta_i:
        lo += 1
    hi = min(n, math.ceil((eta_i + tol) * n) + 2)
    while hi >= 0 and not ok(hi) and hi / n > eta_i:
        hi -= 1
    return lo, hi


def _reachable(c: int, lo: int, hi: int, k: int, p: int) -> bool:
    """Can m >= 0 further translates adding between k-p and k sites each land in [lo, hi]?"""
    if lo <= c <= hi:
        return True
    if c > hi:
        return False
    m_min = -(-(lo - c) // k)
    m_max = (hi - c) // (k - p)
    return m_min <= m_max


def select_tiles(candidates: Sequence[FiniteSubset], window_size: int, eps) -> list:
    """Pick a strictly increasing chain of N(eps) candidates whose density targets are
    arithmetically reachable on a window of the given size (smallest first)."""
    n_eps = n_of_eps(eps)
    tol = float(eps) ** 2 / n_eps
    e = _rational(eps)
    chosen = []
    pos = 0
    for i in range(1, n_eps + 1):
        lo, hi = _int_window(eta(eps, i), tol, window_size)
        while pos < len(candidates):
            K = candidates[pos]
            pos += 1
            k = len(K)
            if chosen and not (chosen[-1].issubset(K) and len(chosen[-1]) < k):
                continue
            p = math.floor(e * k)
            if lo <= hi and (lo == 0 or (k <= hi and _reachable(k, lo, hi, k, p))):
                chosen.append(K)
                break
        else:
            raise TilingInfeasible(f"no admissible tile for i={i} on a window of size {window_size}")
    return chosen


def construct_quasi_tiling(window: FiniteSubset, tiles: Sequence[FiniteSubset], eps,
                           mode: str = "stp", centers=None, order_seed: int | None = None,
                           strict: bool = True, tile_refs: dict | None = None) -> QuasiTiling:
    """Build an eps-quasi tiling of ``window``.

    ``stp``: largest tile first; candidate centers are scanned in canonical order
    (or a seeded permutation of it) and accepted when the translate lies in the
    window, misses the larger tiles, overlaps earlier translates of the same tile
    in at most ``eps*|K|`` sites, does not overshoot the density target, and
    leaves the remaining target reachable.

    ``manual``: ``centers`` (one list per tile) are stored verbatim.
    """
    if not 0 < float(eps) < 1:
        raise DomainError("eps must lie in (0, 1)")
    tiles = list(tiles)
    check_tile_chain(tiles)
    if mode == "manual":
        if centers is None or len(centers) != len(tiles):
            raise DomainError("manual mode needs one center list per tile")
        g = window.group
        cs = [[g.normalize(t) for t in c] for c in centers]
        qt = QuasiTiling(float(eps), window, tiles, cs, first_come_cores(window, tiles, cs),
                         "manual", tile_refs)
        qt.diagnostics = verify_quasi_tiling(qt)
        mul = g.mul
        fits = any(all(mul(k, t) in window for k in K.elements)
                   for K, c in zip(tiles, cs) for t in c)
        if strict and not fits:
            raise TilingInfeasible("no translate of any tile fits in the window",
                                   qt.diagnostics, qt)
        return qt
    if mode != "stp":
        raise DomainError(f"unknown mode {mode!r}")

    n_eps = n_of_eps(eps)
    if len(tiles) != n_eps:
        raise DomainError(f"stp mode needs N(eps)={n_eps} tiles, got {len(tiles)}")
    n = len(window)
    e = _rational(eps)
    tol = float(eps) ** 2 / n_eps
    order = np.arange(n)
    if order_seed is not None:
        order = np.random.default_rng(order_seed).permutation(n)
    cand_elems = [window.elements[j] for j in order]
    claimed = np.zeros(n, dtype=bool)
    all_centers: list = [None] * n_eps
    all_cores: list = [None] * n_eps
    for i in range(n_eps, 0, -1):
        K = tiles[i - 1]
        k = len(K)
        p = math.floor(e * k)
        lo, hi = _int_window(eta(eps, i), tol, n)
        same = np.zeros(n, dtype=bool)
        c = 0
        acc_t, acc_core = [], []
        chunk = max(1, 4_000_000 // max(k, 1))
        done = lo <= 0
        cache: dict = {}
        # first pass keeps translates disjoint; the second admits eps-overlaps
        for cap in sorted({0, p}):
            for start in range(0, n, chunk):
                if done:
                    break
                idx = cache.get(start)
                if idx is None:
                    idx = cache[start] = translate_indices(window, K, cand_elems[start:start + chunk])
                valid = np.all(idx >= 0, axis=1)
                valid[valid] = ~np.any(claimed[idx[valid]], axis=1)
                for row in np.flatnonzero(valid):
                    ids = idx[row]
                    hit = same[ids]
                    ov = int(hit.sum())
                    if ov > cap or ov == k:
                        continue
                    c2 = c + k - ov
                    if c2 > hi or not _reachable(c2, lo, hi, k, p):
                        continue
                    acc_t.append(cand_elems[start + row])
                    acc_core.append(ids[~hit])
                    same[ids] = True
                    c = c2
                    if c >= lo:
                        done = True
                        break
        claimed |= same
        all_centers[i - 1] = acc_t
        all_cores[i - 1] = [FiniteSubset(window.group, (window.elements[j] for j in core))
                            for core in acc_core]
    qt = QuasiTiling(float(eps), window, tiles, all_centers, all_cores, "stp", tile_refs)
    qt.diagnostics = verify_quasi_tiling(qt)
    if strict and not qt.diagnostics.passed:
        bad = [t.index for t in qt.diagnostics.tiles if not t.density_ok]
        raise TilingInfeasible(
            f"targets unreachable (tiles {bad}, cover {qt.diagnostics.cover_fraction:.4f}); "
            "window below the empirical j0(eps)", qt.diagnostics, qt)
    return qt


def verify_quasi_tiling(qt: QuasiTiling) -> TilingDiagnostics:
    """Exact set-arithmetic check of every quasi-tiling clause plus density targets."""
    g = qt.group
    eps = qt.eps
    e = _rational(eps)
    n_eps = qt.n_eps
    tol = float(eps) ** 2 / n_eps
    lam = qt.window
    n = len(lam)
    violations = []

    # work over window + anything a translate reaches outside it
    idx_of = dict(lam.index)
    extra = []
    mul = g.mul
    tr_idx = []
    for K, cs in zip(qt.tiles, qt.centers):
        mat = translate_indices(lam, K, cs)
        if np.any(mat < 0):
            for r_, t in enumerate(cs):
                for c_ in np.flatnonzero(mat[r_] < 0):
                    x = mul(K.elements[c_], t)
                    if x not in idx_of:
                        idx_of[x] = n + len(extra)
                        extra.append(x)
                    mat[r_, c_] = idx_of[x]
        tr_idx.append(mat)
    total = n + len(extra)
    contained = all(not np.any(m >= n) for m in tr_idx)
    if not contained:
        violations.append("translate leaves the window")

    owner = np.full(total, -1, dtype=np.int64)
    cross_ok = True
    unions = []
    for i, mat in enumerate(tr_idx):
        u = np.zeros(total, dtype=bool)
        if mat.size:
            u[mat.reshape(-1)] = True
        clash = u & (owner >= 0)
        if clash.any():
            cross_ok = False
            violations.append(f"tile {i + 1} meets tile {int(owner[np.flatnonzero(clash)[0]]) + 1}")
        owner[u & (owner < 0)] = i
        unions.append(u)

    eps_ok = True
    reports = []
    for i, (K, cs, mat) in enumerate(zip(qt.tiles, qt.centers, tr_idx), start=1):
        k = len(K)
        cap = e * k
        cores = qt.cores[i - 1] if qt.cores is not None else None
        if cores is None or len(cores) != len(cs):
            eps_ok = False
            violations.append(f"tile {i}: cores missing")
            cores = []
        used = np.zeros(total, dtype=bool)
        max_ov = 0
        for j, core in enumerate(cores):
            cidx = np.fromiter((idx_of.get(x, -1) for x in core.elements), dtype=np.int64,
                               count=len(core))
            row = mat[j]
            if np.any(cidx < 0) or not np.all(np.isin(cidx, row)):
                eps_ok = False
                violations.append(f"tile {i} translate {j}: core not inside translate")
                continue
            outside = k - len(cidx)
            max_ov = max(max_ov, outside)
            if outside > cap:
                eps_ok = False
                violations.append(f"tile {i} translate {j}: {outside} sites outside core > eps|K|")
            if used[cidx].any():
                eps_ok = False
                violations.append(f"tile {i} translate {j}: cores intersect")
            used[cidx] = True
        measure = int(unions[i - 1][:n].sum()) if contained else int(unions[i - 1].sum())
        eta_i = qt.eta_of(i)
        dens = measure / n if n else 0.0
        dev = abs(dens - eta_i)
        n_centers = len(set(cs))
        gap = abs(n_centers / n - eta_i / k) if n else 0.0
        bound = 4 * float(eps) * eta_i / k
        reports.append(TileReport(i, qt.eta_index(i), k, len(cs), n_centers, measure, dens,
                                  eta_i, dev, dev <= tol, gap, bound, gap <= bound, max_ov, cap))
    covered = int(np.any(np.stack(unions), axis=0)[:n].sum()) if unions else 0
    cover = Fraction(covered, n) if n else Fraction(0)
    cover_ok = cover >= 1 - 2 * e
    if not cover_ok:
        violations.append(f"cover {float(cover):.4f} < {float(1 - 2 * e):.4f}")
    return TilingDiagnostics(float(eps), n_eps, tol, n, cover, float(cover), cover_ok,
                             contained, cross_ok, eps_ok, reports, violations)


def center_density_gap(qt: QuasiTiling, i: int) -> tuple[float, float]:
    """``(| |T_i|/|Lambda| - eta_i/|K_i| |, 4 eps eta_i / |K_i|)``."""
    if not 1 <= i <= len(qt.tiles):
        raise IndexOutOfRange(f"tile index {i} outside 1..{len(qt.tiles)}")
    n = len(qt.window)
    k = len(qt.tiles[i - 1])
    eta_i = qt.eta_of(i)
    gap = abs(len(set(qt.centers[i - 1])) / n - eta_i / k)
    return gap, 4 * float(qt.eps) * eta_i / k
