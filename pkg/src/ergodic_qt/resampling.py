"""Resampling of colors outside overlap-free cores (product models).

For a product law the conditional law of the colors off a core, given the
colors on it, is again the product law, so fresh independent draws realize
the conditional resampling exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from .errors import NotASubset, TilingUnverified, UnsupportedModel
from .fields import AdmissibleField
from .geometry import FiniteSubset, ball, r_interior
from .model import Coloring, RandomModel, restrict, sample_coloring
from .stepfn import StepFunction, sup_norm_distance
from .tiling import QuasiTiling


@dataclass
class CoreReport:
    cores: dict
    distances_ok: bool
    fraction_ok: bool
    worst_fraction: float
    offenders: list = field(default_factory=list)


def overlap_free_cores(qt: QuasiTiling, r: int, require_verified: bool = True,
                       report: bool = False):
    """``U^{i,t} = (K_i^r t) minus K_i (T_i - {t})`` for every placed translate.

    Checks that cores of one tile are more than ``r`` apart and reports (without
    failing) translates where more than ``eps |K_i^r|`` sites are lost.
    """
    diag = qt.diagnostics
    if require_verified and (diag is None or not diag.definition_ok):
        raise TilingUnverified("tiling does not satisfy the quasi-tiling definition")
    g = qt.group
    mul = g.mul
    e = Fraction(repr(float(qt.eps)))
    cores = {}
    dist_ok = True
    frac_ok = True
    worst = 0.0
    offenders = []
    Br = ball(g, r).elements if r > 0 else (g.identity,)
    for i, K in enumerate(qt.tiles, start=1):
        Kr = r_interior(K, r)
        T = list(dict.fromkeys(qt.centers[i - 1]))
        cover_count: dict = {}
        for t in T:
            for k in K.elements:
                x = mul(k, t)
                cover_count[x] = cover_count.get(x, 0) + 1
        owner = {}
        for t in T:
            own = {mul(k, t) for k in K.elements}
            # a site of K^r t is kept iff no other translate of K_i covers it
            keep = [mul(k, t) for k in Kr.elements
                    if cover_count[mul(k, t)] == 1 and mul(k, t) in own]
            U = FiniteSubset(g, keep)
            cores[(i, t)] = U
            for x in keep:
                owner[x] = t
            lost = len(Kr) - len(U)
            if len(Kr):
                worst = max(worst, lost / len(Kr))
            if lost > e * len(Kr):
                frac_ok = False
                offenders.append((i, g.element_to_json(t), lost))
        if r > 0:
            for (ii, t), U in cores.items():
                if ii != i:
                    continue
                for x in U.elements:
                    for b in Br:
                        y = mul(b, x)
                        o = owner.get(y)
                        if o is not None and o != t:
                            dist_ok = False
    if report:
        return CoreReport(cores, dist_ok, frac_ok, worst, offenders)
    return cores


@dataclass
class ResampleFamily:
    base: Coloring
    configs: dict
    cores: dict
    seed: int
    qt: QuasiTiling
    model: RandomModel
    r: int
    shared_stream: bool = False
    resampled: dict = field(default_factory=dict)

    def agreement_ok(self) -> bool:
        """Every configuration equals the base coloring on its core, bitwise."""
        for key, X in self.configs.items():
            U = self.cores[key]
            if len(U) and not np.array_equal(X.values_on(U), self.base.values_on(U)):
                return False
        return True


def _fresh(model: RandomModel, group, i: int, t, pts, seed: int, shared: bool) -> np.ndarray:
    if shared:
        # negative control: keyed by the position relative to the center only
        ti = group.inv(t)
        rel = [group.mul(x, ti) for x in pts]
        return model.law.quantile(rng.element_hashes(group, rel, seed, tags=(3, i)))
    tc, tm = group.key_columns([t] * len(pts))
    pc, pm = group.key_columns(pts)
    cols = np.concatenate([tc, pc], axis=1)
    mask = np.concatenate([tm, pm], axis=1)
    return model.law.quantile(rng.fold(seed, (3, i), cols, mask))


def resample(omega: Coloring, qt: QuasiTiling, model: RandomModel, r: int, seed: int,
             shared_stream: bool = False, require_verified: bool = True) -> ResampleFamily:
    """Per translate: keep ``omega`` on the core, draw fresh colors on the rest of ``K_i^r t``.

    Fresh draws are keyed by ``(seed, i, t, g)``; ``shared_stream`` keys them by
    ``g t^{-1}`` instead, which deliberately couples different translates.
    """
    if not model.is_product:
        raise UnsupportedModel("resampling is implemented for product models only")
    g = qt.group
    mul = g.mul
    cores = overlap_free_cores(qt, r, require_verified=require_verified)
    configs, counts = {}, {}
    interiors = {}
    for (i, t), U in cores.items():
        if i not in interiors:
            interiors[i] = r_interior(qt.tiles[i - 1], r)
        win = FiniteSubset(g, (mul(k, t) for k in interiors[i].elements))
        vals = restrict(omega, win).values.copy()
        fresh_mask = np.fromiter((x not in U for x in win.elements), dtype=bool, count=len(win))
        pts = [x for x, m in zip(win.elements, fresh_mask) if m]
        if pts:
            vals[fresh_mask] = _fresh(model, g, i, t, pts, seed, shared_stream)
        configs[(i, t)] = Coloring(win, vals)
        counts[(i, t)] = len(pts)
    return ResampleFamily(omega, configs, cores, seed, qt, model, r, shared_stream, counts)


def substitution_bound(fld: AdmissibleField, K: FiniteSubset, U: FiniteSubset) -> float:
    """``2 b(K) + 2 (2 C_b + K_f) |K - U|``."""
    if not U.issubset(K):
        raise NotASubset("U must be a subset of K")
    return 2 * float(fld.b(K)) + 2 * (2 * fld.C_b + fld.K_f) * (len(K) - len(U))


def _corr(x: np.ndarray, y: np.ndarray):
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return None
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def independence_audit(family: ResampleFamily, fld: AdmissibleField, trials: int,
                       seed: int = 0, threshold: float = 0.05, max_pairs: int = 200) -> dict:
    """Correlations between field values of different resampled translates over
    independent master seeds, at five quantile levels, plus KS distances of the
    resampled marginals against the color law."""
    if trials < 100:
        raise ValueError("the audit needs at least 100 trials")
    qt, model, r = family.qt, family.model, family.r
    keys = sorted(family.configs)
    lam = qt.window
    values = {k: [] for k in keys}
    pooled = {k: [] for k in keys}
    for n in range(trials):
        s = rng.derive_seed(seed, n, 0)
        omega = sample_coloring(model, lam, s)
        fam = resample(omega, qt, model, r, rng.derive_seed(seed, n, 1),
                       shared_stream=family.shared_stream, require_verified=False)
        for k in keys:
            X = fam.configs[k]
            values[k].append(fld.levels(X.window, X.values))
            pooled[k].append(X.values)
    all_levels = np.concatenate([np.concatenate(v) for v in values.values()])
    qs = np.quantile(all_levels, [0.1, 0.3, 0.5, 0.7, 0.9])
    Y = {}
    for k in keys:
        lv = np.sort(np.asarray(values[k]), axis=1)
        Y[k] = np.stack([(lv <= E).sum(axis=1) for E in qs], axis=1).astype(float)
    pairs = []
    by_tile: dict = {}
    for k in keys:
        by_tile.setdefault(k[0], []).append(k)
    for i, ks in by_tile.items():
        for a in range(len(ks)):
            for b in range(a + 1, len(ks)):
                pairs.append((ks[a], ks[b]))
    if len(pairs) > max_pairs:
        pick = np.random.default_rng(seed).choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[j] for j in sorted(pick)]
    max_abs = 0.0
    degenerate = 0
    checked = 0
    worst = None
    for ka, kb in pairs:
        for q in range(len(qs)):
            c = _corr(Y[ka][:, q], Y[kb][:, q])
            if c is None:
                degenerate += 1
                continue
            checked += 1
            if abs(c) > max_abs:
                max_abs = abs(c)
                worst = {"pair": [list(map(str, ka)), list(map(str, kb))], "level": float(qs[q]),
                         "corr": c}
    ks_max = 0.0
    if model.law.is_finite:
        F = model.law.cdf()
        for k in keys:
            v = np.concatenate(pooled[k])
            emp = StepFunction.from_jumps(v, 1.0 / v.size)
            ks_max = max(ks_max, sup_norm_distance(emp, F))
    return {
        "trials": trials, "pairs": len(pairs), "levels": qs.tolist(),
        "correlations_checked": checked, "degenerate": degenerate,
        "max_abs_corr": max_abs, "threshold": threshold,
        "flagged": max_abs > threshold,
        "degenerate_pass": checked == 0,
        "worst": worst, "ks_max": ks_max,
        "shared_stream": family.shared_stream,
    }
