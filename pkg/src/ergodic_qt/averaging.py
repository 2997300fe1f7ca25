"""Empirical pairings, reference pairings and the tiling approximation with
its a / b_i / c_i error decomposition."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .errors import EmptySet, OutOfWindow, ResourceLimit, TilingUnverified, Unsupported
from .fields import AdmissibleField, LevelCountField
from .geometry import FiniteSubset, beta, beta_prime, r_boundary, r_interior, translate_indices
from .model import (ENUMERATION_CAP, Coloring, RandomModel, enumerate_window_arrays,
                    sample_coloring, sample_iid_block)
from .stepfn import StepFunction, linear_combination, sup_norm_distance
from .tiling import QuasiTiling

MC_DEFAULT = 100_000
MC_BATCHES = 20


def _translate_values(K: FiniteSubset, T: Sequence, omega: Coloring) -> np.ndarray:
    """Colors of ``K t`` in the order of ``K`` for every center ``t``; shape ``(|T|, |K|)``."""
    idx = translate_indices(omega.window, K, list(T))
    if np.any(idx < 0):
        raise OutOfWindow("a translate K t leaves the coloring window")
    return omega.values[idx]


def translate_sum(fld: AdmissibleField, K: FiniteSubset, T: Sequence, omega: Coloring,
                  weight: float = 1.0) -> StepFunction:
    """``weight * sum_{t in T} f(K t, omega)``.

    Each translate is evaluated on ``K`` with the translated colors; by
    equivariance this is ``f(K t, omega)``.
    """
    if len(T) == 0:
        return StepFunction.constant(0.0)
    vals = _translate_values(K, T, omega)
    lv = fld.batch_levels(K, vals)
    return StepFunction.from_jumps(lv.reshape(-1), weight)


def empirical_pairing(fld: AdmissibleField, K: FiniteSubset, T, omega: Coloring) -> StepFunction:
    """``(1/|T|) sum_{t in T} f(K t, omega)``."""
    T = list(T.elements if isinstance(T, FiniteSubset) else T)
    if len(K) == 0 or len(T) == 0:
        raise EmptySet("K and T must be nonempty")
    return translate_sum(fld, K, T, omega, 1.0 / len(T))


def _batch_stderr(levels: np.ndarray, n: int, mean: StepFunction) -> float:
    """Max over levels of the batch-means standard error of the averaged staircase."""
    nb = MC_BATCHES if n >= MC_BATCHES else max(n, 1)
    edges = np.linspace(0, n, nb + 1).astype(int)
    xs = mean.breakpoints
    if xs.size == 0:
        return 0.0
    rows = []
    for a, b in zip(edges, edges[1:]):
        if b <= a:
            continue
        part = np.sort(levels[a:b].reshape(-1))
        rows.append(np.searchsorted(part, xs, side="right") / (b - a))
    rows = np.asarray(rows)
    if rows.shape[0] < 2:
        return 0.0
    se = rows.std(axis=0, ddof=1) / np.sqrt(rows.shape[0])
    return float(se.max())


def reference_pairing(fld: AdmissibleField, K: FiniteSubset, model: RandomModel,
                      method: str = "exact", n: int = MC_DEFAULT, seed: int = 0,
                      cap: int = ENUMERATION_CAP) -> tuple[StepFunction, float]:
    """``F(K) = E f(K, .)`` as a staircase plus a standard error.

    * ``exact``: enumerate every configuration of ``K``.
    * ``mc``: average over ``n`` independent window draws; the error is the
      largest per-level standard error from 20 batch means.
    * ``additive``: ``|K| * F({id})`` for exactly additive equivariant fields.
    """
    if method == "exact":
        vals, weights = enumerate_window_arrays(model, K, cap)
        lv = fld.batch_levels(K, vals)
        w = np.repeat(weights, lv.shape[1])
        return StepFunction.from_jumps(lv.reshape(-1), w), 0.0
    if method == "additive":
        if not isinstance(fld, LevelCountField):
            raise Unsupported("additive references need an exactly additive field")
        if not model.is_product:
            raise Unsupported("additive references need a product model")
        one = FiniteSubset(K.group, [K.group.identity])
        F1, _ = reference_pairing(fld, one, model, "exact", cap=cap)
        return F1.scale(float(len(K))), 0.0
    if method != "mc":
        raise Unsupported(f"unknown method {method!r}")
    if model.is_product:
        vals = sample_iid_block(model, len(K), n, seed)
    else:
        vals = np.asarray([sample_coloring(model, K, rng.derive_seed(seed, k)).values
                           for k in range(n)])
    lv = fld.batch_levels(K, vals)
    mean = StepFunction.from_jumps(lv.reshape(-1), 1.0 / n)
    return mean, _batch_stderr(lv, n, mean)


def normalized(f: StepFunction, K) -> StepFunction:
    return f.scale(1.0 / (K if isinstance(K, int) else len(K)))


def gc_sup_distance(fld: AdmissibleField, K: FiniteSubset, empirical: StepFunction,
                    reference: StepFunction) -> float:
    """Sup over levels E of ``|empirical(E) - reference(E)|`` (both already divided by ``|K|``)."""
    return sup_norm_distance(empirical, reference)


# ----------------------------------------------------------- decomposition

@dataclass
class ErrorDecomposition:
    eps: float
    r: int
    a: float
    a_bound: float
    b: list
    b_bound: list
    c: list
    c_bound: list
    total_observed: float
    total_bound: float
    beta_eps: float
    verified: bool = True
    etas: list = field(default_factory=list)

    @property
    def triangle_ok(self) -> bool:
        return self.total_observed <= self.a + sum(self.b) + sum(self.c) + 1e-12

    @property
    def components_ok(self) -> bool:
        tol = 1e-12
        return (self.a <= self.a_bound + tol
                and all(x <= y + tol for x, y in zip(self.b, self.b_bound))
                and all(x <= y + tol for x, y in zip(self.c, self.c_bound)))

    @property
    def total_ok(self) -> bool:
        return self.total_observed <= self.total_bound + 1e-12

    def to_json(self) -> dict:
        return {"eps": self.eps, "r": self.r, "verified": self.verified,
                "a": self.a, "a_bound": self.a_bound, "b": self.b, "b_bound": self.b_bound,
                "c": self.c, "c_bound": self.c_bound, "total_observed": self.total_observed,
                "total_bound": self.total_bound, "beta_eps": self.beta_eps,
                "triangle_ok": self.triangle_ok, "components_ok": self.components_ok,
                "total_ok": self.total_ok}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tile", "eta", "b", "b_bound", "c", "c_bound"])
        for i, (e, b, bb, c, cb) in enumerate(zip(self.etas, self.b, self.b_bound,
                                                  self.c, self.c_bound), start=1):
            w.writerow([i, repr(e), repr(b), repr(bb), repr(c), repr(cb)])
        w.writerow(["a", "", repr(self.a), repr(self.a_bound), "", ""])
        w.writerow(["total", "", repr(self.total_observed), repr(self.total_bound), "", ""])
        return buf.getvalue()


def tile_betas(fld: AdmissibleField, tiles: Sequence[FiniteSubset], r: int) -> list:
    """beta' of each tile, replaced by its running maximum from the right so the
    sequence is non-increasing and dominates every tile's own value."""
    raw = [float(beta_prime(K, fld.b, r)) for K in tiles]
    out = raw[:]
    for i in range(len(out) - 2, -1, -1):
        out[i] = max(out[i], out[i + 1])
    return out


def tiling_approximation(fld: AdmissibleField, lam: FiniteSubset, qt: QuasiTiling,
                         omega: Coloring, r: int, betas: Sequence | None = None,
                         allow_unverified: bool = False) -> tuple[StepFunction, ErrorDecomposition]:
    """``sum_i eta_i <f_i^r, L_i^r> / |K_i|`` with the observed a, b_i, c_i and their bounds.

    ``betas`` is the beta' sequence of the Følner sequence the tiles came from;
    by default it is derived from the tiles themselves.
    """
    diag = qt.diagnostics
    verified = bool(diag is not None and diag.passed)
    if not verified and not allow_unverified:
        raise TilingUnverified("tiling did not pass verification")
    if not lam.issubset(omega.window):
        raise OutOfWindow("window not covered by the coloring")
    eps = float(qt.eps)
    n = len(lam)
    K_f, C_b = fld.K_f, fld.C_b
    whole = fld(lam, omega)
    direct = whole.scale(1.0 / n)
    terms = []
    a_terms = [(1.0, whole)]
    b_obs, b_bnd, c_obs, c_bnd, etas_used = [], [], [], [], []
    a_extra = 0.0
    for i, K in enumerate(qt.tiles, start=1):
        T = list(dict.fromkeys(qt.centers[i - 1]))
        k = len(K)
        eta_i = qt.eta_of(i)
        etas_used.append(eta_i)
        Kr = r_interior(K, r)
        S = translate_sum(fld, K, T, omega)
        a_terms.append((-1.0, S))
        if T:
            P = S.scale(1.0 / len(T))
            if len(Kr) == k:
                Pr = P
            elif len(Kr):
                Pr = translate_sum(fld, Kr, T, omega, 1.0 / len(T))
            else:
                Pr = StepFunction.constant(0.0)
        else:
            P = Pr = StepFunction.constant(0.0)
        terms.append((eta_i / k, Pr))
        b_obs.append(sup_norm_distance(S.scale(1.0 / n), P.scale(eta_i / k)))
        b_bnd.append(4 * K_f * eps * eta_i)
        c_obs.append(eta_i / k * sup_norm_distance(P, Pr))
        bkr = float(fld.b(Kr)) if len(Kr) else 0.0
        c_bnd.append(eta_i * (bkr + (K_f + C_b) * len(r_boundary(K, r))) / k)
        a_extra += eta_i * float(fld.b(K)) / k
    approx = linear_combination(terms)
    a_obs = linear_combination(a_terms).sup_norm / n
    a_bnd = (5 * K_f + 15 * C_b) * eps + 12 * a_extra
    if betas is None:
        betas = tile_betas(fld, qt.tiles, r)
    beta_e = beta(eps, betas)
    total_bnd = (9 * K_f + 15 * C_b) * eps + 12 * (2 + K_f + C_b) * beta_e
    dec = ErrorDecomposition(eps, r, a_obs, a_bnd, b_obs, b_bnd, c_obs, c_bnd,
                             sup_norm_distance(direct, approx), total_bnd, beta_e,
                             verified, etas_used)
    return approx, dec
