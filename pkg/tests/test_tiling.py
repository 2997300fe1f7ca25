import json
import math
import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergodic_qt.errors import BadTileChain, DomainError, IndexOutOfRange, InsufficientSequence, TilingInfeasible
from ergodic_qt.geometry import FiniteSubset, Group, beta, box
from ergodic_qt.tiling import (QuasiTiling, center_density_gap, construct_quasi_tiling, eta, etas,
                               n_of_eps, select_tiles, verify_quasi_tiling, weighted_eta_bound)

Z1, Z2 = Group.zd(1), Group.zd(2)


def n_oracle(eps):
    """ceil(ln eps / ln(1-eps)) at 80 digits from the decimal reading of eps."""
    with mpmath.workdps(80):
        e = mpmath.mpf(repr(eps))
        return int(mpmath.ceil(mpmath.log(e) / mpmath.log(1 - e)))


def test_n_of_eps_examples():
    assert n_of_eps(0.5) == 1
    assert n_of_eps(0.1) == 22
    assert n_of_eps(0.01) == 459
    with pytest.raises(DomainError):
        n_of_eps(1.0)


@given(st.integers(1, 9999).map(lambda k: k / 10000))
def test_n_of_eps_matches_oracle(eps):
    assert n_of_eps(eps) == n_oracle(eps)


def test_n_of_eps_integer_edge():
    # eps = 1/2: ln(1/2)/ln(1/2) is exactly 1 and must not round up to 2
    assert n_of_eps(0.5) == 1
    # (1-eps)^N <= eps is the defining property, with N-1 failing
    for eps in (0.3, 0.25, 0.2, 0.05):
        n = n_of_eps(eps)
        assert (1 - eps) ** n <= eps + 1e-15 and (1 - eps) ** (n - 1) > eps


def test_eta_examples():
    for eps in (0.09, 0.1, 0.05):
        assert eta(eps, n_of_eps(eps)) == eps
    assert etas(0.1).sum() == pytest.approx(1 - 0.9 ** 22, abs=1e-12)
    assert etas(0.1).sum() == pytest.approx(0.901523, abs=1e-6)
    with pytest.raises(IndexOutOfRange):
        eta(0.1, 23)
    with pytest.raises(IndexOutOfRange):
        eta(0.1, 0)


@pytest.mark.parametrize("eps", [0.005, 0.01, 0.05, 0.09])
def test_eta_sum_identity(eps):
    s = etas(eps).sum()
    assert abs(s - (1 - (1 - eps) ** n_of_eps(eps))) <= 1e-12
    assert 1 - eps <= s <= 1


@pytest.mark.parametrize("eps", list(np.geomspace(1e-3, 0.099, 25)))
def test_eta_range(eps):
    n = n_of_eps(eps)
    e = etas(eps)
    assert np.all(e >= eps / n - 1e-15) and np.all(e <= eps + 1e-15)


def test_weighted_eta_bound_examples():
    assert weighted_eta_bound([1.0] * 100, 0.04) == pytest.approx(1.2)
    assert weighted_eta_bound([0.0] * 100, 0.04) == 0
    half = [1 / (2 * n) for n in range(1, 200)]
    assert weighted_eta_bound(half, 0.04) == pytest.approx(0.2)
    assert float(np.dot(half[:n_of_eps(0.04)], etas(0.04))) <= beta(0.04, half)
    with pytest.raises(InsufficientSequence):
        weighted_eta_bound([1.0], 0.04)


def test_weighted_eta_bound_random():
    rs = np.random.default_rng(0)
    for k in range(1000):
        eps = float(rs.uniform(0.005, 0.099))
        n = n_of_eps(eps)
        a = rs.uniform(-1, 1, n) * rs.uniform(0, 5)
        assert abs(np.dot(a, etas(eps))) <= weighted_eta_bound(a, eps) + 1e-12


# ---------------------------------------------------------------- manual

def interval_tiling(eps=0.1):
    lam = box(Z1, 100)
    K = box(Z1, 10)
    return construct_quasi_tiling(lam, [K], eps, mode="manual",
                                  centers=[[(t,) for t in range(0, 100, 10)]])


def test_manual_exact_tiling():
    qt = interval_tiling()
    d = qt.diagnostics
    assert d.cover_fraction == 1 and d.definition_ok
    assert d.cross_disjoint_ok and d.eps_disjoint_ok and d.contained_ok
    gap, bound = center_density_gap(qt, 1)
    assert gap == pytest.approx(abs(10 / 100 - 0.1 / 10))
    assert bound == pytest.approx(4 * 0.1 * 0.1 / 10)


def test_manual_no_fit():
    with pytest.raises(TilingInfeasible):
        construct_quasi_tiling(box(Z1, 5), [box(Z1, 10)], 0.1, mode="manual", centers=[[(0,)]])


def test_duplicate_centers_fail_eps_disjointness():
    qt = construct_quasi_tiling(box(Z1, 100), [box(Z1, 10)], 0.1, mode="manual",
                                centers=[[(0,), (0,), (10,)]])
    assert not qt.diagnostics.eps_disjoint_ok


def test_partial_cover_fails():
    qt = construct_quasi_tiling(box(Z1, 100), [box(Z1, 10)], 0.1, mode="manual",
                                centers=[[(t,) for t in range(0, 70, 10)]])
    assert qt.diagnostics.cover_fraction == pytest.approx(0.7)
    assert not qt.diagnostics.cover_ok


def test_bad_chain():
    with pytest.raises(BadTileChain):
        construct_quasi_tiling(box(Z1, 100), [box(Z1, 5), box(Z1, 5)], 0.1, mode="manual",
                               centers=[[], []])


def test_center_density_gap_index():
    with pytest.raises(IndexOutOfRange):
        center_density_gap(interval_tiling(), 2)


# ---------------------------------------------------------------- greedy

def test_stp_half():
    lam = box(Z1, 100)
    qt = construct_quasi_tiling(lam, [box(Z1, 2)], 0.5)
    d = qt.diagnostics
    assert d.passed
    assert len(qt.centers[0]) >= 13
    assert abs(len(qt.centers[0]) * 2 / 100 - 0.5) <= 0.25
    # by-hand oracle: canonical scan accepts 0, 2, 4, ... until the target 25 is reached
    assert qt.centers[0][:5] == [(0,), (2,), (4,), (6,), (8,)]


def test_stp_requires_n_tiles():
    with pytest.raises(DomainError):
        construct_quasi_tiling(box(Z1, 100), [box(Z1, 2)], 0.09)


@pytest.fixture(scope="module")
def z_tiling():
    lam = box(Z1, 10_000)
    tiles = select_tiles([box(Z1, n) for n in range(1, 400)], len(lam), 0.09)
    return construct_quasi_tiling(lam, tiles, 0.09)


def test_stp_z_large_passes(z_tiling):
    d = z_tiling.diagnostics
    assert d.passed and d.cover_fraction >= 1 - 2 * 0.09
    for i in range(1, len(z_tiling.tiles) + 1):
        gap, bound = center_density_gap(z_tiling, i)
        assert gap <= bound


def test_greedy_deterministic(z_tiling):
    lam = z_tiling.window
    again = construct_quasi_tiling(lam, z_tiling.tiles, 0.09)
    assert json.dumps(again.to_json(), sort_keys=True) == json.dumps(z_tiling.to_json(), sort_keys=True)


def test_json_roundtrip(z_tiling):
    doc = z_tiling.to_json()
    back = QuasiTiling.from_json(json.loads(json.dumps(doc)))
    assert back.centers == z_tiling.centers
    assert verify_quasi_tiling(back).passed


@given(seed=st.integers(0, 10 ** 6), eps=st.sampled_from([0.09, 0.05, 0.2, 0.3]),
       n=st.integers(200, 2000))
def test_greedy_never_violates_disjointness(seed, eps, n):
    lam = box(Z1, n)
    try:
        tiles = select_tiles([box(Z1, k) for k in range(1, 120)], n, eps)
    except TilingInfeasible:
        return
    qt = construct_quasi_tiling(lam, tiles, eps, order_seed=seed, strict=False)
    d = qt.diagnostics
    assert d.eps_disjoint_ok and d.cross_disjoint_ok and d.contained_ok
    if d.passed:
        for i in range(1, len(tiles) + 1):
            gap, bound = center_density_gap(qt, i)
            assert gap <= bound


def test_randomized_z2_center_density():
    """Random scan orders on a 40x40 window: every tile meeting its density
    target satisfies the center-density bound."""
    lam = box(Z2, 40)
    tiles = [box(Z2, k) for k in range(1, 27)]
    checked = 0
    for seed in range(100):
        qt = construct_quasi_tiling(lam, tiles, 0.09, order_seed=seed, strict=False)
        d = qt.diagnostics
        assert d.eps_disjoint_ok and d.cross_disjoint_ok
        for t in d.tiles:
            if d.passed or t.density_ok:
                gap, bound = center_density_gap(qt, t.index)
                assert gap <= bound
                checked += 1
    assert checked > 0


def test_stp_infeasible_reports_diagnostics():
    lam = box(Z2, 20)
    with pytest.raises(TilingInfeasible) as err:
        construct_quasi_tiling(lam, [box(Z2, k) for k in range(1, 27)], 0.09)
    assert err.value.diagnostics is not None and not err.value.diagnostics.passed
