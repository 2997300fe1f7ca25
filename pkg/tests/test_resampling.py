import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from ergodic_qt.errors import NotASubset, TilingUnverified, UnsupportedModel
from ergodic_qt.fields import eigenvalue_count_field, level_count_field
from ergodic_qt.geometry import FiniteSubset, Group, box, set_distance
from ergodic_qt.model import ColorDistribution, Coloring, RandomModel, sample_coloring
from ergodic_qt.resampling import (independence_audit, overlap_free_cores, resample,
                                   substitution_bound)
from ergodic_qt.stepfn import sup_norm_distance
from ergodic_qt.tiling import construct_quasi_tiling, select_tiles

Z1, Z2 = Group.zd(1), Group.zd(2)
bern = RandomModel(ColorDistribution.bernoulli(0.5))
uniform = RandomModel(ColorDistribution.uniform())


def S(g, items):
    return FiniteSubset(g, [g.normalize(x) for x in items])


def manual(n, k, centers, eps):
    return construct_quasi_tiling(box(Z1, n), [box(Z1, k)], eps, mode="manual",
                                  centers=[[(t,) for t in centers]])


def overlapping():
    # translates of {0..9} every 8 sites: neighbours share two sites
    return manual(90, 10, range(0, 81, 8), 0.2)


# ---------------------------------------------------------------- cores

def test_cores_of_disjoint_translates():
    qt = manual(100, 10, range(0, 100, 10), 0.09)
    cores = overlap_free_cores(qt, 0)
    for (i, t), U in cores.items():
        assert U == S(Z1, range(t[0], t[0] + 10))


def test_cores_with_overlap():
    qt = manual(18, 10, [0, 8], 0.2)
    cores = overlap_free_cores(qt, 0)
    assert cores[(1, (0,))] == S(Z1, range(8))
    assert cores[(1, (8,))] == S(Z1, range(10, 18))


def test_cores_r1_adjacent_intervals():
    qt = manual(30, 10, [0, 10, 20], 0.09)
    rep = overlap_free_cores(qt, 1, report=True)
    assert rep.cores[(1, (0,))] == S(Z1, range(1, 9))
    assert rep.cores[(1, (10,))] == S(Z1, range(11, 19))
    assert rep.distances_ok and rep.fraction_ok
    us = list(rep.cores.values())
    for a in range(len(us)):
        for b in range(a + 1, len(us)):
            assert set_distance(us[a], us[b]) > 1


def test_cores_need_verified_tiling():
    qt = manual(100, 10, [0, 10], 0.09)   # covers only a fifth of the window
    with pytest.raises(TilingUnverified):
        overlap_free_cores(qt, 0)
    assert len(overlap_free_cores(qt, 0, require_verified=False)) == 2


@pytest.fixture(scope="module")
def z_tiling():
    lam = box(Z1, 10_000)
    tiles = select_tiles([box(Z1, n) for n in range(1, 400)], len(lam), 0.09)
    return construct_quasi_tiling(lam, tiles, 0.09)


@pytest.mark.parametrize("r", [0, 1, 2])
def test_cores_on_greedy_tiling(z_tiling, r):
    rep = overlap_free_cores(z_tiling, r, report=True)
    assert rep.distances_ok
    fam = resample(sample_coloring(bern, z_tiling.window, r), z_tiling, bern, r, seed=5)
    assert fam.agreement_ok()


# ---------------------------------------------------------------- resample

def test_no_overlap_means_no_fresh_sites():
    qt = manual(100, 10, range(0, 100, 10), 0.09)
    omega = sample_coloring(bern, qt.window, 0)
    fam = resample(omega, qt, bern, 0, seed=1)
    assert all(v == 0 for v in fam.resampled.values())
    for (i, t), X in fam.configs.items():
        assert np.array_equal(X.values, omega.values_on(X.window))


def test_atom_law_is_deterministic():
    atom = RandomModel(ColorDistribution.atom(0.25))
    qt = overlapping()
    omega = sample_coloring(atom, qt.window, 0)
    fam = resample(omega, qt, atom, 0, seed=9)
    assert sum(fam.resampled.values()) > 0
    for X in fam.configs.values():
        assert np.all(X.values == 0.25)


@given(st.integers(0, 2**31), st.integers(0, 2))
def test_agreement_on_cores_always(seed, r):
    qt = overlapping()
    omega = sample_coloring(uniform, qt.window, seed)
    fam = resample(omega, qt, uniform, r, seed)
    assert fam.agreement_ok()
    for key, X in fam.configs.items():
        assert fam.cores[key].issubset(X.window)


def test_resample_deterministic_and_seed_dependent():
    qt = overlapping()
    omega = sample_coloring(uniform, qt.window, 0)
    a = resample(omega, qt, uniform, 0, seed=1)
    b = resample(omega, qt, uniform, 0, seed=1)
    c = resample(omega, qt, uniform, 0, seed=2)
    assert all(a.configs[k] == b.configs[k] for k in a.configs)
    assert any(a.configs[k] != c.configs[k] for k in a.configs if a.resampled[k])


def test_resampled_marginals_bernoulli():
    qt = overlapping()
    omega = sample_coloring(bern, qt.window, 0)
    n = 10_000
    ones = None
    for s in range(n):
        fam = resample(omega, qt, bern, 0, seed=s)
        vals = np.concatenate([X.values[~np.isin(np.arange(len(X)),
                                                 [X.window.index[x] for x in fam.cores[k]])]
                               for k, X in sorted(fam.configs.items())])
        ones = vals if ones is None else ones + vals
    freq = ones / n
    assert ones.size > 0
    assert np.all(np.abs(freq - 0.5) <= 3 / np.sqrt(n))
    for c in ones:
        assert stats.chisquare([c, n - c]).pvalue > 0.001


def test_block_models_unsupported():
    block = RandomModel(ColorDistribution.bernoulli(0.5), dependence="block", rho=1)
    qt = overlapping()
    omega = sample_coloring(block, qt.window, 0)
    with pytest.raises(UnsupportedModel):
        resample(omega, qt, block, block.r, seed=0)


# ---------------------------------------------------------------- substitution bound

def test_substitution_bound_examples():
    K = box(Z2, 3)
    lc = level_count_field()
    assert substitution_bound(lc, K, K) == 0
    U = FiniteSubset(Z2, K.elements[3:])
    assert substitution_bound(lc, K, U) == 6
    with pytest.raises(NotASubset):
        substitution_bound(lc, U, K)


@pytest.mark.parametrize("kind", ["level", "eigen"])
def test_substitution_bound_dominates(kind):
    fld = level_count_field() if kind == "level" else eigenvalue_count_field(Z2)
    rs = np.random.default_rng(17)
    for trial in range(100):
        pts = {tuple(int(v) for v in p) for p in rs.integers(0, 7, size=(30, 2))}
        K = FiniteSubset(Z2, pts)
        keep = rs.random(len(K)) < rs.random()
        U = FiniteSubset(Z2, (x for x, m in zip(K.elements, keep) if m))
        a = rs.random(len(K))
        b = np.where(keep, a, rs.random(len(K)) * 3 - 1)
        gap = sup_norm_distance(fld(K, Coloring(K, a)), fld(K, Coloring(K, b)))
        assert gap <= substitution_bound(fld, K, U), trial


# ---------------------------------------------------------------- independence audit

def _family(centers, eps, shared, seed=3, model=bern):
    qt = manual(60, 10, centers, eps)
    omega = sample_coloring(model, qt.window, seed)
    return resample(omega, qt, model, 0, seed, shared_stream=shared, require_verified=False)


def test_audit_disjoint_translates_independent():
    fam = _family(range(0, 60, 10), 0.09, False)
    rep = independence_audit(fam, level_count_field(), 10_000, seed=3)
    assert not rep["flagged"] and rep["max_abs_corr"] <= 0.05
    assert rep["ks_max"] <= 0.02


def test_audit_overlapping_fresh_streams_independent():
    # kept cores are disjoint pieces of a product field and the rest is drawn from
    # per-translate streams, so overlapping translates still decorrelate
    fam = _family(range(0, 51, 5), 0.5, False)
    rep = independence_audit(fam, level_count_field(), 10_000, seed=4)
    assert rep["correlations_checked"] > 0
    assert not rep["flagged"]


def test_audit_negative_control_flags():
    fam = _family(range(0, 51, 5), 0.5, True)
    rep = independence_audit(fam, level_count_field(), 2000, seed=3)
    assert rep["flagged"] and rep["max_abs_corr"] > 0.5


def test_audit_atom_degenerate_pass():
    atom = RandomModel(ColorDistribution.atom(0.5))
    fam = _family(range(0, 60, 10), 0.09, False, model=atom)
    rep = independence_audit(fam, level_count_field(), 100)
    assert rep["degenerate_pass"] and not rep["flagged"] and rep["correlations_checked"] == 0


def test_audit_needs_trials():
    fam = _family(range(0, 60, 10), 0.09, False)
    with pytest.raises(ValueError):
        independence_audit(fam, level_count_field(), 99)
