import itertools
import json
import math

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergodic_qt import cli
from ergodic_qt.errors import DomainError, InsufficientSequence, Unsupported
from ergodic_qt.fields import eigenvalue_count_field, level_count_field
from ergodic_qt.geometry import FolnerSpec, Group, box, build_nested_folner
from ergodic_qt.harness import (CONFIG_SCHEMA, CSV_HEADER, Certificate, ExperimentConfig,
                                cauchy_bound, cauchy_diagnostic, certificate_betas,
                                estimate_fstar, exact_path_approximation, exact_tiling_check,
                                exact_tiling_path, reference_assembly, run_convergence,
                                write_schema)
from ergodic_qt.model import ColorDistribution, RandomModel, marginal_cdf, sample_coloring
from ergodic_qt.stepfn import StepFunction, linear_combination, sup_norm_distance
from ergodic_qt.tiling import etas

Z1, Z2 = Group.zd(1), Group.zd(2)
bern = RandomModel(ColorDistribution.bernoulli(0.5))
BERN_DOC = {"law": {"kind": "bernoulli", "p": 0.5}}


def small_doc(**over):
    doc = {"group": {"kind": "ZPowD", "d": 2}, "shape": "box", "windows": [10, 20, 30],
           "model": BERN_DOC, "field": {"kind": "level_count"}, "eps": [0.09, 0.05],
           "seeds": 10, "fstar": {"method": "analytic"}, "exact_tile": 3}
    doc.update(over)
    return doc


# ---------------------------------------------------------------- config

def test_config_roundtrip():
    cfg = ExperimentConfig.from_json(small_doc())
    assert cfg.seeds == list(range(10)) and cfg.kappa_for(0.09) == pytest.approx(0.3)
    again = ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert again.to_json() == cfg.to_json()


@pytest.mark.parametrize("bad", [
    {"eps": [0.1]}, {"eps": [0.0]}, {"seeds": [1, 1]}, {"windows": [20, 10]},
    {"unknown": 1}, {"field": {"kind": "magnetic"}}, {"kappa": -1},
])
def test_config_rejects(bad):
    with pytest.raises((jsonschema.ValidationError, DomainError)):
        ExperimentConfig.from_json(small_doc(**bad))


def test_config_default_shape():
    doc = small_doc(group={"kind": "Lamplighter"})
    del doc["shape"]
    assert ExperimentConfig.from_json(doc).shape == "lamp"
    doc["group"] = {"kind": "Heisenberg3"}
    assert ExperimentConfig.from_json(doc).shape == "ball"


def test_schema_file(tmp_path):
    p = tmp_path / "schema.json"
    write_schema(p)
    schema = json.loads(p.read_text())
    assert schema == CONFIG_SCHEMA
    jsonschema.Draft7Validator.check_schema(schema)


# ---------------------------------------------------------------- certificate

def test_certificate_values():
    c = Certificate(0.09, 0.3, 0.2, 1.0, 5.0, 0.1)
    assert c.fine_bound == pytest.approx((20 + 150) * 0.09 + (17 + 85 + 46) * 0.2 + 0.3)
    assert c.coarse_bound == pytest.approx((37 + 235 + 46) * 0.3 + 0.3)
    assert c.fine_ok and c.coarse_ok and c.chain_ok


@given(st.floats(1e-4, 0.0999), st.floats(0, 1), st.floats(0, 20), st.floats(0, 20))
def test_certificate_chain(eps, frac, K_f, C_b):
    # beta <= sqrt(eps) and kappa = sqrt(eps) force fine <= coarse
    c = Certificate(eps, math.sqrt(eps), frac * math.sqrt(eps), K_f, C_b, 0.0)
    assert c.fine_bound <= c.coarse_bound + 1e-12


def test_certificate_band():
    c = Certificate(0.09, 0.3, 0.0, 1.0, 0.0, 2.15, band=0.1)
    assert c.fine_bound == pytest.approx(2.1)
    assert c.fine_ok
    assert not Certificate(0.09, 0.3, 0.0, 1.0, 0.0, 2.15).fine_ok


def test_certificate_betas_below_sqrt():
    fld = eigenvalue_count_field(Z2)
    spec = certificate_betas(fld, Z2, 0, 0.05, "box")
    from ergodic_qt.geometry import beta
    for e in (0.09, 0.05):
        assert beta(e, list(spec.betas)) <= math.sqrt(e)


# ---------------------------------------------------------------- f*

def test_fstar_analytic_bernoulli():
    est = estimate_fstar(level_count_field(), bern, "analytic")
    assert est.f == StepFunction((0.0, 1.0), (0, 0.5, 1)) and est.band == 0


def test_fstar_analytic_atom():
    atom = RandomModel(ColorDistribution.atom(0.4))
    assert estimate_fstar(level_count_field(), atom).f == StepFunction.unit_step(0.4)


def test_fstar_errors():
    with pytest.raises(Unsupported):
        estimate_fstar(eigenvalue_count_field(Z1), bern, "analytic")
    with pytest.raises(DomainError):
        estimate_fstar(eigenvalue_count_field(Z1), bern, "large_volume")
    with pytest.raises(Unsupported):
        estimate_fstar(level_count_field(), bern, "bogus", folner=FolnerSpec(Z1, [], "box"))


def test_fstar_large_volume_level_count_close_to_analytic():
    est = estimate_fstar(level_count_field(), bern, "large_volume",
                         folner=FolnerSpec(Z2, [], "box"), index=100, check_index=70, seeds=4)
    assert sup_norm_distance(est.f, marginal_cdf(bern)) <= 0.01
    assert est.band == 2 * est.self_consistency


def test_fstar_eigen_z_self_consistent():
    est = estimate_fstar(eigenvalue_count_field(Z1), bern, "large_volume",
                         folner=FolnerSpec(Z1, [], "box"), index=10_000, check_index=5000,
                         seeds=50)
    assert est.self_consistency <= 0.02


def test_fstar_boxes_vs_balls():
    fld = eigenvalue_count_field(Z2)
    a = estimate_fstar(fld, bern, "large_volume", folner=FolnerSpec(Z2, [], "box"),
                       index=40, seeds=4)
    b = estimate_fstar(fld, bern, "large_volume", folner=FolnerSpec(Z2, [], "ball"),
                       index=28, seeds=4)
    assert sup_norm_distance(a.f, b.f) <= 0.02


def test_reference_assembly_level_count():
    fld = level_count_field()
    eps = 0.09
    folner = build_nested_folner(Z1, 60, fld.b, 0, "box")
    A = reference_assembly(fld, bern, eps, folner)
    # F(K)/|K| is the one-site distribution function for every K
    expect = marginal_cdf(bern).scale(float(np.sum(etas(eps))))
    assert sup_norm_distance(A, expect) <= 1e-12
    with pytest.raises(InsufficientSequence):
        reference_assembly(fld, bern, eps, build_nested_folner(Z1, 5, fld.b, 0, "box"))


def test_reference_assembly_mc_reproducible():
    fld = eigenvalue_count_field(Z1)
    folner = build_nested_folner(Z1, 60, fld.b, 0, "box")
    a = reference_assembly(fld, bern, 0.09, folner, method="mc", n=50, seed=1)
    b = reference_assembly(fld, bern, 0.09, folner, method="mc", n=50, seed=1)
    assert a == b


# ---------------------------------------------------------------- Cauchy

def test_cauchy_rejects_degenerate():
    for eps, delta in ((0.05, 0.05), (0.05, 0.09), (0.2, 0.05), (0.09, 0.0)):
        with pytest.raises(DomainError):
            cauchy_diagnostic(level_count_field(), bern, eps, delta)


def test_cauchy_level_count_quasi():
    rep = cauchy_diagnostic(level_count_field(), bern, 0.09, 0.05, group=Z1)
    assert rep.passed and rep.observed <= rep.bound <= rep.triangle_bound
    # b = 0: the bound reduces to 9 delta + 25 beta(delta) with beta = 0
    assert rep.bound == pytest.approx(cauchy_bound(1, 0, 0.05, 0.0))


def test_cauchy_exact_path_is_zero():
    rep = cauchy_diagnostic(level_count_field(), bern, 0.09, 0.05, group=Z1, path="exact")
    assert rep.observed == 0 and rep.passed


def test_cauchy_exact_path_z_only():
    with pytest.raises(Unsupported):
        cauchy_diagnostic(level_count_field(), bern, 0.09, 0.05, group=Group.heisenberg(),
                          path="exact")
    with pytest.raises(DomainError):
        cauchy_diagnostic(level_count_field(), bern, 0.09, 0.05, group=Z1, path="spiral")


# ---------------------------------------------------------------- exact tiling

def _oracle_tiling(d, m, n):
    q = n // m
    T = sorted(itertools.product(*[range(0, q * m, m)] * d))
    covered = {tuple(t[a] + k[a] for a in range(d)) for t in T
               for k in itertools.product(range(m), repeat=d)}
    rest = [x for x in itertools.product(range(n), repeat=d) if x not in covered]
    return T, rest


@pytest.mark.parametrize("d,m,n,nt,nr", [(1, 10, 100, 10, 0), (1, 10, 105, 10, 5),
                                          (2, 3, 7, 4, 13)])
def test_exact_tiling_examples(d, m, n, nt, nr):
    T, rest = exact_tiling_path(d, m, n)
    oT, orest = _oracle_tiling(d, m, n)
    assert (len(T), len(rest)) == (nt, nr)
    assert sorted(T.elements) == oT and sorted(rest.elements) == sorted(orest)
    rep = exact_tiling_check(d, m, n)
    assert rep["passed"] and rep["residual_in_boundary"]


def test_exact_tiling_residual_values():
    _, rest = exact_tiling_path(1, 10, 105)
    assert [x[0] for x in rest.elements] == list(range(100, 105))
    with pytest.raises(DomainError):
        exact_tiling_path(0, 3, 7)


def test_exact_path_approximation_level_count():
    lam = box(Z2, 30)
    omega = sample_coloring(bern, lam, 0)
    approx = exact_path_approximation(level_count_field(), lam, omega, 3)
    assert sup_norm_distance(approx, level_count_field()(lam, omega).scale(1 / 900)) <= 1e-12


# ---------------------------------------------------------------- convergence

def test_run_convergence_small():
    rep = run_convergence(ExperimentConfig.from_json(small_doc()))
    assert rep.passed
    s = rep.summary
    assert s["exact_path_ok"] and s["chain_ok"] and not s["errors"]
    assert all(s["monotone"].values())
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == CSV_HEADER
    assert len(lines) == 1 + 3 * 2 * 10


def test_run_convergence_deterministic():
    cfg = ExperimentConfig.from_json(small_doc(seeds=4))
    a, b = run_convergence(cfg), run_convergence(cfg)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


def test_run_convergence_atom_law():
    doc = small_doc(model={"law": {"kind": "atom", "value": 0.5}}, seeds=2)
    rep = run_convergence(ExperimentConfig.from_json(doc))
    assert rep.passed
    assert all(r["observed"] == 0 for r in rep.rows)


def test_run_convergence_eigen_with_band():
    doc = small_doc(field={"kind": "eigenvalue_count"}, windows=[10, 20], seeds=3,
                    fstar={"method": "large_volume", "index": 40, "check_index": 30, "seeds": 2},
                    min_frequency=0.95)
    del doc["exact_tile"]
    rep = run_convergence(ExperimentConfig.from_json(doc))
    assert rep.passed and rep.summary["fstar"]["band"] > 0


def test_run_convergence_decomposition_labels():
    doc = small_doc(windows=[30], seeds=1, eps=[0.09], decomposition=True)
    rep = run_convergence(ExperimentConfig.from_json(doc))
    labels = {d["tiling"] for d in rep.summary["decomposition"]}
    assert labels <= {"passed", "unverified", "below empirical j0"}


# ---------------------------------------------------------------- CLI

CLI_CASES = {
    "tile": {"group": {"kind": "ZPowD", "d": 1}, "shape": "box", "window": 10_000, "eps": 0.09,
             "max_tile": 399},
    "check-field": {"group": {"kind": "ZPowD", "d": 2}, "field": {"kind": "eigenvalue_count"},
                    "model": BERN_DOC, "trials": 10, "seed": 1, "max_size": 30},
    "resample-audit": {"group": {"kind": "ZPowD", "d": 1}, "shape": "box", "window": 60,
                       "tile": 10, "eps": 0.5, "centers": list(range(0, 51, 5)),
                       "model": BERN_DOC, "field": {"kind": "level_count"}, "r": 0, "seed": 3,
                       "trials": 500, "shared_stream": True},
    "converge": small_doc(seeds=3),
    "cauchy": {"group": {"kind": "ZPowD", "d": 1}, "field": {"kind": "level_count"},
               "model": BERN_DOC, "eps": 0.09, "delta": 0.05, "path": "quasi"},
    "exact-tiling": {"d": 2, "m": 3, "n": 7},
}


@pytest.mark.parametrize("cmd", sorted(CLI_CASES))
def test_cli_deterministic(cmd, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(CLI_CASES[cmd]))
    outs = []
    for k in range(2):
        d = tmp_path / f"out{k}"
        assert cli.main([cmd, str(cfg), "--out-dir", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    capsys.readouterr()
    assert outs[0] == outs[1]
    assert f"{cmd}.json" in outs[0]
    json.loads(outs[0][f"{cmd}.json"])


def test_cli_exact_tiling_flags(capsys):
    assert cli.main(["exact-tiling", "--d", "1", "--m", "10", "--n", "105"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["num_centers"] == 10 and out["residual_size"] == 5


def test_cli_failing_gate_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    doc = dict(CLI_CASES["resample-audit"], expect_flag=False)
    cfg.write_text(json.dumps(doc))
    assert cli.main(["resample-audit", str(cfg)]) == 1
    capsys.readouterr()
