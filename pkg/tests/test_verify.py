import json
import math

import numpy as np
import pytest

from bohmqhd import bohm, verify
from bohmqhd.lattice import ConfigurationGrid, SortSpec
from bohmqhd.model import free, harmonic
from bohmqhd.propagator import evolve
from bohmqhd.states import CoherentState, GaussianPacket, StateSpec, classical_path, sample_state
from bohmqhd.verify import ReportEntry, ResidualReport

from conftest import preset_series

REPORT_KEYS = {"scenario", "equation", "sort", "resolution", "norm", "denominator", "coverage", "order",
               "mode", "tolerance", "passed", "flags", "sense"}


@pytest.mark.parametrize("name", ["two_sort_product", "symmetrized_pair", "coherent"])
def test_cauchy_equivalence_is_algebraic(name):
    s, series = preset_series(name)
    for lab in [x.label for x in s.grid.sorts] + ["tot"]:
        assert verify.cauchy_equivalence_residual(series, 2, lab, s.potential).norm < 1e-10


def test_stationary_balances():
    s, series = preset_series("stationary")
    r = verify.mpqhd_continuity_residual(series, 2, "A")
    assert r.terms["d rho/dt"] < 1e-8 and r.terms["div j"] < 1e-8
    e = verify.ehrenfest_residual(series, 2, "A", s.potential)
    assert e.terms["dj/dt"] < 1e-8
    assert e.norm < 1e-5
    c = verify.cauchy_parts(series, 2, "A", s.potential)
    assert np.max(np.abs(c.lhs[:, ~c.residual.mask])) < 1e-8
    assert c.residual.norm < 1e-5


def test_coherent_cauchy_left_side_is_the_classical_force():
    # rigid flow: (v.grad)v = 0 and rho dv/dt = rho * a_c with a_c = -omega^2 x_c
    g = ConfigurationGrid.uniform([SortSpec("A", 1, 1.0)], -12, 12, 256)
    spec = StateSpec({"A": [CoherentState(1 + 0.5j)]})
    series = evolve(sample_state(spec, g, potential=harmonic()), harmonic(), 1e-3, 4)
    parts = verify.cauchy_parts(series, 2, "A", harmonic())
    xc = classical_path(math.sqrt(2), math.sqrt(2) * 0.5, 1.0, series[2].t)[0]
    rho = np.abs(series[2].values) ** 2
    oracle = -xc * rho
    assert np.linalg.norm(parts.lhs[0] - oracle) / np.linalg.norm(oracle) < 1e-4
    assert parts.residual.terms["rho (v.grad)v"] < 1e-4 * parts.residual.terms["rho dv/dt"]


def test_linear_equations_sum_exactly():
    s, series = preset_series("two_sort_product")
    for fn in (lambda lab: verify.mpqhd_continuity_residual(series, 2, lab),
               lambda lab: verify.ehrenfest_residual(series, 2, lab, s.potential)):
        parts = [fn(lab) for lab in ("A", "B")]
        tot = fn("tot")
        gap = np.max(np.abs(parts[0].field + parts[1].field - tot.field))
        assert gap < 1e-12 * max(p.denominator for p in parts)


def test_nonlinearity_on_opposite_boosts():
    s, series = preset_series("opposite_boost_pair")
    nl = verify.nonlinearity_demo(series, 2, s.potential)
    assert not nl.inconclusive
    assert nl.ratio >= 10 and nl.ehrenfest_gap < 1e-10
    assert nl.passed


def test_nonlinearity_single_sort_is_inconclusive():
    s, series = preset_series("coherent")
    nl = verify.nonlinearity_demo(series, 2, s.potential)
    assert nl.inconclusive and "single-sort" in nl.flags
    assert not nl.passed


def test_nonlinearity_equal_velocities_is_inconclusive():
    g = ConfigurationGrid.uniform([SortSpec("A", 1, 1.0), SortSpec("B", 1, 1.0)], -12, 12, 128)
    spec = StateSpec({"A": [GaussianPacket(0.0, 1.0, 1.0)], "B": [GaussianPacket(0.0, 1.0, 1.0)]})
    series = evolve(sample_state(spec, g), free(), 1e-3, 2)
    nl = verify.nonlinearity_demo(series, 1, free())
    assert nl.inconclusive and "equal-velocities" in nl.flags


def test_identities_on_a_snapshot():
    s, _ = preset_series("symmetrized_pair")
    qp, cov = verify.quantum_potential_identity(s.initial_state(np.clongdouble))
    assert qp < 1e-8 and 0 < cov <= 100
    for lab in ("A", "tot"):
        assert verify.force_identity(s.initial_state(), lab).norm < 1e-5


def test_fit_order_recovers_a_power_law():
    steps = [0.4, 0.2, 0.1, 0.05]
    assert verify.fit_order(steps, [3 * h ** 2 for h in steps]) == pytest.approx(2.0)
    assert verify.fit_order(steps, [h ** 1.5 for h in steps]) == pytest.approx(1.5)


def test_convergence_study_flags():
    table = verify.convergence_study(lambda r: r, [4.0, 2.0, 1.0], lambda r: r ** 2)
    assert table.order == pytest.approx(2.0) and not table.flags
    bumpy = verify.convergence_study(lambda r: r, [4.0, 2.0, 1.0], lambda r: {4.0: 1.0, 2.0: 0.1, 1.0: 0.5}[r])
    assert "non-monotone" in bumpy.flags
    floor = verify.convergence_study(lambda r: r, [4.0, 2.0, 1.0], lambda r: 1e-15)
    assert floor.order is None and "floor" in floor.flags
    spatial = verify.convergence_study(lambda n: n, [16, 32, 64], lambda n: n ** -4.0, parameter="n")
    assert spatial.order == pytest.approx(4.0)
    with pytest.raises(ValueError):
        verify.convergence_study(lambda r: r, [1.0, 2.0], lambda r: r)
    with pytest.raises(ValueError):
        verify.convergence_study(lambda r: r, [1.0, 2.0, 3.0], lambda r: r, parameter="x")


def test_temporal_order_of_free_gaussian_continuity():
    s, _ = preset_series("free_gaussian")
    table = verify.convergence_study(lambda dt: s.with_overrides(dt=dt, steps=4).series(), [4e-3, 2e-3, 1e-3],
                                     verify.bm_continuity_norm)
    assert abs(table.order - 2.0) <= 0.3


def test_stationary_convergence_hits_the_floor():
    s, _ = preset_series("stationary")
    table = verify.convergence_study(lambda dt: s.with_overrides(dt=dt).series(), [4e-3, 2e-3, 1e-3],
                                     lambda ser: bohm.bm_continuity_residual(ser, 2).absolute, floor=1e-8)
    assert table.order is None and "floor" in table.flags


@pytest.fixture(scope="module")
def report():
    s, series = preset_series("two_sort_product")
    return verify.verify_series(series, s.potential, scenario=s.name, extended=s.initial_state(np.clongdouble))


def test_report_covers_every_equation(report):
    eqs = {(e.equation, e.sort) for e in report.entries}
    for lab in ("A", "B", "tot"):
        for eq in ("mpqhd_continuity", "ehrenfest", "cauchy", "cauchy_equivalence", "force_identity"):
            assert (eq, lab) in eqs
    for eq in ("quantum_potential_identity", "bm_continuity", "continuity_sum", "ehrenfest_sum",
               "cauchy_nonlinearity_ratio"):
        assert eq in {e for e, _ in eqs}
    assert ("bm_eulerian", "A1") in eqs and ("bm_eulerian", "B1") in eqs
    assert report.passed, [e.to_dict() for e in report.failures()]


def test_report_json_schema_and_determinism(report):
    doc = json.loads(report.to_json())
    assert set(doc) == {"meta", "entries", "convergence", "passed"}
    for e in doc["entries"]:
        assert set(e) == REPORT_KEYS
        assert e["norm"] >= 0
        assert 0 < e["coverage"] <= 100
        assert set(e["resolution"]) == {"n", "dt"}
    keys = [(e["scenario"], e["equation"], json.dumps(e["resolution"], sort_keys=True), e["sort"])
            for e in doc["entries"]]
    assert keys == sorted(keys)
    s, series = preset_series("two_sort_product")
    again = verify.verify_series(series, s.potential, scenario=s.name, extended=s.initial_state(np.clongdouble))
    assert again.to_json() == report.to_json()


def test_report_text_table(report):
    text = report.to_text()
    assert text.splitlines()[0].startswith("scenario")
    assert "cauchy_equivalence" in text and " NO" not in text


def test_entry_pass_logic():
    base = dict(scenario="s", equation="e", sort="A", resolution={}, denominator=1.0, coverage=100.0)
    assert ReportEntry(norm=1e-6, tolerance=1e-5, **base).passed
    assert not ReportEntry(norm=1e-4, tolerance=1e-5, **base).passed
    assert not ReportEntry(norm=float("nan"), tolerance=1.0, **base).passed
    assert ReportEntry(norm=0.5, tolerance=0.01, sense="min", **base).passed
    assert not ReportEntry(norm=0.001, tolerance=0.01, sense="min", **base).passed
    assert ReportEntry(norm=123.0, tolerance=None, **base).passed
    rep = ResidualReport([ReportEntry(norm=1e-4, tolerance=1e-5, **base)])
    assert not rep.passed and len(rep.failures()) == 1
    assert json.loads(rep.to_json())["entries"][0]["passed"] is False


def test_unknown_sort_label_is_rejected():
    s, series = preset_series("coherent")
    with pytest.raises(ValueError):
        verify.mpqhd_continuity_residual(series, 2, "Z")
