import copy

import numpy as np
import pytest
import yaml

from bohmqhd import scenario
from bohmqhd.model import Harmonic, SoftCoulomb, UniformField
from bohmqhd.scenario import ScenarioError, from_config, load_scenario, preset, preset_config, validate_config
from bohmqhd.states import CoherentState, GaussianPacket, HarmonicEigenstate

REQUIRED_PRESETS = {"stationary", "free_gaussian", "coherent", "two_sort_product", "symmetrized_pair",
                    "opposite_boost_pair"}


def test_catalog_is_stable():
    cat = scenario.list_scenarios()
    assert REQUIRED_PRESETS <= set(cat)
    assert len(cat) >= 6
    assert all(isinstance(d, str) and d for d in cat.values())


@pytest.mark.parametrize("name", sorted(scenario.PRESETS))
def test_presets_validate_and_build(name):
    validate_config(preset_config(name))
    s = preset(name)
    assert s.name == name
    s.initial_state()  # closed form sampling inside the box
    assert len(s.times) == s.steps + 1


def test_preset_config_is_a_copy():
    cfg = preset_config("coherent")
    cfg["grid"]["n"] = 8
    assert preset("coherent").grid.position_axes[0].n == 256
    with pytest.raises(KeyError):
        preset_config("nope")


def minimal():
    return {
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}],
        "grid": {"lo": -8, "hi": 8, "n": 64},
        "potential": {"harmonic": {"omega": 1.0}},
        "time": {"dt": 0.01, "steps": 2},
        "state": {"orbitals": {"A": [{"type": "gaussian", "center": 0.5, "width": 0.8, "wavenumber": 1.0}]}},
    }


@pytest.mark.parametrize("mutate,where", [
    (lambda c: c["sorts"][0].pop("mass"), "sorts[0].mass"),
    (lambda c: c["grid"].pop("n"), "grid.n"),
    (lambda c: c.pop("time"), "time"),
    (lambda c: c["grid"].update(colour="red"), "grid.colour"),
    (lambda c: c["sorts"][0].update(mass=-1.0), "sorts[0].mass"),
    (lambda c: c["time"].update(steps=1), "time.steps"),
    (lambda c: c["state"]["orbitals"]["A"][0].update(type="plane"), "state.orbitals.A[0].type"),
])
def test_schema_errors_name_the_field(mutate, where):
    cfg = minimal()
    mutate(cfg)
    with pytest.raises(ScenarioError) as info:
        from_config(cfg)
    assert info.value.path == where
    assert str(info.value).startswith(where)


def test_semantic_errors():
    cfg = minimal()
    cfg["grid"]["n"] = 100
    with pytest.raises(ScenarioError, match="grid"):
        from_config(cfg)
    cfg = minimal()
    cfg["sorts"][0]["label"] = "tot"
    with pytest.raises(ScenarioError, match="reserved"):
        from_config(cfg)
    cfg = minimal()
    cfg["sorts"][0]["count"] = 2
    with pytest.raises(ScenarioError, match="state"):
        from_config(cfg)


def test_full_config_round_trip(tmp_path):
    cfg = minimal()
    cfg["sorts"].append({"label": "B", "count": 1, "mass": 2.0})
    cfg["potential"] = {
        "harmonic": {"omega": {"A": 1.0, "B": 0.5}, "center": 0.0},
        "soft_coulomb": {"strength": -1.0, "softening": 1.0, "charges": {"A": 1, "B": -1}},
        "uniform_field": {"amplitude": 0.2, "envelope": {"kind": "cos", "omega": 1.0}},
    }
    cfg["state"]["orbitals"]["B"] = [{"type": "eigenstate", "n": 1}]
    cfg["analysis"] = {"node_eps": 1e-9, "rho_eps": 1e-9}
    cfg["trajectories"] = {"count": 50, "substeps": 2}
    cfg["tolerances"] = {"cauchy": 1e-3}
    path = tmp_path / "two.yaml"
    path.write_text(yaml.safe_dump(cfg))
    s = load_scenario(path)
    assert s.name == "two"
    kinds = {type(p) for p in s.potential.parts}
    assert kinds == {Harmonic, SoftCoulomb, UniformField}
    assert s.potential.time_dependent
    assert isinstance(s.state.orbitals["A"][0], GaussianPacket)
    assert isinstance(s.state.orbitals["B"][0], HarmonicEigenstate)
    assert (s.node_eps, s.rho_eps, s.trajectory_count, s.trajectory_substeps) == (1e-9, 1e-9, 50, 2)
    assert s.tolerances == {"cauchy": 1e-3}


def test_coherent_orbital_parsing():
    s = preset("coherent_2d")
    orb = s.state.orbitals["A"][0]
    assert isinstance(orb, CoherentState)
    assert np.allclose(orb.alpha, [1.0, 0.8j])


def test_load_errors(tmp_path):
    p = tmp_path / "x.yaml"
    p.write_text("- just\n- a list\n")
    with pytest.raises(ScenarioError, match="mapping"):
        load_scenario(p)
    p.write_text("a: [unclosed\n")
    with pytest.raises(ScenarioError, match="parse"):
        load_scenario(p)


def test_overrides_revalidate():
    s = preset("free_gaussian")
    t = s.with_overrides(n=128, dt=2e-3, steps=6, substeps=2)
    assert t.grid.position_axes[0].n == 128 and t.dt == 2e-3 and t.steps == 6 and t.substeps == 2
    assert s.grid.position_axes[0].n == 256
    with pytest.raises(ScenarioError):
        s.with_overrides(n=100)


def test_exact_and_propagated_series_agree():
    s = preset("coherent")
    exact = copy.deepcopy(s.config)
    exact["time"]["source"] = "exact"
    a = s.series()
    b = from_config(exact).series()
    assert np.allclose(a.times, b.times)
    assert np.linalg.norm(a[-1].values - b[-1].values) / np.linalg.norm(b[-1].values) < 1e-6


def test_substeps_keep_the_snapshot_cadence():
    s = preset("free_gaussian").with_overrides(substeps=3)
    series = s.series()
    assert np.allclose(series.times, s.times)
