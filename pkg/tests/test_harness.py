import dataclasses
import json
import math
import os

import numpy as np
import pytest
import yaml

from formation_isac import cli, config, experiments, io, selftest
from formation_isac.config import ConfigError, GridSpec, ScenarioDoc


def short_doc(n_slots=20):
    doc = ScenarioDoc()
    return dataclasses.replace(doc, flight=dataclasses.replace(doc.flight, n_slots=n_slots))


# -- config ---------------------------------------------------------------------------

def test_default_yaml_matches_builtin():
    here = os.path.join(os.path.dirname(__file__), "..", "configs", "default.yaml")
    assert config.load(here) == ScenarioDoc()


def test_dump_load_round_trip(tmp_path):
    doc = short_doc(40)
    (tmp_path / "s.yaml").write_text(config.dump(doc))
    assert config.load(tmp_path / "s.yaml") == doc


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"aero": {"beta": 1.0, "betta": 2.0}},
    {"formations": []},
    {"seed": -1},
    {"beamform": {"leaders": "nobody"}},
    {"lqr_sweep": {"w_scales": [0.0]}},
    {"aero": {"beta": float("nan")}},
])
def test_bad_documents_rejected(raw):
    with pytest.raises(ConfigError):
        config.from_dict(raw)


def test_units_convert():
    bf = ScenarioDoc().beamform
    assert bf.p_max == pytest.approx(1.0)
    assert bf.gamma_th == pytest.approx(1e-3)
    assert ScenarioDoc().channel.build().noise_power == pytest.approx(1e-12)
    assert ScenarioDoc().slot_weight == 25.0


def test_grid_parse():
    g = GridSpec.parse("-2:2:100,-1:3:5")
    xs, ys = g.axes()
    assert xs.size == 100 and ys[0] == -1 and ys[-1] == 3
    assert GridSpec.parse(str(g)) == g
    for bad in ("1:2:3", "0:1:1,0:1:4", "1:0:5,0:1:5", "a:b:c,d:e:f"):
        with pytest.raises(ConfigError):
            GridSpec.parse(bad)


def test_sensing_points_reproducible():
    s = ScenarioDoc().sensing
    a, b = s.points(30.0), s.points(30.0)
    assert np.array_equal(a, b) and a.shape == (8, 3)
    assert np.all((a[:, 0] >= 15) & (a[:, 0] <= 85) & (a[:, 1] >= -140) & (a[:, 1] <= -130))


# -- io ---------------------------------------------------------------------------

def test_csv_full_precision(tmp_path):
    path = io.write_csv(tmp_path / "t.csv", ("a", "b"), [(0.1 + 0.2, True), (math.pi, 3)])
    raw = path.read_bytes()
    assert raw.count(b"\r\n") == 3
    rows = io.read_csv(path)
    assert float(rows[0]["a"]) == 0.1 + 0.2 and rows[0]["b"] == "1"
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "u.csv", ("a",), [(1, 2)])


def test_failed_write_leaves_no_partial(tmp_path):
    target = tmp_path / "keep.csv"
    io.write_csv(target, ("a",), [(1,)])

    def rows():
        yield (2,)
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        io.write_csv(target, ("a",), rows())
    assert io.read_csv(target) == [{"a": "1"}]
    assert [p.name for p in tmp_path.iterdir()] == ["keep.csv"]


def test_json_infinities_and_digest(tmp_path):
    path = io.write_json(tmp_path / "x.json", {"b": math.inf, "a": np.float64(1.5)})
    assert json.loads(path.read_text()) == {"a": 1.5, "b": "inf"}
    assert io.digest({"x": 1, "y": 2}) == io.digest({"y": 2, "x": 1})
    assert io.digest(1, 2) != io.digest(2, 1)


# -- experiments ------------------------------------------------------------------

def test_derived_seeds_distinct():
    seeds = {experiments.derive_seed(0, k, j) for k in range(5) for j in range(5)}
    assert len(seeds) == 25


def test_convergence_slot():
    assert experiments.convergence_slot([0.5, 0.1, 0.2, 0.1]) == 4
    assert experiments.convergence_slot([0.1, 0.1]) == 1
    assert experiments.convergence_slot([0.1, 0.5]) is None


def test_formation_outputs_byte_identical(tmp_path):
    doc = short_doc()
    experiments.cmd_formation(doc, 5, tmp_path / "a")
    experiments.cmd_formation(doc, 5, tmp_path / "b")
    for name in ("formation1_trace.csv", "formation2_scores.csv", "formation2_field.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = io.read_csv(tmp_path / "a" / "formation2_trace.csv")
    assert len(rows) == 20 * 9
    assert list(rows[0]) == list(experiments.TRACE_HEADER)
    assert sum(int(r["leader_flag"]) for r in rows) == 20


def test_upwash_table_default_grid_hits_printed_point(desk_doc):
    _, _, _, arg_grid, arg_ref = experiments.upwash_table(desk_doc, GridSpec.parse(desk_doc.upwash_map.grid))
    assert arg_grid[:2] == pytest.approx((0.9091, 1.0303), abs=5e-5)
    assert arg_ref[0] == pytest.approx(0.90965, abs=1e-4)
    assert arg_ref[1] == pytest.approx(1.04125, abs=1e-4)


def test_kinematic_leaders(desk_doc):
    lead = experiments.leader_tracks(desk_doc, 0)
    assert lead.shape == (2, 8, 3)
    assert np.allclose(lead[0, :, 0], 20) and np.allclose(lead[1, :, 0], 100)
    assert np.allclose(np.diff(lead[0, :, 1]), -5 * 25 * 0.05)
    assert np.all(lead[..., 2] == 30)


@pytest.fixture(scope="module")
def wf_table(desk_doc, nominal_derived):
    lead = experiments.leader_tracks(desk_doc, 0)
    rates = {p: experiments.achieved_rates(desk_doc, p, lead, nominal_derived, "water_filling")
             for p in desk_doc.lqr_sweep.p_max_dbm}
    return experiments.lqr_table(desk_doc, rates)


def test_lqr_table_monotone_in_measurement_noise(wf_table):
    for p in (15.0, 30.0):
        for vs in (0.5, 1.0, 2.0):
            etas = [r["eta"] for r in wf_table if r["p_max_dbm"] == p and r["v_scale"] == vs]
            assert all(b > a for a, b in zip(etas, etas[1:]))


def test_lqr_excess_falls_with_power(wf_table):
    for vs in (0.5, 1.0, 4.0):
        ex = [r["excess"] for r in wf_table if r["v_scale"] == vs and r["w_scale"] == 1.0]
        assert all(b < a for a, b in zip(ex, ex[1:]))


def test_lqr_rate_cost_ratio_stays_above_one(wf_table):
    small = [r for r in wf_table if r["v_scale"] == 1e-3 and r["w_scale"] == 1e-3]
    assert all(r["ratio"] > 1.05 for r in small)


# -- cli -------------------------------------------------------------------------

def test_selftest_passes_and_mutation_is_caught():
    lines = []
    assert all(c.passed for c in selftest.run_selftest(echo=lines.append))
    assert len(lines) == 6
    bad = selftest.run_selftest("gradient", echo=lambda s: None)
    assert [c.name for c in bad if not c.passed] == ["upwash gradient"]


def test_cli_selftest_exit_codes(capsys):
    assert cli.main(["selftest"]) == 0
    assert cli.main(["selftest", "--mutate", "gradient"]) == 1


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"flight": {"speed": 3}}))
    assert cli.main(["formation", "--config", str(bad)]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert cli.main(["upwash-map", "--grid", "nonsense"]) == 2
    assert cli.main(["formation", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_upwash_map(tmp_path, capsys):
    assert cli.main(["upwash-map", "--grid=-2:2:100,-2:2:100", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["experiment"] == "upwash-map"
    rows = io.read_csv(tmp_path / "upwash_map.csv")
    arg = [r for r in rows if r["kind"] == "argmax_grid"]
    assert len(arg) == 1
    assert float(arg[0]["x"]) == pytest.approx(0.9091, abs=5e-5)
    assert len([r for r in rows if r["kind"] == "grid"]) == 100 * 100


def test_cli_reports_infeasible_sensing(tmp_path, capsys):
    cfg = tmp_path / "hard.yaml"
    cfg.write_text(yaml.safe_dump({"beamform": {"p_max_dbm": 15.0, "gamma_th_dbm": 20.0}}))
    rc = cli.main(["beamform", "--no-sweeps", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == 3
    assert "sensing" in capsys.readouterr().err
