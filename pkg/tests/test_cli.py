import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frontlab import __version__
from frontlab.cli import main
from frontlab.config import spec_from_dict
from frontlab.errors import ConfigError
from frontlab.io import dumps, fmt, write_csv

NO_EXTERIOR = {"exterior": False}


def _invoke(tmp_path, kind, config, *flags, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    out = tmp_path / f"out_{kind}_{name[:-5]}"
    code = main([kind, "--config", str(path), "--out", str(out), *flags])
    return code, out


def _report(out):
    return json.loads((out / "report.json").read_text())


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def acceptance_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = {"run": {"eps": 0.05, "kappa": 1.0, "T_final": 1.5}, "diagnostics": NO_EXTERIOR}
    return _invoke(tmp, "run", cfg)


def test_flat_acceptance_run_passes_with_the_interface_bound(acceptance_run):
    code, out = acceptance_run
    assert code == 0
    rep = _report(out)
    assert rep["passed"]
    (c,) = [c for c in rep["checks"] if c["name"].startswith("interface error")]
    assert c["bound"] == pytest.approx(0.1) and c["value"] < c["bound"]
    assert rep["results"]["interface_error"] < 2 * 0.05


def test_report_embeds_the_resolved_config_and_version(acceptance_run):
    rep = _report(acceptance_run[1])
    assert rep["version"] == __version__
    run = rep["config"]["run"]
    assert run["eps"] == 0.05 and run["dx"] == 0.05 / 8 and run["version"] == __version__
    assert rep["config"]["diagnostics"]["exterior"] is False


def test_run_writes_time_series_and_zeta_tables(acceptance_run):
    out = acceptance_run[1]
    ts = _rows(out / "timeseries.csv")
    assert list(ts[0]) == ["t", "interface", "reference", "interface_error", "energy",
                           "exterior_energy"]
    assert float(ts[0]["t"]) == 0.0 and float(ts[-1]["t"]) == 1.5
    assert ts[0]["exterior_energy"] == ""          # not measured: empty cell, not a number
    zeta = _rows(out / "zeta.csv")
    assert list(zeta[0]) == ["theta", "zeta1", "zeta2", "zeta3", "deficiency"]
    assert len(zeta) == 21


def test_outputs_use_17_significant_digits(acceptance_run):
    line = (acceptance_run[1] / "timeseries.csv").read_text().splitlines()[5]
    for cell in line.split(","):
        assert cell == "" or cell == format(float(cell), ".17g")


def test_initial_time_only_reports_initial_diagnostics(tmp_path):
    code, out = _invoke(tmp_path, "run", {"run": {"eps": 0.1, "T_final": 0.0},
                                          "diagnostics": NO_EXTERIOR})
    assert code == 0
    rep = _report(out)
    assert "l2" not in rep["results"] and "exterior_max" not in rep["results"]
    assert len(_rows(out / "timeseries.csv")) == 1
    zeta = _rows(out / "zeta.csv")
    assert [float(r["theta"]) for r in zeta] == [0.0]


def test_cfl_above_one_is_a_config_error_naming_the_bound(tmp_path, capsys):
    code, _ = _invoke(tmp_path, "run", {"run": {"eps": 0.05, "cfl": 1.5}})
    assert code == 2
    err = capsys.readouterr().err
    assert "cfl" in err and "(0, 1)" in err


@pytest.mark.parametrize("config, fragment", [
    ({"run": {"eps": 0.05, "cfll": 0.5}}, "cfll"),
    ({"run": {"eps": 0.05}, "diagnostic": {}}, "diagnostic"),
    ({"run": {"eps": 0.05}, "diagnostics": {"n_thetas": 3}}, "n_thetas"),
    ({"run": {}}, "eps"),
    ({"run": {"eps": 0.05}, "sweep_eps": [0.1, 0.05]}, "sweep"),
    ({"kind": "sweep", "run": {"eps": 0.05}}, "subcommand"),
    ({"run": {"eps": "small"}}, "run"),
])
def test_invalid_configs_exit_2(tmp_path, capsys, config, fragment):
    code, _ = _invoke(tmp_path, "run", config)
    assert code == 2
    assert fragment in capsys.readouterr().err


def test_unreadable_or_malformed_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["run", "--config", str(bad), "--jobs", "0"]) == 2


def test_failed_assertion_exits_1_unless_disabled(tmp_path):
    cfg = {"run": {"eps": 0.1, "T_final": 0.5},
           "diagnostics": {"exterior": False, "interface_factor": 1e-6}}
    assert _invoke(tmp_path, "run", cfg)[0] == 1
    code, out = _invoke(tmp_path, "run", cfg, "--no-assert", name="b.json")
    assert code == 0 and not _report(out)["passed"]


def test_identical_specs_give_byte_identical_csv(tmp_path):
    cfg = {"run": {"eps": 0.1, "T_final": 0.5}, "diagnostics": NO_EXTERIOR}
    _, a = _invoke(tmp_path, "run", cfg, name="a.json")
    _, b = _invoke(tmp_path, "run", cfg, name="b.json")
    for name in ("timeseries.csv", "zeta.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_curved_run_measures_normal_coordinate_functionals(tmp_path):
    cfg = {"run": {"eps": 0.1, "kappa": 0.8, "r0": 1.25, "rho": 0.45, "metric": "conformal:0.1:1",
                   "data": "curved", "T_final": 0.5},
           "diagnostics": {"exterior": False, "n_s": 3}}
    code, out = _invoke(tmp_path, "run", cfg)
    assert code == 0
    res = _report(out)["results"]
    assert 0 < res["s1"] and res["zeta3_max"] > 0
    assert list(_rows(out / "zeta.csv")[0])[0] == "s"


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SWEEP = {"run": {"T_final": 1.0}, "sweep_eps": [0.1, 0.05], "diagnostics": NO_EXTERIOR}


def test_sweep_emits_scaling_rows_with_ratios(tmp_path):
    code, out = _invoke(tmp_path, "sweep", SWEEP)
    assert code == 0
    rows = _rows(out / "scaling.csv")
    names = {r["quantity"] for r in rows}
    assert {"zeta1_max/eps^2", "l2/eps", "interface_error/eps"} <= names
    thetas = [float(r["theta"]) for r in _rows(out / "eps_0.1" / "zeta.csv")]
    assert max(thetas) < 1.0 and thetas == sorted(thetas) and 0.0 in thetas   # rays reaching the front
    for r in rows:
        if float(r["eps"]) == 0.1:
            assert r["ratio"] == ""
        else:
            assert 0.25 <= float(r["ratio"]) <= 4.0
    assert (out / "eps_0.1" / "timeseries.csv").exists()
    assert (out / "eps_0.05" / "zeta.csv").exists()


def test_parallel_sweep_matches_the_serial_one(tmp_path):
    _, serial = _invoke(tmp_path, "sweep", SWEEP, name="s.json")
    _, pooled = _invoke(tmp_path, "sweep", SWEEP, "--jobs", "2", name="p.json")
    assert (serial / "scaling.csv").read_bytes() == (pooled / "scaling.csv").read_bytes()


def test_static_sweep_has_interface_error_below_dx(tmp_path):
    cfg = {"run": {"kappa": 0.0, "rho": 0.45, "T_final": 0.5}, "sweep_eps": [0.1, 0.05],
           "diagnostics": NO_EXTERIOR}
    code, out = _invoke(tmp_path, "sweep", cfg)
    assert code == 0
    for r in _rows(out / "scaling.csv"):
        if r["quantity"] == "interface_error/eps":
            eps = float(r["eps"])
            assert float(r["value"]) * eps <= eps / 8


@pytest.mark.parametrize("eps", [[0.1], [0.05, 0.1], [0.1, 0.1], [0.5, 1.5], "0.1"])
def test_bad_sweep_lists_exit_2(tmp_path, eps):
    code, _ = _invoke(tmp_path, "sweep", {"run": {}, "sweep_eps": eps})
    assert code == 2


# ---------------------------------------------------------------------------
# chart battery
# ---------------------------------------------------------------------------

def test_minkowski_hyperbola_chart_is_all_green(tmp_path):
    code, out = _invoke(tmp_path, "chart-test", {"chart": {"metric": "minkowski", "kappa": 1.0,
                                                           "r0": 1.0, "rho": 0.4, "T": 2.0}})
    assert code == 0
    rep = _report(out)
    assert all(c["passed"] for c in rep["checks"])
    assert rep["results"]["H_r0"] == pytest.approx(1.0, abs=1e-6)
    rows = _rows(out / "chart_test.csv")
    assert {r["check"] for r in rows} >= {"g_nn = 1", "g_an = 0", "eikonal residual",
                                         "sigma(., 0) = 0", "|H| = kappa"}
    assert (out / "chart.csv").exists()


def test_conformal_chart_passes_the_block_order_tests(tmp_path):
    code, out = _invoke(tmp_path, "chart-test", {"chart": {"metric": "conformal:0.1:1:0.5",
                                                           "kappa": 0.8, "rho": 0.4, "T": 1.5}})
    assert code == 0
    names = [c["name"] for c in _report(out)["checks"]]
    assert sum(n.startswith("order of") for n in names) >= 4


def test_oversized_chart_reports_the_caustic_and_exits_3(tmp_path, capsys):
    cfg = {"chart": {"metric": "minkowski", "kappa": 1.0, "r0": 1.0, "rho": 1.2, "T": 1.0,
                     "n_y0": 9, "n_yn": 25}}
    code, _ = _invoke(tmp_path, "chart-test", cfg)
    assert code == 3
    err = capsys.readouterr().err
    assert "CausticDetected" in err and "y^n = 1" in err


# ---------------------------------------------------------------------------
# profile, decomposition, convergence
# ---------------------------------------------------------------------------

def test_quartic_profile_matches_tanh(tmp_path):
    code, out = _invoke(tmp_path, "profile", {"profile": {"well": "quartic"}})
    assert code == 0
    assert _report(out)["results"]["tanh_error"] < 1e-8
    data = np.loadtxt(out / "profile.csv", delimiter=",", skiprows=2)
    np.testing.assert_allclose(data[:, 1], np.tanh(data[:, 0]), atol=1e-8)


def test_decomposition_recovers_the_builtin_curvature(tmp_path):
    cfg = {"decompose": {"poly": [0.1, -2.0, -0.1, 2.0], "expect_eps_kappa": 0.1,
                         "expect_potential": "quartic"}}
    code, out = _invoke(tmp_path, "decompose", cfg)
    assert code == 0
    assert _report(out)["results"]["eps_kappa"] == pytest.approx(0.1, abs=1e-6)
    u, F = np.loadtxt(out / "potential.csv", delimiter=",", skiprows=1, usecols=(0, 1)).T
    np.testing.assert_allclose(F, 0.5 * (1 - u ** 2) ** 2, atol=1e-8)


def test_decomposition_with_a_wrong_expectation_fails(tmp_path):
    cfg = {"decompose": {"poly": [0.1, -2.0, -0.1, 2.0], "expect_eps_kappa": 0.2}}
    assert _invoke(tmp_path, "decompose", cfg)[0] == 1
    assert _invoke(tmp_path, "decompose", {"decompose": {}}, name="e.json")[0] == 2


def test_convergence_reports_second_order(tmp_path):
    cfg = {"run": {"eps": 0.1, "T_final": 0.8, "domain": [0.05, 3.0]},
           "convergence": {"window": {"tc": 0.4, "xc": math.sqrt(1.16), "half_t": 0.3,
                                      "half_x": 0.35}}}
    code, out = _invoke(tmp_path, "convergence", cfg, "--jobs", "3")
    assert code == 0
    rep = _report(out)
    assert all(abs(o - 2.0) <= 0.3 for o in rep["orders"])
    assert len(_rows(out / "convergence.csv")) == 3


def test_convergence_needs_three_levels(tmp_path):
    cfg = {"run": {"eps": 0.1}, "convergence": {"levels": 2}}
    assert _invoke(tmp_path, "convergence", cfg)[0] == 2


# ---------------------------------------------------------------------------
# io and config helpers
# ---------------------------------------------------------------------------

@given(st.floats(allow_nan=False, allow_infinity=False))
def test_17_digit_format_round_trips_every_double(x):
    assert float(fmt(x)) == x
    assert json.loads(dumps({"x": x}))["x"] == x


def test_non_finite_values_stay_strict_json():
    text = dumps({"a": math.nan, "b": [1.0, math.inf], "c": np.float64(0.1), "d": np.arange(2)})
    assert json.loads(text) == {"a": None, "b": [1.0, None], "c": 0.1, "d": [0, 1]}
    assert "NaN" not in text and "Infinity" not in text


def test_csv_writer_formats_mixed_rows(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["name", "value", "ok"], [("a", 0.1, True)])
    assert path.read_text() == "name,value,ok\na,0.10000000000000001,True\n"


def test_spec_runs_expand_a_sweep(tmp_path):
    spec = spec_from_dict({"run": {"cadence": 0.01}, "sweep_eps": [0.1, 0.05, 0.025]}, "sweep",
                          tmp_path)
    assert [c.eps for c in spec.runs()] == [0.1, 0.05, 0.025]
    assert all(c.cadence == 0.01 for c in spec.runs())


def test_sweep_validates_dx_against_every_eps(tmp_path):
    with pytest.raises(ConfigError):
        spec_from_dict({"run": {"dx": 0.02}, "sweep_eps": [0.1, 0.05]}, "sweep", tmp_path)
