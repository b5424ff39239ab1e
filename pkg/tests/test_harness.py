import csv
import io
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamspace.harness.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from beamspace.harness.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from beamspace.harness.experiments import (
    CSV_HEADER,
    ResultRow,
    rate_table,
    rows_to_csv,
    run_fig8,
    run_fig9_10,
    run_outage,
    run_sync_demo,
    run_tracking_scenario,
    run_training_demo,
    validate,
)
from beamspace.harness.outage import outage_analytic, outage_monte_carlo

CFG = ExperimentConfig()


# -- configuration -------------------------------------------------------------------


def test_defaults_follow_parameter_table():
    c = CFG.constants()
    assert (c.fc_ghz, c.bandwidth_hz, c.z, c.nf_db) == (60.0, 1.5e9, 0.1, 6.0)
    assert (CFG.p_max_dbm, CFG.P_max_dbm, CFG.n_max, CFG.r_los_m) == (3.0, 9.0, 10, 4.0)
    assert len(CFG.beam_pairs()) == 9 and CFG.beam_pairs()[0].id == 0
    assert CFG.eta_db[0] == 0.0 and CFG.eta_db[-1] == 30.0


def test_empty_object_is_valid(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{}")
    assert load_config(p) == CFG
    assert load_config(None) == CFG


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"theta_t_deg": [10, 20], "theta_r_deg": [10]},
    {"p": [1.5]},
    {"trials": 0},
    {"policy": "greedy"},
    {"seed": -1},
    {"z": 1.0},
    {"p_max_dbm": 12.0},
    {"theta_t_deg": 10},
    {"n_max": 2.5},
])
def test_config_errors(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_unreadable_and_malformed_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        config_from_dict([1, 2])


def test_config_round_trip():
    assert config_from_dict(json.loads(json.dumps(CFG.to_dict()))) == CFG


# -- outage -----------------------------------------------------------------------------


def test_outage_analytic_examples():
    assert outage_analytic([0.6] * 4) == pytest.approx(0.1296, abs=1e-15)
    assert outage_analytic([0.37]) == 0.37
    assert outage_analytic([0.9, 0.0, 0.5]) == 0.0
    with pytest.raises(ValueError):
        outage_analytic([])
    with pytest.raises(ValueError):
        outage_analytic([1.2])


def test_outage_monte_carlo_examples():
    est = outage_monte_carlo(0.6, 4, 100_000, seed=0)
    assert abs(est.estimate - 0.1296) <= 0.005
    # normal-approximation half-width at the analytic value
    assert est.half_width == pytest.approx(1.96 * math.sqrt(0.1296 * 0.8704 / 1e5), rel=0.02)
    assert est.covers(0.1296)
    assert outage_monte_carlo(1.0, 3, 1000, seed=5).estimate == 1.0
    assert outage_monte_carlo(0.0, 3, 1000, seed=5).estimate == 0.0
    assert outage_monte_carlo(0.3, 2, 5000, seed=9) == outage_monte_carlo(0.3, 2, 5000, seed=9)
    with pytest.raises(ValueError):
        outage_monte_carlo(0.5, 2, 999, seed=0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(1, 8), st.integers(0, 2**32))
def test_monte_carlo_agrees_with_product(p, n, seed):
    est = outage_monte_carlo(p, n, 20_000, seed)
    # 4 half-widths keeps the false-alarm rate negligible across examples
    assert est.covers(p**n, widths=4.0)


# -- rows and CSV -------------------------------------------------------------------------


def test_result_row_validation():
    with pytest.raises(ValueError):
        ResultRow("x", "a", "1", "m", 1.0, "")
    with pytest.raises(ValueError):
        ResultRow("x", "a", "1", "m", float("nan"), "dB")


def test_csv_header_and_values():
    text = rows_to_csv([ResultRow("e", "x", "1", "m", 0.5, "dB")])
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    assert rows[1] == ["e", "x", "1", "m", "0.5", "dB"]


# -- runners ----------------------------------------------------------------------------------


def test_fig8_nlos_monotone_and_below_los():
    rows = run_fig8(CFG)
    grid = {}
    for r in rows:
        tt, tr = map(float, r.x_value.split(":"))
        grid[(tt, tr, r.metric)] = r.value
    ts = sorted({k[0] for k in grid})
    for metric in ("sinr_nlos", "rate_nlos"):
        for tr in ts:
            col = [grid[(tt, tr, metric)] for tt in ts if (tt, tr, metric) in grid]
            assert all(a > b for a, b in zip(col, col[1:]))
        for tt in ts:
            row = [grid[(tt, tr, metric)] for tr in ts if (tt, tr, metric) in grid]
            assert all(a > b for a, b in zip(row, row[1:]))
    for (tt, tr, m), v in grid.items():
        if m.endswith("_nlos"):
            assert v < grid[(tt, tr, m.replace("nlos", "los"))]


def test_fig8_los_is_flat_in_offset_angles():
    # interference reaching the LOS receiver travels the LOS path, so the
    # NLOS geometry does not change the LOS SINR
    vals = {r.value for r in run_fig8(CFG) if r.metric == "sinr_los"}
    assert len(vals) == 1


def test_fig9_rows():
    rows = run_fig9_10(CFG)
    siso, ppa, apa = (rate_table(rows, m) for m in ("rate_siso", "rate_ppa", "rate_apa"))
    links = rate_table(rows, "links_ppa")
    no_los = rate_table(rows, "rate_ppa_no_los")
    for eta in CFG.eta_db:
        if links[eta] >= 2:
            assert ppa[eta] > siso[eta]
    siso_blocked = rate_table(rows, "rate_siso_no_los")
    assert siso_blocked[16.0] == 0.0 and no_los[16.0] > 0.0
    assert all(r.units in ("Mbps", "count") for r in rows)


def test_fig9_infeasible_threshold_gives_zero_rates():
    rows = run_fig9_10(ExperimentConfig(eta_db=(60.0,)))
    assert all(r.value == 0.0 for r in rows)


def test_outage_runner_rows():
    rows = run_outage(ExperimentConfig(p=(0.6,), n_list=(4,), trials=100_000))
    got = {r.metric: r.value for r in rows}
    assert got["analytic_n4"] == pytest.approx(0.1296)
    assert abs(got["monte_carlo_n4"] - 0.1296) <= 3 * got["half_width_n4"]


def test_training_demo_counts():
    rows, trace = run_training_demo(CFG)
    val = {(r.x_value, r.metric): r.value for r in rows}
    assert (val[("32", "rounds_multi")], val[("32", "rounds_single")]) == (4, 32)
    assert (val[("3x3", "tests_measured")], val[("3x3", "tests_conventional")]) == (6, 9)
    assert val[("MTX", "candidates")] == 9
    for key, v in val.items():
        if key[1] == "tests_measured":
            assert v == val[(key[0], "tests_closed_form")]
    assert trace.filter("CANDIDATES")


def test_training_demo_single_beam_has_no_advantage():
    rows, _ = run_training_demo(ExperimentConfig(n_cap=1))
    val = {(r.x_value, r.metric): r.value for r in rows}
    for m in CFG.sectors:
        assert val[(str(m), "rounds_multi")] == val[(str(m), "rounds_single")]


def test_tracking_runner_rows():
    rows, trace = run_tracking_scenario(CFG, "fig6")
    val = {r.metric: r.value for r in rows}
    assert val["max_concurrent_trackers"] == 1 and val["restorations"] == 1
    assert val["switch_attempts"] == 1
    with pytest.raises(ValueError):
        run_tracking_scenario(CFG, "nope")


def test_random_tracking_runner():
    rows, trace = run_tracking_scenario(ExperimentConfig(tracking_runs=3), "random")
    assert all(r.value <= 1 for r in rows if r.metric == "max_concurrent_trackers")
    assert all("run=" in r.details for r in trace)


def test_sync_runner():
    rows, trace = run_sync_demo(CFG)
    val = {(r.x_value, r.metric): r.value for r in rows}
    assert val[("0", "remainder_1")] == 400
    assert val[("0", "share_1")] + val[("0", "share_2")] == CFG.sync_total_bytes
    assert "REBALANCE" in trace.kinds()


def test_validate_passes():
    results = validate(ExperimentConfig(trials=2000), instances=20)
    assert all(r.ok for r in results), results


# -- command line -------------------------------------------------------------------------------


def test_cli_writes_outputs(tmp_path):
    assert main(["train", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "train.csv").read_text().startswith(",".join(CSV_HEADER))
    assert (tmp_path / "train.trace").exists()


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"trials": 0}))
    assert main(["outage", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["outage", "--seed", "-3", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_infeasible(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eta_db": [40]}))
    assert main(["rate-vs-eta", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_INFEASIBLE


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", "--instances", "10", "--trials", "1000", "--out", str(tmp_path)]) == EXIT_OK
    assert "PASS oracle_dominates_closed_forms" in capsys.readouterr().out
