import csv
import json

import numpy as np
import pytest

from msnbargain import run_experiment, emit_plotdata
from msnbargain.cli import resolve_scenario
from msnbargain.experiment import PLOT_KINDS, apply_sweep, fmt, others_first_point, result_columns


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fmt_six_significant_digits():
    assert fmt(213.68493) == "213.685"
    assert fmt(0.0) == "0" and fmt(None) == "" and fmt(True) == "1" and fmt(3) == "3"
    assert fmt(np.float64(1.23456789e-7)) == "1.23457e-07"


def test_budget_sweep_outputs(tmp_path):
    summary = run_experiment(resolve_scenario("preset:budget"), tmp_path)
    assert summary["selected_heads"] == {"50": 2, "100": 2, "300": 2, "500": 1}
    rows = read_rows(tmp_path / "results.csv")
    assert list(rows[0]) == result_columns(4)
    assert len(rows) == 4 * 4   # one row per sweep value and candidate head
    assert sum(r["selected"] == "1" for r in rows) == 4
    for r in rows:
        assert all(np.isfinite(float(r[c])) for c in result_columns(4)[6:])
    sat = [r for r in rows if r["sweep_value"] == "50" and r["selected"] == "1"][0]
    assert sum(float(sat[f"airtime_{i}"]) for i in range(1, 5)) == pytest.approx(12.25, abs=0.5)
    saved = json.loads((tmp_path / "summary.json").read_text())
    assert saved["scenario"] == "budget" and saved["sweep_variable"] == "budget"


def test_reward_sweep_others_first_point(tmp_path):
    summary = run_experiment(resolve_scenario("preset:reward"), tmp_path)
    assert 0.010 <= summary["others_first_reward"] <= 0.016
    assert set(summary["selected_heads"].values()) == {1}
    rows = [r for r in read_rows(tmp_path / "results.csv") if r["selected"] == "1"]
    own = [float(r["airtime_1"]) for r in rows]
    assert all(b <= a + 1e-5 for a, b in zip(own, own[1:]))


def test_others_first_point_helper():
    assert others_first_point([0, 0.01, 0.02], [3.0, 1e-9, 0.0]) == 0.01
    assert others_first_point([0, 0.01], [3.0, 2.0]) is None


def test_data_load_sweep(tmp_path):
    summary = run_experiment(resolve_scenario("preset:dataload"), tmp_path)
    heads = summary["selected_heads"]
    assert all(heads[fmt(z)] == 1 for z in (2, 4, 6, 8, 10))
    assert all(heads[fmt(z)] == 2 for z in (12, 14, 16, 18, 20))


def test_preference_cases(tmp_path):
    summary = run_experiment(resolve_scenario("preset:preference"), tmp_path)
    assert summary["selected_heads"] == {"1": 1, "2": 1, "3": 3, "4": 3}
    rows = read_rows(tmp_path / "results.csv")
    case1 = [r for r in rows if r["sweep_value"] == "1" and r["selected"] == "1"][0]
    assert float(case1["delivered_mb"]) == pytest.approx(55.3846, abs=1e-3)


def test_apply_sweep_variants():
    sf = resolve_scenario("preset:power")
    sc = apply_sweep(sf.scenario, sf.experiment, "1/2")
    assert sc.bargaining_power[sf.experiment.user] == pytest.approx(0.5)
    assert sum(sc.bargaining_power) == pytest.approx(1.0, abs=1e-12)
    pref = resolve_scenario("preset:preference")
    sc = apply_sweep(pref.scenario, pref.experiment, "4")
    assert sc.items[3].interested == frozenset({2})


def test_slot_sweep_summary(tmp_path):
    summary = run_experiment(resolve_scenario("preset:ideal"), tmp_path)
    assert summary["head_counts"]["1"] == [5, 5, 5, 5]
    assert sum(summary["head_counts"]["20"]) == 1
    std = [summary["energy_std"][k] for k in ("20", "10", "4", "2", "1")]
    assert all(a >= b - 1e-9 for a, b in zip(std, std[1:]))
    timeline = read_rows(tmp_path / "timeline.csv")
    assert len([r for r in timeline if r["sweep_value"] == "1"]) == 20
    schemes = {r["scheme"] for r in read_rows(tmp_path / "results.csv")}
    assert schemes == {"adaptive"}   # no fading, so no fixed-plan baseline


def test_reruns_are_byte_identical(tmp_path):
    sf = resolve_scenario("preset:fading")
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(sf, a)
    run_experiment(sf, b, workers=2)
    for name in ("results.csv", "summary.json", "timeline.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = read_rows(a / "results.csv")
    assert {r["scheme"] for r in rows} == {"adaptive", "non_adaptive"}


def test_plotdata(tmp_path):
    run_experiment(resolve_scenario("preset:budget"), tmp_path)
    out = emit_plotdata(tmp_path, "airtime_vs_budget")
    rows = read_rows(out)
    assert {r["series"] for r in rows} == {"user1", "user2", "user3", "user4"}
    assert len(rows) == 16
    assert emit_plotdata(tmp_path, "airtime_vs_budget").read_bytes() == out.read_bytes()
    prod = read_rows(emit_plotdata(tmp_path, "product_vs_budget", tmp_path / "p.csv"))
    assert {r["series"] for r in prod} == {"weighted", "plain"}


def test_plotdata_empty_results(tmp_path):
    (tmp_path / "results.csv").write_text(",".join(result_columns(4)) + "\n")
    out = emit_plotdata(tmp_path, "utility_vs_reward")
    assert out.read_text() == "series,x,y\n"


def test_plotdata_errors(tmp_path):
    run_experiment(resolve_scenario("preset:budget"), tmp_path)
    with pytest.raises(ValueError, match="unknown plot kind"):
        emit_plotdata(tmp_path, "colour_vs_mood")
    with pytest.raises(ValueError, match="needs 'unit_reward'"):
        emit_plotdata(tmp_path, "utility_vs_reward")
    assert "airtime_vs_budget" in PLOT_KINDS
