import math
from pathlib import Path

import networkx as nx
import numpy as np
import pandas as pd
import pytest

from forecast.dataset import build_dataset
from forecast.trainer import Hyper, train
from harness.config import ExperimentConfigError, load_experiment_config
from harness.experiment import collect_training_data, run_experiment
from harness.reporting import (
    INDICATORS,
    SUMMARY_COLUMNS,
    MetricsReport,
    UnknownStrategyError,
    UnknownVehicleError,
    compare,
    extract_path,
    load_report,
)
from linkstate.records import read_link_records
from routing.objectives import Strategy


def write_config(tmp_path, **values):
    scenario = tmp_path / "scenario.yaml"
    scenario.write_text("rows: 3\ncols: 3\nvehicles: 30\ndistribution: uniform\nhorizon: 60\nseed: 2\n", encoding="utf-8")
    lines = ["scenario: scenario.yaml", "output_dir: out"]
    for key, value in values.items():
        lines.append(f"{key}: {value}")
    path = tmp_path / "experiment.yaml"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def summary(rows):
    frame = pd.DataFrame(rows)
    for column in SUMMARY_COLUMNS:
        if column not in frame.columns:
            frame[column] = "ok" if column == "status" else ""
    return frame[SUMMARY_COLUMNS]


def test_config_defaults_and_objectives(tmp_path):
    cfg = load_experiment_config(write_config(tmp_path, predictor="identity", seeds="[1, 2]"))
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.strategies == tuple(Strategy)
    assert (cfg.w_t, cfg.w_e) == (0.5, 0.5)
    objectives = cfg.objectives()
    assert [o.label for o in objectives] == [s.value for s in Strategy]
    assert all(o.speed_model is not None for o in objectives if o.strategy.anticipatory)


def test_costing_only_for_myopic_emission_strategies(tmp_path):
    path = write_config(tmp_path, strategies='[TT_m, GHG_m, "GHG_a"]', costing="[sum, marginal]", predictor="oracle")
    labels = [o.label for o in load_experiment_config(path).objectives()]
    assert labels == ["TT_m", "GHG_m-sum", "GHG_m", "GHG_a"]


@pytest.mark.parametrize("values", [
    {"learning_rate": 0.1},
    {"predictor": "crystal_ball"},
    {"predictor": "lstm", "strategies": "[TT_a]"},
    {"seeds": "[1, 1]"},
    {"workers": 0},
    {"check_invariants": "maybe"},
    {"network": "missing.csv"},
])
def test_invalid_configs(tmp_path, values):
    with pytest.raises(ExperimentConfigError):
        load_experiment_config(write_config(tmp_path, **values))


def test_compare_percentages():
    report = MetricsReport(summary=summary([
        {"label": "TT_m", "seed": 1, "mean_tt_min": 10.0, "mean_vkt_km": 2.0, "total_ghg_kg": 8.0, "total_nox_kg": 0.2},
        {"label": "TT_m", "seed": 2, "mean_tt_min": 20.0, "mean_vkt_km": 2.0, "total_ghg_kg": 8.0, "total_nox_kg": 0.2},
        {"label": "GHG_m", "seed": 1, "mean_tt_min": 5.0, "mean_vkt_km": 2.0, "total_ghg_kg": 6.0, "total_nox_kg": 0.3},
        {"label": "GHG_m", "seed": 2, "mean_tt_min": 15.0, "mean_vkt_km": 2.0, "total_ghg_kg": 6.0, "total_nox_kg": 0.3},
    ]))
    table = compare(report, "TT_m", "GHG_m").set_index("indicator")
    assert table.loc["mean_tt_min", "mean_pct"] == pytest.approx(37.5)
    assert table.loc["mean_tt_min", "max_pct"] == pytest.approx(50.0)
    assert table.loc["mean_tt_min", "min_pct"] == pytest.approx(25.0)
    assert table.loc["total_ghg_kg", "mean_pct"] == pytest.approx(25.0)
    assert table.loc["total_nox_kg", "mean_pct"] == pytest.approx(-50.0)
    assert table.loc["mean_vkt_km", "seeds"] == 2

    same = compare(report, "TT_m", "TT_m")
    assert (same["mean_pct"] == 0.0).all()
    with pytest.raises(UnknownStrategyError):
        compare(report, "TT_m", "TT_a")


def test_run_experiment_writes_and_reloads(tmp_path):
    cfg = load_experiment_config(write_config(
        tmp_path, strategies='[TT_m, "TT&GHG_a"]', predictor="identity", seeds="[1]", export_excel="true",
    ))
    report = run_experiment(cfg)
    assert list(report.summary["status"]) == ["ok", "ok"]
    assert (report.summary["vehicles"] == 30).all()

    out = tmp_path / "out"
    for name in ("summary.csv", "report.xlsx", "series_TT_m_1.csv", "paths_TT&GHG_a_1.csv", "links_TT_m_1.csv"):
        assert (out / name).exists(), name
    assert len(read_link_records(out / "links_TT_m_1.csv")) > 0

    loaded = load_report(out)
    assert set(loaded.paths) == {("TT_m", 1), ("TT&GHG_a", 1)}
    vehicles = loaded.vehicles[("TT_m", 1)]
    first = vehicles.iloc[0]
    path = extract_path(loaded, int(first["vehicle_id"]), "TT_m", 1)
    assert [link for link, _ in path] == [int(l) for l in str(first["path"]).split(";")]
    assert compare(loaded, "TT_m", "TT&GHG_a")["seeds"].eq(1).all()
    with pytest.raises(UnknownVehicleError):
        extract_path(loaded, 10_000, "TT_m", 1)


def test_failed_cell_is_reported(tmp_path):
    cfg = load_experiment_config(write_config(tmp_path, strategies="[TT_m]", seeds="[1]", guard_multiple=0.01))
    report = run_experiment(cfg, write=False)
    row = report.summary.iloc[0]
    assert row["status"] == "failed"
    assert "SimulationStalledError" in row["error"]
    assert not report.series


def test_collect_training_data(tmp_path):
    cfg = load_experiment_config(write_config(tmp_path, seeds="[3]"))
    out = tmp_path / "links.csv"
    data = collect_training_data(cfg, levels=(0.5, 1.0), distributions=("uniform",), out=out)
    assert sorted(data["run_id"].unique()) == [0, 1]
    assert out.exists()
    assert read_link_records(out)["run_id"].nunique() == 2
    with pytest.raises(ExperimentConfigError):
        collect_training_data(cfg, strategy=Strategy.TT_A)


# --- desk-scale reproductions ---------------------------------------------------------

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def desk_experiment(name, tmp_path, **overrides):
    return load_experiment_config(SCENARIOS / name, overrides={"output_dir": str(tmp_path), **overrides})


def print_comparison(table):
    for row in table.itertuples():
        print(f"{row.target} vs {row.baseline} {row.indicator}: {row.mean_pct:+.2f}% ({row.min_pct:+.2f} .. {row.max_pct:+.2f})")


@pytest.fixture(scope="module")
def congested_report(tmp_path_factory):
    cfg = desk_experiment("experiment_congested.yaml", tmp_path_factory.mktemp("congested"))
    report = run_experiment(cfg)
    assert (report.summary["status"] == "ok").all(), report.summary["error"].tolist()
    return cfg, report


@pytest.mark.slow
def test_congested_scenario_queues(congested_report):
    cfg, report = congested_report
    network, demand = cfg.load_scenario()
    graph = network.to_digraph({l.id: l.free_flow_time for l in network.links})
    free_flow = [nx.shortest_path_length(graph, t.origin, t.destination, weight="weight") for t in demand.trips]
    free_flow_min = float(np.mean(free_flow)) / 60.0
    mean_tt = report.completed().query("label == 'TT_m'")["mean_tt_min"].mean()
    print(f"TT_m mean TT {mean_tt:.2f} min vs free-flow OD time {free_flow_min:.2f} min")
    assert mean_tt > 1.3 * free_flow_min


@pytest.mark.slow
def test_multi_objective_and_eco_routing_beat_travel_time(congested_report):
    _, report = congested_report
    both = compare(report, "TT_m", "TT&GHG_m")
    eco = compare(report, "TT_m", "GHG_m")
    print_comparison(both)
    print_comparison(eco)
    assert (both["mean_pct"] > 0).all()
    assert eco.set_index("indicator").loc["total_ghg_kg", "mean_pct"] > 0


@pytest.mark.slow
def test_oracle_anticipation_never_degrades_myopic(congested_report):
    _, report = congested_report
    for strategy in (Strategy.TT_A, Strategy.GHG_A, Strategy.TT_GHG_A):
        table = compare(report, strategy.myopic_counterpart.value, strategy.value)
        print_comparison(table)
        assert (table["mean_pct"] >= -2.0).all()
    tt = compare(report, "TT_m", "TT_a").set_index("indicator")
    assert tt.loc["mean_tt_min", "mean_pct"] > 0


@pytest.mark.slow
def test_costing_study_ranks_sum_worst(tmp_path):
    report = run_experiment(desk_experiment("costing_study.yaml", tmp_path), write=False)
    done = report.completed()
    assert len(done) == 25
    means = done.groupby("label")[["mean_tt_min", "total_ghg_kg"]].mean()
    print(means.to_string())
    for column in ("mean_tt_min", "total_ghg_kg"):
        assert means.loc["GHG_m-sum", column] >= 0.99 * means[column].max()
    assert means.loc["GHG_m-weighted", "mean_tt_min"] < means.loc["GHG_m-sum", "mean_tt_min"]
    marginal = compare(report, "GHG_m-weighted_per_lane", "GHG_m")
    print_comparison(marginal)
    assert (marginal["mean_pct"].abs() <= 10.0).all()


@pytest.mark.slow
def test_trained_predictors_track_simulated_links(tmp_path):
    cfg = desk_experiment("training.yaml", tmp_path)
    data = collect_training_data(cfg, levels=(0.7, 1.0, 1.6), distributions=("uniform", "exponential"))
    hyper = Hyper(epochs=60, hidden=(16,), batch_size=64)
    for target, floor, reference in (("speed", 0.8, 0.92), ("ghg_er", 0.65, 0.77)):
        train_set, test_set = build_dataset(data, target)
        result = train(train_set, hyper, seed=0, test_set=test_set)
        print(f"{target}: test r {result.test_metrics.r:.3f} (reference {reference}), RMSE {result.test_metrics.rmse:.4f}")
        assert result.test_metrics.r >= floor


@pytest.mark.slow
def test_report_tables_agree(congested_report):
    cfg, report = congested_report
    network, _ = cfg.load_scenario()
    loaded = load_report(cfg.output_dir)
    rng = np.random.default_rng(0)
    for row in report.completed().itertuples():
        key = (row.label, row.seed)
        series, vehicles = report.series[key], loaded.vehicles[key]
        assert len(series) == math.ceil(row.duration_s / 60)
        assert series["ghg_g"].sum() == pytest.approx(vehicles["ghg_g"].sum(), rel=1e-9)
        assert series["nox_g"].sum() == pytest.approx(vehicles["nox_g"].sum(), rel=1e-9)
        assert row.mean_tt_min == pytest.approx(vehicles["tt_s"].mean() / 60.0, rel=1e-9)
        assert row.total_ghg_kg == pytest.approx(vehicles["ghg_g"].sum() / 1000.0, rel=1e-9)

        for vehicle_id in rng.choice(vehicles["vehicle_id"].to_numpy(), size=100, replace=False):
            path = extract_path(report, int(vehicle_id), row.label, row.seed)
            for (here, entered), (there, later) in zip(path, path[1:]):
                assert network.link(here).to_node == network.link(there).from_node
                assert later >= entered


@pytest.mark.slow
def test_replications_do_not_depend_on_seed_order(tmp_path):
    config = write_config(tmp_path, strategies='[TT_m, "TT&GHG_a"]', predictor="oracle")
    forward = run_experiment(load_experiment_config(config, overrides={"seeds": [1, 2, 3]}), write=False)
    shuffled = run_experiment(load_experiment_config(config, overrides={"seeds": [3, 1, 2], "workers": 3}), write=False)
    columns = ["label", "seed", *INDICATORS, "guidance_flips"]
    ordered = [frame[columns].sort_values(["label", "seed"]).reset_index(drop=True) for frame in (forward.summary, shuffled.summary)]
    pd.testing.assert_frame_equal(*ordered)
