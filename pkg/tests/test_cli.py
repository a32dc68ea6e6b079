"""CLI subcommands drive the same pipelines through files."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dpmeter.cli import main
from dpmeter.experiment import ExperimentConfig, config_to_json
from dpmeter.forecast import TrainConfig
from dpmeter.market import SystemExogenous
from dpmeter.procurement import ProcurementInstance, write_instance
from dpmeter.scenario import ErrorScenarioSet
from dpmeter.synth import SynthConfig

from helpers import uniform_curve


def run(args):
    return main([str(a) for a in args])


@pytest.fixture()
def meters_csv(tmp_path):
    out = tmp_path / "synth"
    assert run(["synth", "--meters", 15, "--weeks", 5, "--seed", 1, "--out", out]) == 0
    return out / "meters.csv"


class TestSynthCommand:
    def test_writes_meters_and_groups(self, tmp_path):
        out = tmp_path / "s"
        code = run(
            ["synth", "--meters", 12, "--weeks", 4, "--seed", 2, "--kmeans", 2, "--out", out]
        )
        assert code == 0
        assert (out / "meters.csv").exists()
        groups = (out / "groups.csv").read_text().strip().splitlines()
        assert groups[0] == "meter_id,group"
        assert len(groups) == 13


class TestPrivatizeCommand:
    def test_output_schema(self, meters_csv, tmp_path):
        out = tmp_path / "p"
        code = run(
            ["privatize", "--input", meters_csv, "--epsilon", 0.25, "--gamma", 0.75,
             "--seed", 3, "--out", out]
        )
        assert code == 0
        rows = list(csv.DictReader(open(out / "aggregate_noisy.csv")))
        assert set(rows[0]) == {"period_index", "kwh_noisy"}
        assert len(rows) == 5 * 336

    def test_deterministic(self, meters_csv, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run(["privatize", "--input", meters_csv, "--epsilon", 1.0, "--seed", 9, "--out", out])
        assert (a / "aggregate_noisy.csv").read_bytes() == (b / "aggregate_noisy.csv").read_bytes()


class TestForecastAndScenarios:
    def test_forecast_then_scenarios(self, meters_csv, tmp_path):
        out = tmp_path / "f"
        code = run(
            ["forecast", "--input", meters_csv, "--scheme", "hhs-ehh", "--epochs", 20,
             "--seed", 4, "--out", out]
        )
        assert code == 0
        rows = list(csv.DictReader(open(out / "forecast.csv")))
        assert len(rows) == 48
        sout = tmp_path / "sc"
        code = run(
            ["scenarios", "--forecast", out / "forecast.csv", "--wape", 0.1,
             "--count", 9, "--seed", 5, "--out", sout]
        )
        assert code == 0
        srows = list(csv.DictReader(open(sout / "scenarios.csv")))
        assert len(srows) == 9 * 48


class TestProcureCommand:
    def test_solves_instance_file(self, tmp_path):
        scen = ErrorScenarioSet(np.array([[0.5], [-0.5]]), np.array([0.5, 0.5]))
        inst = ProcurementInstance(
            d_fore=np.array([10.0]),
            scenarios=scen,
            da_curve=uniform_curve(40.0, 80.0, 2, [45.0, 55.0]),
            bal_curves=(
                uniform_curve(-25.0, 25.0, 2, [30.0, 90.0]),
                uniform_curve(-25.0, 25.0, 2, [32.0, 92.0]),
            ),
            exogenous=SystemExogenous(np.array([50.0]), np.zeros((2, 1))),
            beta=0.5,
            alpha=0.9,
            d_da_lower=np.array([-5.0]),
            d_da_upper=np.array([15.0]),
        )
        path = tmp_path / "inst.json"
        write_instance(inst, path)
        out = tmp_path / "sol"
        assert run(["procure", "--instance", path, "--out", out]) == 0
        summary = list(csv.DictReader(open(out / "solution_summary.csv")))[0]
        assert float(summary["gap"]) <= 1e-6
        da = list(csv.DictReader(open(out / "solution_da.csv")))
        assert len(da) == 1
        bal = list(csv.DictReader(open(out / "solution_bal.csv")))
        assert len(bal) == 2


class TestExperimentCommand:
    def config_file(self, tmp_path):
        cfg = ExperimentConfig(
            synth=SynthConfig(n_meters=30, n_weeks=5, seed=7),
            schemes=("hhs-ehh",),
            epsilon_grid=(1.0,),
            gamma_grid=(0.0,),
            n_scenarios=4,
            seeds=(0,),
            train=TrainConfig(epochs=15),
            group_kind="whole",
        )
        path = tmp_path / "cfg.json"
        path.write_text(config_to_json(cfg))
        return path

    def test_runs_and_writes_reports(self, tmp_path):
        cfg_path = self.config_file(tmp_path)
        out = tmp_path / "exp"
        assert run(["experiment", "--config", cfg_path, "--out", out]) == 0
        for name in ("results.csv", "costs.csv", "metadata.json", "kld_wape.csv"):
            assert (out / name).exists()

    def test_report_command_reemits(self, tmp_path):
        cfg_path = self.config_file(tmp_path)
        out = tmp_path / "exp"
        run(["experiment", "--config", cfg_path, "--out", out])
        out2 = tmp_path / "rep"
        assert run(
            ["report", "--results", out / "results.csv", "--config", cfg_path, "--out", out2]
        ) == 0
        assert (out2 / "costs.csv").read_bytes() == (out / "costs.csv").read_bytes()

    def test_exit_code_on_failure(self, tmp_path):
        cfg = ExperimentConfig(
            synth=SynthConfig(n_meters=10, n_weeks=5, seed=8),
            schemes=("hhs-ehh",),
            n_scenarios=3,
            seeds=(0,),
            train=TrainConfig(epochs=5, min_samples=10**9),  # forces cell failure
            group_kind="whole",
        )
        path = tmp_path / "bad.json"
        path.write_text(config_to_json(cfg))
        assert run(["experiment", "--config", path, "--out", tmp_path / "x"]) == 1
