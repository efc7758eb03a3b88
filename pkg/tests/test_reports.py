import json
import math

import pandas as pd
import pytest
from pydantic import ValidationError

from src.config import MC_ATOL
from src.reports import DecayFit, ExperimentConfig, ExperimentReport, StatisticResult
from src.rmt import NORMALIZATIONS


def _report(**stats):
    report = ExperimentReport(config=ExperimentConfig(scenario="demo-run", dims=[[4, 4], [8, 8]], trials=10, seed=3))
    for name, (estimate, stderr, target) in stats.items():
        report.add(StatisticResult.compare(name, estimate, stderr, target, k=4.0))
    return report


def test_compare_uses_k_stderr_band():
    assert StatisticResult.compare("a", 1.3, 0.1, 1.0, k=4.0).passed
    assert not StatisticResult.compare("b", 1.5, 0.1, 1.0, k=4.0).passed
    assert StatisticResult.compare("c", 1.5, 0.1, 1.0, k=4.0, allowance=0.1).passed


def test_zero_stderr_falls_back_to_absolute_floor():
    assert StatisticResult.compare("a", MC_ATOL / 2, 0.0, 0.0, k=4.0).passed
    assert not StatisticResult.compare("b", 1e-9, 0.0, 0.0, k=4.0).passed


def test_exact_statistic_is_relative():
    assert StatisticResult.exact("a", 1 / 99 * (1 + 1e-12), 1 / 99, rtol=1e-10).passed
    assert not StatisticResult.exact("b", 1 / 99 * (1 + 1e-6), 1 / 99, rtol=1e-10).passed


def test_decay_fit_ratios_and_slope():
    fit = DecayFit.fit("stat", [16, 32, 64], [1 / 16**2, 1 / 32**2, 1 / 64**2], min_factor=3.0)
    assert fit.ratios == pytest.approx([4.0, 4.0])
    assert fit.slope == pytest.approx(-2.0)
    assert fit.passed
    slow = DecayFit.fit("stat", [16, 32], [1.0, 0.8], min_factor=1.5)
    assert not slow.passed


def test_decay_to_zero_passes():
    fit = DecayFit.fit("stat", [4, 8], [0.1, 0.0], min_factor=1.5)
    assert fit.passed and math.isinf(fit.ratios[0])
    with pytest.raises(ValueError):
        DecayFit.fit("stat", [4], [0.1], min_factor=1.5)


def test_config_rejects_non_increasing_schedule():
    with pytest.raises(ValidationError):
        ExperimentConfig(scenario="x", dims=[[32, 32], [16, 16]])
    with pytest.raises(ValidationError):
        ExperimentConfig(scenario="x", dims=[[16, 16], [16, 32]])
    with pytest.raises(ValidationError):
        ExperimentConfig(scenario="x", trials=-1)
    ExperimentConfig(scenario="x", dims=[[8], [16], [32]])


def test_report_passed_and_failures():
    report = _report(good=(1.0, 0.1, 1.0), bad=(2.0, 0.1, 1.0))
    assert not report.passed
    assert report.failures == ["bad"]
    report.add(DecayFit.fit("rms", [4, 8], [1.0, 0.9], 1.5))
    assert report.failures == ["bad", "rms"]
    assert _report(good=(1.0, 0.1, 1.0)).passed


def test_report_carries_normalizations_and_schema():
    raw = json.loads(_report(good=(1.0, 0.1, 1.0)).to_json())
    assert raw["schema_version"] == "1"
    assert raw["normalizations"] == NORMALIZATIONS
    assert "wall_time" not in raw


def test_write_is_byte_identical_without_timing(tmp_path):
    report = _report(good=(1.0, 0.1, 1.0))
    report.wall_time = 1.25
    json_path, csv_path = report.write(tmp_path)
    first = json_path.read_bytes()
    report.wall_time = 9.5
    report.write(tmp_path)
    assert json_path.read_bytes() == first
    assert json_path.name == "demo_run.json"
    frame = pd.read_csv(csv_path)
    assert list(frame["name"]) == ["good"]


def test_write_with_timing_keeps_wall_time(tmp_path):
    report = _report(good=(1.0, 0.1, 1.0))
    report.wall_time = 2.0
    json_path, _ = report.write(tmp_path, timing=True)
    assert json.loads(json_path.read_text())["wall_time"] == 2.0


def test_report_json_round_trip():
    report = _report(good=(1.0, 0.1, 1.0))
    report.add(DecayFit.fit("rms", [4, 8], [1.0, 0.25], 1.5))
    back = ExperimentReport.parse_raw(report.to_json())
    assert back.statistics == report.statistics
    assert back.decay_fits[0].ratios == [4.0]
    assert back.passed
