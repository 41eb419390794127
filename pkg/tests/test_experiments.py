"""End-to-end pipeline orchestration: repeatability and linearity experiments."""

from __future__ import annotations

import copy
import json

import numpy as np
import pytest

from qolcr.config import DEFAULT_CONFIG, parse_config
from qolcr.errors import ConfigError
from qolcr.experiments import (
    linearity_experiment,
    repeatability_experiment,
    run_pipeline,
    summarize,
)

TRUE_SEPARATION = 290.114e-6 - 9.886e-6


def make_config(identity_stage=True, noise=False, **pipeline):
    raw = copy.deepcopy(DEFAULT_CONFIG)
    if identity_stage:
        raw["stage"].update(
            scale_error=0.0,
            periodic_amplitude_nm=0.0,
            drift_step_nm=0.0,
        )
    if not noise:
        raw["noise"] = None
    if pipeline:
        raw["pipeline"].update(pipeline)
    return parse_config(raw)


@pytest.fixture(scope="module")
def clean_config():
    return make_config()


@pytest.fixture(scope="module")
def clean_repeat(clean_config):
    return repeatability_experiment(clean_config, n_runs=4)


def test_single_run_recovers_separation(clean_config):
    report = run_pipeline(clean_config)
    assert len(report.separations) == 1
    assert abs(report.separations[0] - TRUE_SEPARATION) < 0.1e-9


def test_noise_free_repeatability_is_exact(clean_repeat):
    res = clean_repeat
    assert res.n_runs == 4
    assert res.outlier_count == 0
    assert not res.failures
    assert len(res.estimates) == 4
    assert res.std_dev < 0.1e-9
    for est in res.estimates:
        assert abs(est - TRUE_SEPARATION) < 0.1e-9


def test_seed_ledger_bookkeeping(clean_config, clean_repeat):
    ledger = clean_repeat.seed_ledger
    assert [entry["run"] for entry in ledger] == [0, 1, 2, 3]
    for entry in ledger:
        stage_seed, noise_seed = clean_config.seeds_for_run(entry["run"])
        assert entry["stage_seed"] == stage_seed
        assert entry["noise_seed"] == noise_seed
        assert entry["forced_ambiguity"] is False
        assert entry["outlier"] is False


def test_forced_ambiguity_runs_flagged_and_excluded(clean_config):
    res = repeatability_experiment(clean_config, n_runs=4, force_ambiguity_runs=(1, 3))
    assert res.outlier_count == 2
    assert len(res.estimates) == 2
    assert res.included_count == 2
    assert res.std_dev < 0.1e-9
    half_fringe = 810e-9 / 2
    for entry in res.seed_ledger:
        forced = entry["run"] in (1, 3)
        assert entry["forced_ambiguity"] is forced
        assert entry["outlier"] is forced
        if forced:
            miss = abs(entry["separation_m"] - TRUE_SEPARATION)
            assert abs(miss - half_fringe) < 5e-9


def test_repeatability_is_reproducible(clean_config):
    a = repeatability_experiment(clean_config, n_runs=2)
    b = repeatability_experiment(clean_config, n_runs=2)
    assert a.to_dict() == b.to_dict()
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_noisy_repeatability_within_budget():
    cfg = make_config(identity_stage=False, noise=True)
    res = repeatability_experiment(cfg, n_runs=4)
    assert res.outlier_count == 0
    assert not res.failures
    assert res.std_dev < 3e-9
    for est in res.estimates:
        assert abs(est - TRUE_SEPARATION) < 5e-9


def test_repeatability_rejects_bad_arguments(clean_config):
    with pytest.raises(ConfigError):
        repeatability_experiment(clean_config, n_runs=1)
    with pytest.raises(ConfigError):
        repeatability_experiment(clean_config, n_runs=3, force_ambiguity_runs=(5,))


def test_linearity_noise_free_identity(clean_config):
    res = linearity_experiment(clean_config, step=50e-9, n_steps=3)
    assert res.step_size == 50e-9
    assert len(res.measured_separations) == 3
    assert not res.failures
    assert res.max_abs_deviation < 0.1e-9
    assert res.deviations[0] == 0.0
    # moving the first surface toward the second shortens the separation
    diffs = np.diff(res.measured_separations)
    assert np.all(np.abs(diffs + res.step_size) < 0.1e-9)


def test_linearity_commanded_positions(clean_config):
    res = linearity_experiment(clean_config, step=100e-9, n_steps=3)
    z1 = 9.886e-6
    expected = [z1, z1 + 100e-9, z1 + 200e-9]
    assert res.commanded_positions == pytest.approx(expected, abs=1e-15)


def test_linearity_deviations_invariant_under_global_shift(clean_config):
    # translate sample and scan window together by +5 um: identical relative
    # geometry, different absolute positions and carrier phases
    raw = copy.deepcopy(DEFAULT_CONFIG)
    raw["stage"].update(scale_error=0.0, periodic_amplitude_nm=0.0, drift_step_nm=0.0)
    raw["noise"] = None
    for surf in raw["sample"]["surfaces"]:
        surf["position_um"] += 5.0
    raw["scan"] = {"start_um": 5.0, "stop_um": 305.0}
    shifted_cfg = parse_config(raw)
    base = linearity_experiment(clean_config, step=50e-9, n_steps=3)
    moved = linearity_experiment(shifted_cfg, step=50e-9, n_steps=3)
    delta = np.asarray(base.deviations) - np.asarray(moved.deviations)
    assert np.max(np.abs(delta)) < 0.05e-9


def test_linearity_rejects_bad_arguments(clean_config):
    with pytest.raises(ConfigError):
        linearity_experiment(clean_config, step=0.0, n_steps=3)
    with pytest.raises(ConfigError):
        linearity_experiment(clean_config, step=50e-9, n_steps=1)
    with pytest.raises(ConfigError):
        # 10 steps of 20 um travel would crash the surfaces into each other
        linearity_experiment(clean_config, step=20e-6, n_steps=10)


def test_linearity_to_dict_round_trip(clean_config):
    res = linearity_experiment(clean_config, step=50e-9, n_steps=2)
    doc = res.to_dict()
    assert json.loads(json.dumps(doc)) == doc
    assert doc["step_size_m"] == 50e-9
    assert len(doc["deviations_m"]) == 2


def test_summarize_conventions():
    single = summarize([1.0e-6])
    assert single["std_dev_m"] == 0.0
    assert single["n"] == 1
    two = summarize([100.0e-9, 102.0e-9])
    assert two["std_dev_m"] == pytest.approx(np.sqrt(2.0) * 1e-9, rel=1e-12)
    assert two["mean_m"] == pytest.approx(101.0e-9)
    assert two["min_m"] == 100.0e-9
    assert two["max_m"] == 102.0e-9
    assert two["std_convention"] == "sample (n-1)"
    stats = summarize([1.0, 2.0, 3.0], outlier_count=2)
    assert stats["outliers_excluded"] == 2
    with pytest.raises(ConfigError):
        summarize([])
