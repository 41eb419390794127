"""Scripted studies: full pipeline runs, repeatability, linearity.

Each run re-synthesizes a scan with per-run seeds derived from the master
seed, pushes it through carrier calibration and autocorrelation peak
estimation, and records one separation. Runs flagged as fringe-ambiguity
outliers are excluded from the spread statistics but kept in the ledger;
a forced-ambiguity list exists to exercise exactly that bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from qolcr.calibration import (
    BandpassSpec,
    CalibratedRecord,
    CalibrationMap,
    build_calibration,
    extract_phase,
    extract_tpi,
    resample_intensity,
)
from qolcr.config import RunConfig
from qolcr.errors import ConfigError, PipelineQualityError, QolcrError
from qolcr.measure import MeasurementReport, autocorrelate, estimate_separations
from qolcr.scan import ScanTrace, simulate_scan


def synthesize(config: RunConfig, run_index: int = 0) -> ScanTrace:
    """One seeded scan synthesis for the given run index."""
    return simulate_scan(
        config.sample, config.spectrum, config.pump,
        config.stage_for_run(run_index), config.noise_for_run(run_index),
        config.scan_range,
    )


def calibrate_trace(config: RunConfig, trace: ScanTrace) -> tuple[CalibrationMap, CalibratedRecord]:
    """Carrier extraction, phase calibration, and uniform resampling."""
    spec = BandpassSpec.for_pump(
        config.pump,
        relative_bandwidth=config.pipeline.filter_relative_bandwidth,
        num_taps=config.pipeline.filter_num_taps,
    )
    carrier = extract_tpi(trace, spec=spec)
    phase = extract_phase(carrier, method=config.pipeline.phase_method)
    calibration = build_calibration(phase, config.pump)
    record = resample_intensity(trace, calibration, grid_step=config.pipeline.grid_step)
    return calibration, record


def measure_record(config: RunConfig, record: CalibratedRecord,
                   refinement_offset: float = 0.0) -> MeasurementReport:
    acorr = autocorrelate(record)
    return estimate_separations(
        acorr, config.pipeline.expected_peaks, refinement_offset=refinement_offset)


def run_pipeline(config: RunConfig, run_index: int = 0,
                 refinement_offset: float = 0.0) -> MeasurementReport:
    """Synthesis through measurement for one seeded run."""
    trace = synthesize(config, run_index)
    _, record = calibrate_trace(config, trace)
    return measure_record(config, record, refinement_offset=refinement_offset)


@dataclass
class RepeatabilityResult:
    """Separation statistics over repeated seeded runs of one configuration."""

    n_runs: int
    estimates: list          # separations of included (non-flagged) runs, m
    std_dev: float           # sample standard deviation over estimates, m
    outlier_count: int
    seed_ledger: list        # per-run dict: seeds, separation, flags
    failures: list = field(default_factory=list)

    def __post_init__(self):
        if self.outlier_count + len(self.estimates) + len(self.failures) != self.n_runs:
            raise ConfigError("repeatability bookkeeping does not add up")

    @property
    def included_count(self) -> int:
        return len(self.estimates)

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "included_count": self.included_count,
            "outlier_count": self.outlier_count,
            "failure_count": len(self.failures),
            "estimates_m": list(self.estimates),
            "std_dev_m": self.std_dev,
            "mean_m": float(np.mean(self.estimates)) if self.estimates else None,
            "seed_ledger": list(self.seed_ledger),
            "failures": list(self.failures),
            "std_convention": "sample (n-1)",
        }


def repeatability_experiment(config: RunConfig, n_runs: int,
                             force_ambiguity_runs=()) -> RepeatabilityResult:
    """Repeat the full pipeline n_runs times with independent seeds.

    Runs listed in force_ambiguity_runs get their carrier-refinement seed
    shifted by half a fringe, reproducing the one-wavelength
    misidentification; they come back flagged and are excluded from the
    spread. A pipeline failure is recorded for its run, not raised.
    """
    if n_runs < 2:
        raise ConfigError("repeatability needs at least 2 runs")
    forced = {int(i) for i in force_ambiguity_runs}
    bad = {i for i in forced if not 0 <= i < n_runs}
    if bad:
        raise ConfigError(f"forced-ambiguity run index {sorted(bad)[0]} out of range")
    half_fringe = config.spectrum.center_wavelength / 2.0

    estimates = []
    ledger = []
    failures = []
    outlier_count = 0
    for i in range(n_runs):
        stage_seed, noise_seed = config.seeds_for_run(i)
        entry = {
            "run": i,
            "stage_seed": stage_seed,
            "noise_seed": noise_seed,
            "forced_ambiguity": i in forced,
        }
        offset = half_fringe if i in forced else 0.0
        try:
            report = run_pipeline(config, run_index=i, refinement_offset=offset)
        except QolcrError as exc:
            entry["error"] = str(exc)
            failures.append(dict(entry))
            ledger.append(entry)
            continue
        peak = report.peaks[0]
        entry["separation_m"] = peak.separation
        entry["outlier"] = bool(peak.outlier_flag)
        ledger.append(entry)
        if peak.outlier_flag:
            outlier_count += 1
        else:
            estimates.append(peak.separation)

    std = float(np.std(estimates, ddof=1)) if len(estimates) >= 2 else 0.0
    return RepeatabilityResult(
        n_runs=n_runs, estimates=estimates, std_dev=std,
        outlier_count=outlier_count, seed_ledger=ledger, failures=failures,
    )


@dataclass
class LinearityResult:
    """Measured separations against commanded sub-fringe surface shifts."""

    step_size: float
    commanded_positions: list    # commanded first-surface positions, m
    measured_separations: list   # one per step, m (nan for failed runs)
    deviations: list             # measured minus unit-slope prediction, m
    max_abs_deviation: float
    failures: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.commanded_positions)
        if len(self.measured_separations) != n or len(self.deviations) != n:
            raise ConfigError("linearity result arrays must match in length")

    def to_dict(self) -> dict:
        def _null_if_nan(values):
            return [None if math.isnan(v) else v for v in values]

        return {
            "step_size_m": self.step_size,
            "commanded_positions_m": list(self.commanded_positions),
            "measured_separations_m": _null_if_nan(self.measured_separations),
            "deviations_m": _null_if_nan(self.deviations),
            "max_abs_deviation_m": self.max_abs_deviation,
            "failures": list(self.failures),
        }


def linearity_experiment(config: RunConfig, step: float, n_steps: int) -> LinearityResult:
    """Shift the first surface by k * step per run and track the separation.

    The first surface moves toward the second, so the set separation
    decreases by exactly step per shift; deviations compare each measured
    separation to the unit-slope line through the first run's value.
    """
    if step <= 0:
        raise ConfigError("linearity step must be positive")
    if n_steps < 2:
        raise ConfigError("linearity needs at least 2 steps")
    travel = (n_steps - 1) * step
    gap = config.sample.min_gap()
    if travel >= gap / 2.0:
        raise ConfigError(
            f"total shift {travel * 1e6:.3f} um would close more than half "
            f"the smallest surface gap of {gap * 1e6:.3f} um"
        )

    z1 = float(config.sample.positions[0])
    commanded = [z1 + k * step for k in range(n_steps)]
    measured = []
    failures = []
    for k in range(n_steps):
        shifted = config.with_sample(config.sample.shifted(0, k * step))
        try:
            report = run_pipeline(shifted, run_index=k)
            measured.append(float(report.peaks[0].separation))
        except QolcrError as exc:
            failures.append({"step": k, "error": str(exc)})
            measured.append(math.nan)

    finite = [m for m in measured if not math.isnan(m)]
    if not finite:
        raise PipelineQualityError("every linearity run failed")
    baseline = next(m for m in measured if not math.isnan(m))
    base_k = measured.index(baseline)
    deviations = [
        m - (baseline - (k - base_k) * step) if not math.isnan(m) else math.nan
        for k, m in enumerate(measured)
    ]
    max_abs = max(abs(d) for d in deviations if not math.isnan(d))
    return LinearityResult(
        step_size=step, commanded_positions=commanded,
        measured_separations=measured, deviations=deviations,
        max_abs_deviation=max_abs, failures=failures,
    )


def summarize(values, outlier_count: int = 0) -> dict:
    """Deterministic summary statistics with the sample (n-1) convention."""
    vals = [float(v) for v in values]
    if not vals:
        raise ConfigError("summarize needs at least one value")
    std = float(np.std(vals, ddof=1)) if len(vals) >= 2 else 0.0
    return {
        "n": len(vals),
        "mean_m": float(np.mean(vals)),
        "std_dev_m": std,
        "min_m": min(vals),
        "max_m": max(vals),
        "outliers_excluded": int(outlier_count),
        "std_convention": "sample (n-1)",
    }
