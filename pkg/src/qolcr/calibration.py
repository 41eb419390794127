"""Self-calibration of the scan axis from the coincidence carrier.

The pair-interference term of the coincidence channel oscillates at
2 / lambda_p cycles per meter of true mirror travel with an amplitude that
does not depend on the scan position. Band-passing the coincidence trace
around that frequency, taking the analytic-signal phase, and scaling the
unwrapped phase by lambda_p / (4 pi) therefore reproduces the true position
axis up to an additive constant, which is anchored at the scan midpoint.

All filtering is zero-phase: the band-pass is a symmetric (linear-phase)
FIR applied with its group delay compensated, and samples inside half a
filter length of either end are flagged invalid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve, firwin, freqz, hilbert

from qolcr.errors import CalibrationQualityError, ConfigError
from qolcr.model import PumpReference
from qolcr.scan import ScanTrace

# realized-response requirements checked after every design
PASSBAND_RIPPLE = 0.01       # relative gain error allowed on the carrier
DC_LEAKAGE = 1e-4            # maximum gain at zero frequency
STOPBAND_DB = 40.0           # required attenuation one octave below center

_KAISER_BETA = 8.96          # ~90 dB design


@dataclass(frozen=True)
class BandpassSpec:
    """Band-pass prescription in cycles per meter of reported travel."""

    center_frequency: float        # cycles per meter, 2 / lambda_p for the carrier
    relative_bandwidth: float = 0.2
    num_taps: int = 2001           # odd, symmetric FIR

    def __post_init__(self):
        if self.center_frequency <= 0:
            raise ConfigError("band-pass center frequency must be positive")
        if not 0 < self.relative_bandwidth < 1:
            raise ConfigError("relative bandwidth must lie in (0, 1)")
        if self.num_taps < 31 or self.num_taps % 2 == 0:
            raise ConfigError("num_taps must be odd and at least 31")

    @classmethod
    def for_pump(cls, pump: PumpReference, **kw) -> "BandpassSpec":
        return cls(center_frequency=2.0 / pump.wavelength, **kw)

    @property
    def band_edges(self) -> tuple[float, float]:
        half = 0.5 * self.relative_bandwidth * self.center_frequency
        return (self.center_frequency - half, self.center_frequency + half)


def design_bandpass(spec: BandpassSpec, sample_spacing: float) -> np.ndarray:
    """Kaiser-window linear-phase FIR for the given spacing of the d' grid.

    Validates the realized response: unit gain at the center within 1%,
    DC leakage at most 1e-4, and at least 40 dB of attenuation one octave
    below the center (where the classical lambda0 / 2 fringes sit).
    """
    if sample_spacing <= 0:
        raise ConfigError("sample spacing must be positive")
    fs = 1.0 / sample_spacing
    f1, f2 = spec.band_edges
    if f2 >= fs / 2:
        raise ConfigError(
            f"band edge {f2:.4g} cyc/m reaches Nyquist {fs / 2:.4g}; "
            "spacing too coarse for the requested band"
        )
    taps = firwin(spec.num_taps, [f1, f2], window=("kaiser", _KAISER_BETA),
                  pass_zero=False, fs=fs)

    probe = np.array([0.0, spec.center_frequency / 2.0, spec.center_frequency])
    _, resp = freqz(taps, worN=probe, fs=fs)
    gain = np.abs(resp)
    if abs(gain[2] - 1.0) > PASSBAND_RIPPLE:
        raise ConfigError(
            f"filter of {spec.num_taps} taps misses unit gain at the center "
            f"(got {gain[2]:.4f}); increase num_taps"
        )
    if gain[0] > DC_LEAKAGE:
        raise ConfigError(
            f"filter DC leakage {gain[0]:.2e} exceeds {DC_LEAKAGE:.0e}; "
            "increase num_taps"
        )
    if gain[1] > 10 ** (-STOPBAND_DB / 20.0):
        raise ConfigError(
            f"filter leaves only {-20 * math.log10(max(gain[1], 1e-300)):.1f} dB "
            f"at half the center frequency, need {STOPBAND_DB:.0f} dB; "
            "increase num_taps or widen the transition"
        )
    return taps


def zero_phase_apply(taps: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Apply a symmetric FIR with its group delay removed.

    mode='same' centers the (odd, symmetric) kernel on each sample, which
    for a linear-phase filter is exactly the zero-phase response away from
    the edges.
    """
    if len(taps) % 2 == 0:
        raise ConfigError("zero-phase application requires an odd tap count")
    return fftconvolve(values, taps, mode="same")


@dataclass
class FilteredCarrier:
    """Band-passed coincidence trace with its edge-validity mask."""

    values: np.ndarray
    valid: np.ndarray            # False within half a filter length of the ends
    reported_d: np.ndarray
    spacing: float
    spec: BandpassSpec

    @property
    def valid_slice(self) -> slice:
        idx = np.nonzero(self.valid)[0]
        return slice(int(idx[0]), int(idx[-1]) + 1)


def extract_tpi(trace: ScanTrace, spec: BandpassSpec | None = None,
                pump: PumpReference | None = None) -> FilteredCarrier:
    """Isolate the pair-interference carrier from the coincidence channel.

    The channel mean is removed before filtering to keep the edge ramp of
    the convolution small; the pedestal carries no carrier information.
    """
    if spec is None:
        if pump is None:
            raise ConfigError("extract_tpi needs a BandpassSpec or a PumpReference")
        spec = BandpassSpec.for_pump(pump)
    taps = design_bandpass(spec, trace.spacing)
    x = trace.coincidence - trace.coincidence.mean()
    filtered = zero_phase_apply(taps, x)
    half = (len(taps) - 1) // 2
    valid = np.zeros(len(filtered), dtype=bool)
    if len(filtered) <= 2 * half:
        raise CalibrationQualityError(
            f"trace of {len(filtered)} samples shorter than the filter "
            f"edge exclusion of 2 x {half}"
        )
    valid[half:len(filtered) - half] = True
    return FilteredCarrier(
        values=filtered, valid=valid, reported_d=trace.reported_d,
        spacing=trace.spacing, spec=spec,
    )


@dataclass
class PhaseTrace:
    """Unwrapped carrier phase with amplitude and a quality mask."""

    unwrapped_phase: np.ndarray
    amplitude: np.ndarray
    quality_mask: np.ndarray     # True where the phase is trustworthy
    filter_valid: np.ndarray     # True outside the filter edge exclusion
    reported_d: np.ndarray
    spacing: float


def extract_phase(carrier: FilteredCarrier, method: str = "analytic",
                  amplitude_floor_ratio: float = 0.2,
                  max_bad_fraction: float = 0.10) -> PhaseTrace:
    """Per-sample carrier phase, unwrapped so adjacent steps stay in (-pi, pi].

    method 'analytic' builds the quadrature by one-sided spectral selection
    (analytic signal); 'crossings' localizes carrier zero crossings and
    interpolates phase between them, as an independent cross-check.
    Samples with amplitude below amplitude_floor_ratio times the median are
    masked; more than max_bad_fraction of masked valid samples is an error.
    """
    if method == "analytic":
        analytic = hilbert(carrier.values)
        amplitude = np.abs(analytic)
        phase = np.unwrap(np.angle(analytic))
    elif method == "crossings":
        phase, amplitude = _phase_from_crossings(carrier)
    else:
        raise ConfigError(f"unknown phase extraction method {method!r}")

    mask = carrier.valid.copy()
    inside = amplitude[carrier.valid]
    floor = amplitude_floor_ratio * float(np.median(inside))
    mask &= amplitude >= floor
    bad = 1.0 - mask[carrier.valid].mean()
    if bad > max_bad_fraction:
        raise CalibrationQualityError(
            f"carrier amplitude below floor over {bad:.1%} of the scan "
            f"(allowed {max_bad_fraction:.0%}); weak pair-interference signal"
        )
    return PhaseTrace(
        unwrapped_phase=phase, amplitude=amplitude, quality_mask=mask,
        filter_valid=carrier.valid.copy(),
        reported_d=carrier.reported_d, spacing=carrier.spacing,
    )


def _phase_from_crossings(carrier: FilteredCarrier):
    """Phase by zero-crossing interpolation; amplitude from extrema blocks."""
    x = carrier.values
    signs = np.sign(x)
    signs[signs == 0] = 1
    idx = np.nonzero(np.diff(signs) != 0)[0]
    if len(idx) < 8:
        raise CalibrationQualityError("too few carrier zero crossings to track phase")
    frac = x[idx] / (x[idx] - x[idx + 1])
    pos = idx + frac                       # crossing position in samples
    # ascending carrier phase passes pi/2 + k pi at successive crossings;
    # the first crossing's absolute multiple is irrelevant (anchored later)
    phase_at = 0.5 * math.pi + math.pi * np.arange(len(pos))
    k = np.arange(len(x), dtype=float)
    phase = np.interp(k, pos, phase_at)
    # linear extension beyond the first/last crossing
    head = k < pos[0]
    tail = k > pos[-1]
    slope0 = math.pi / (pos[1] - pos[0])
    slope1 = math.pi / (pos[-1] - pos[-2])
    phase[head] = phase_at[0] + (k[head] - pos[0]) * slope0
    phase[tail] = phase_at[-1] + (k[tail] - pos[-1]) * slope1
    # block amplitude: peak |x| between adjacent crossings
    amp_pos = 0.5 * (pos[:-1] + pos[1:])
    amp_val = np.array([
        np.abs(x[int(a):max(int(a) + 1, int(b) + 1)]).max()
        for a, b in zip(idx[:-1], idx[1:] + 1)
    ])
    amplitude = np.interp(k, amp_pos, amp_val)
    return phase, amplitude


@dataclass
class CalibrationMap:
    """Monotone map from reported to calibrated positions.

    Knots cover the filter-valid part of the scan; evaluation interpolates
    linearly between knots and extrapolates linearly outside them with end
    slopes fitted over `edge_fit` knots (single-pair slopes would inherit
    too much phase noise).
    """

    reported: np.ndarray
    calibrated: np.ndarray
    interpolation: str = "linear"
    edge_fit: int = 2000
    quality: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.reported) != len(self.calibrated):
            raise ConfigError("calibration knot arrays must match in length")
        if len(self.reported) < 4:
            raise ConfigError("calibration map needs at least 4 knots")
        if np.any(np.diff(self.reported) <= 0):
            raise CalibrationQualityError("reported knot positions not strictly increasing")
        if np.any(np.diff(self.calibrated) <= 0):
            raise CalibrationQualityError(
                "calibrated positions not strictly increasing; "
                "phase extraction failed or the stage reversed"
            )
        self._lo_slope = self._end_slope(0)
        self._hi_slope = self._end_slope(-1)

    def _end_slope(self, which: int) -> float:
        n = min(self.edge_fit, len(self.reported) // 4)
        n = max(n, 2)
        sel = slice(0, n) if which == 0 else slice(-n, None)
        x = self.reported[sel]
        y = self.calibrated[sel]
        slope = float(np.polyfit(x, y, 1)[0])
        if slope <= 0:
            raise CalibrationQualityError("calibration end slope not positive")
        return slope

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.reported[0]), float(self.reported[-1])

    def __call__(self, positions):
        x = np.asarray(positions, dtype=float)
        y = np.interp(x, self.reported, self.calibrated)
        lo, hi = self.domain
        below = x < lo
        above = x > hi
        if below.any():
            y[below] = self.calibrated[0] + (x[below] - lo) * self._lo_slope
        if above.any():
            y[above] = self.calibrated[-1] + (x[above] - hi) * self._hi_slope
        return y

    def correction(self):
        """Knot-wise calibrated minus reported, the Fig-style correction curve."""
        return self.calibrated - self.reported


def build_calibration(phase: PhaseTrace, pump: PumpReference,
                      min_valid_fraction: float = 0.9) -> CalibrationMap:
    """Scale the unwrapped phase to positions and anchor at the scan midpoint.

    One full carrier period corresponds to lambda_p / 2 of travel, so
    d = phi * lambda_p / (4 pi) + anchor with the anchor chosen to make the
    calibrated and reported scales agree at the midpoint sample.
    """
    mask = phase.quality_mask
    idx = np.nonzero(mask)[0]
    if len(idx) < 16:
        raise CalibrationQualityError("too few valid phase samples to calibrate")
    coverage = len(idx) / max(int(phase.filter_valid.sum()), 1)
    if coverage < min_valid_fraction:
        raise CalibrationQualityError(
            f"only {coverage:.1%} of the filter-valid scan has usable phase, "
            f"need {min_valid_fraction:.0%}"
        )
    scale = pump.wavelength / (4.0 * math.pi)
    phi = phase.unwrapped_phase[idx]
    if np.any(np.diff(phi) <= 0):
        raise CalibrationQualityError(
            "unwrapped carrier phase is not strictly increasing; "
            "stage reversal or phase-extraction failure"
        )
    dprime = phase.reported_d[idx]
    mid = idx[int(np.argmin(np.abs(idx - len(phase.reported_d) // 2)))]
    anchor = phase.reported_d[mid] - phase.unwrapped_phase[mid] * scale
    calibrated = phi * scale + anchor
    quality = {
        "n_knots": int(len(idx)),
        "valid_fraction": float(len(idx) / len(mask)),
        "anchor_reported_d": float(phase.reported_d[mid]),
        "rms_correction": float(np.sqrt(np.mean((calibrated - dprime) ** 2))),
        "max_abs_correction": float(np.abs(calibrated - dprime).max()),
    }
    return CalibrationMap(reported=dprime, calibrated=calibrated, quality=quality)


@dataclass
class CalibratedRecord:
    """Intensity resampled onto a uniform grid of calibrated positions."""

    positions: np.ndarray
    intensity: np.ndarray
    grid_step: float
    metadata: dict = field(default_factory=dict)
    quality: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.positions) != len(self.intensity):
            raise ConfigError("record arrays must match in length")
        steps = np.diff(self.positions)
        if len(steps) and not np.allclose(steps, self.grid_step, rtol=1e-9, atol=0):
            raise ConfigError("calibrated record grid is not uniform")

    @property
    def n_samples(self) -> int:
        return len(self.positions)


def resample_intensity(trace: ScanTrace, calibration: CalibrationMap,
                       grid_step: float | None = None) -> CalibratedRecord:
    """Cubic resampling of the intensity onto a uniform calibrated grid.

    Every intensity sample is placed at its calibrated position (linear
    extrapolation of the map covers the filter-excluded edges; the
    extrapolated fraction is recorded in the quality block) and a cubic
    spline through those points is evaluated on a uniform grid.
    """
    if grid_step is None:
        grid_step = trace.spacing
    if grid_step <= 0:
        raise ConfigError("grid step must be positive")
    positions = calibration(trace.reported_d)
    if np.any(np.diff(positions) <= 0):
        raise CalibrationQualityError("calibrated sample positions not increasing")
    lo, hi = calibration.domain
    extrapolated = float(np.mean((trace.reported_d < lo) | (trace.reported_d > hi)))

    first = math.ceil(positions[0] / grid_step - 1e-9)
    last = math.floor(positions[-1] / grid_step + 1e-9)
    if last - first < 15:
        raise CalibrationQualityError("calibrated span too short to resample")
    grid = np.arange(first, last + 1) * grid_step
    spline = CubicSpline(positions, trace.intensity)
    values = spline(grid)
    quality = dict(calibration.quality)
    quality["extrapolated_fraction"] = extrapolated
    quality["grid_step"] = float(grid_step)
    return CalibratedRecord(
        positions=grid, intensity=values, grid_step=float(grid_step),
        metadata=dict(trace.metadata), quality=quality,
    )
