"""Separation estimation from the calibrated intensity record.

Every pair of surfaces leaves a fringe cluster in the autocorrelation of
the mean-subtracted intensity at a lag equal to their separation. The
cluster envelope locates the peak to a fraction of the packet width, and
the carrier phase inside the cluster refines it to a fraction of a fringe;
when the envelope vertex is off by more than a quarter fringe spacing the
refinement can lock onto the wrong fringe, which is what the outlier flag
reports.

The autocorrelation is the plain lag sum normalized once by its zero-lag
value, A(k) = sum_i x_i x_{i+k} / sum_i x_i^2. For a record of isolated
fringe packets this is the right estimator: a cross-packet cluster whose
packets sit interior to the overlap window enters the sum at full
amplitude (no taper to tilt its envelope), Cauchy-Schwarz bounds every
lag by A(0), and sparse far lags stay small in proportion to the energy
they actually carry. Overlap-count (unbiased) normalization would
inflate an interior cluster at lag k by n/(n-k), and per-lag coefficient
normalization would report O(1) correlation for vanishing packet tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.signal import find_peaks, hilbert

from qolcr.calibration import CalibratedRecord
from qolcr.errors import ConfigError, PeakCountError, PeakFitError

# smallest sample overlap allowed between the shifted record copies; lags
# closer to the record length than this are dropped
MIN_OVERLAP = 256

# clusters below this fraction of the zero-lag value are never trusted,
# whatever the record's noise floor; a genuine surface pair contributes
# about r_i r_j / sum(r^2), well above this for usable reflectivities
MIN_CLUSTER_HEIGHT = 1e-3


@dataclass
class Autocorrelogram:
    """Mean-subtracted autocorrelation normalized to A(0) = 1."""

    lags: np.ndarray          # symmetric uniform grid, meters
    values: np.ndarray
    grid_step: float
    dc_removed: bool = True
    metadata: dict = field(default_factory=dict)
    quality: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.lags) != len(self.values):
            raise ConfigError("autocorrelogram arrays must match in length")
        center = len(self.lags) // 2
        if abs(self.values[center] - 1.0) > 1e-12:
            raise ConfigError("autocorrelogram must be normalized to A(0) = 1")
        if np.max(np.abs(self.values)) > 1.0 + 1e-9:
            raise ConfigError("autocorrelogram exceeds its zero-lag value")

    @property
    def zero_index(self) -> int:
        return len(self.lags) // 2

    def window(self, center: float, halfwidth: float) -> slice:
        lo = int(np.searchsorted(self.lags, center - halfwidth, side="left"))
        hi = int(np.searchsorted(self.lags, center + halfwidth, side="right"))
        return slice(lo, hi)


def autocorrelate(record: CalibratedRecord, max_lag: float | None = None) -> Autocorrelogram:
    """Autocorrelation of the mean-subtracted record via the spectral method.

    Zero-padded FFT gives the linear (non-circular) lag sums, normalized
    once by the zero-lag sum, so |A(k)| <= A(0) = 1 by Cauchy-Schwarz.
    Lags run symmetric about zero; the maximum lag is capped so at least
    MIN_OVERLAP samples contribute.
    """
    x = record.intensity - record.intensity.mean()
    n = len(x)
    if n < 2 * MIN_OVERLAP:
        raise ConfigError(f"record of {n} samples too short to autocorrelate")
    k_cap = n - MIN_OVERLAP
    if max_lag is not None:
        k_req = int(math.floor(max_lag / record.grid_step))
        if k_req < 1:
            raise ConfigError("max_lag smaller than one grid step")
        if k_req > n - 1:
            raise ConfigError(
                f"requested max lag {max_lag:.3e} m exceeds the record span"
            )
        k_cap = min(k_cap, k_req)

    nfft = next_fast_len(2 * n - 1)
    spec = rfft(x, nfft)
    raw = irfft(spec * np.conj(spec), nfft)[: k_cap + 1]
    if raw[0] <= 0:
        raise ConfigError("record has zero variance")
    one_sided = raw / raw[0]
    one_sided[0] = 1.0

    values = np.concatenate([one_sided[:0:-1], one_sided])
    lags = np.concatenate([-np.arange(k_cap, 0, -1), np.arange(k_cap + 1)]) * record.grid_step
    return Autocorrelogram(
        lags=lags, values=values, grid_step=record.grid_step, dc_removed=True,
        metadata=dict(record.metadata), quality=dict(record.quality),
    )


def envelope(acorr: Autocorrelogram, center: float, halfwidth: float):
    """Carrier envelope of A around `center` via the analytic signal.

    The Hilbert transform runs on a window 50% wider than requested so its
    edge artifacts stay outside the returned range. Returns (lags, env).
    """
    guard = acorr.window(center, 1.5 * halfwidth)
    seg = acorr.values[guard]
    if len(seg) < 32:
        raise PeakFitError("envelope window too small or outside the autocorrelogram")
    env = np.abs(hilbert(seg))
    lags = acorr.lags[guard]
    keep = (lags >= center - halfwidth) & (lags <= center + halfwidth)
    return lags[keep], env[keep]


def parabolic_peak_fit(positions, values):
    """Least-squares parabola through the samples; returns (vertex, sigma, coeffs).

    The fit must be concave with its maximum interior to the sampled
    window. sigma is the vertex standard error propagated from the fit
    residuals (zero for an exact quadratic).
    """
    x = np.asarray(positions, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3:
        raise PeakFitError("parabolic fit needs at least 3 samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise PeakFitError("parabolic fit given non-finite samples")
    x0 = x.mean()
    u = x - x0
    design = np.column_stack([u ** 2, u, np.ones_like(u)])
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    a, b, c = coeffs
    if a >= 0:
        raise PeakFitError("peak fit is not concave; no maximum to locate")
    vertex = x0 - b / (2.0 * a)
    if not (x.min() <= vertex <= x.max()):
        raise PeakFitError("fitted maximum lies outside the fit window")

    dof = x.size - 3
    sigma = 0.0
    if dof > 0:
        resid = y - design @ coeffs
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(design.T @ design)
        grad = np.array([b / (2.0 * a * a), -1.0 / (2.0 * a), 0.0])
        var = float(grad @ cov @ grad)
        sigma = math.sqrt(max(var, 0.0))
    return float(vertex), sigma, (float(a), float(b), float(c))


@dataclass
class PeakEstimate:
    """One inter-surface separation recovered from an autocorrelation cluster."""

    separation: float          # final value: the carrier-refined position
    envelope_vertex: float
    carrier_refined: float
    uncertainty: float         # vertex standard error from the envelope fit
    outlier_flag: bool         # refinement moved > quarter fringe from the vertex
    diagnostics: dict = field(default_factory=dict)


@dataclass
class MeasurementReport:
    """All separations of one record, sorted ascending."""

    peaks: list
    expected_count: int
    metadata: dict = field(default_factory=dict)
    quality: dict = field(default_factory=dict)

    @property
    def separations(self) -> list:
        return [p.separation for p in self.peaks]

    def to_dict(self) -> dict:
        return {
            "expected_count": self.expected_count,
            "peaks": [
                {
                    "separation_m": p.separation,
                    "envelope_vertex_m": p.envelope_vertex,
                    "carrier_refined_m": p.carrier_refined,
                    "uncertainty_m": p.uncertainty,
                    "outlier": bool(p.outlier_flag),
                    "diagnostics": {k: _jsonable(v) for k, v in p.diagnostics.items()},
                }
                for p in self.peaks
            ],
            "quality": {k: _jsonable(v) for k, v in self.quality.items()},
            "metadata": {k: _jsonable(v) for k, v in self.metadata.items()},
        }


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def _cluster_parameters(acorr: Autocorrelogram):
    """Window sizes derived from the zero-lag cluster of A itself.

    The zero-lag cluster has the same coherence envelope as every other
    cluster, so its half-max half-width sets the natural length scale
    without needing the source spectrum.
    """
    n0 = acorr.zero_index
    env = np.abs(hilbert(acorr.values))
    above = env[n0:] >= 0.5
    edge = np.argmin(above)  # first index below half max
    if edge == 0:
        raise PeakFitError("zero-lag cluster of the autocorrelogram is malformed")
    w_half = float(edge) * acorr.grid_step
    return {
        "w_half": w_half,
        "zero_guard": 4.0 * w_half,
        "min_separation": 3.0 * w_half,
        "envelope_halfwidth": 1.5 * w_half,
        "fit_halfwidth": 0.3 * w_half,
        "full_envelope": env,
    }


def estimate_separations(acorr: Autocorrelogram, expected_count: int,
                         refinement_offset: float = 0.0,
                         noise_floor_factor: float = 6.0) -> MeasurementReport:
    """Locate the `expected_count` strongest clusters and refine each one.

    refinement_offset shifts the carrier-fringe seed away from the
    envelope vertex; nonzero values force the one-fringe ambiguity and are
    used to exercise the outlier flag.
    """
    if expected_count < 0:
        raise ConfigError("expected_count must be nonnegative")
    report = MeasurementReport(
        peaks=[], expected_count=expected_count,
        metadata=dict(acorr.metadata), quality=dict(acorr.quality),
    )
    if expected_count == 0:
        return report

    params = _cluster_parameters(acorr)
    env = params["full_envelope"]
    n0 = acorr.zero_index
    search = env[n0:].copy()
    guard_idx = int(round(params["zero_guard"] / acorr.grid_step))
    if guard_idx >= len(search):
        raise PeakCountError("autocorrelogram holds no lags beyond the zero-lag guard")
    search[:guard_idx] = 0.0
    floor = max(
        noise_floor_factor * float(np.median(env[n0 + guard_idx:])),
        MIN_CLUSTER_HEIGHT,
    )
    distance = max(int(round(params["min_separation"] / acorr.grid_step)), 1)
    peaks_idx, props = find_peaks(search, height=floor, distance=distance)
    if len(peaks_idx) < expected_count:
        raise PeakCountError(
            f"found {len(peaks_idx)} cluster(s) above the noise floor, "
            f"expected {expected_count}"
        )
    order = np.argsort(props["peak_heights"])[::-1][:expected_count]
    chosen = np.sort(peaks_idx[order])

    estimates = []
    for idx in chosen:
        center = float(idx) * acorr.grid_step
        estimates.append(_refine_cluster(acorr, center, params, refinement_offset))
    estimates.sort(key=lambda p: p.separation)
    if any(p.separation <= params["zero_guard"] for p in estimates):
        raise PeakFitError("a refined separation fell inside the zero-lag guard")
    report.peaks = estimates
    report.quality["cluster_search"] = {
        "w_half": params["w_half"],
        "zero_guard": params["zero_guard"],
        "min_separation": params["min_separation"],
        "noise_floor": floor,
        "n_candidates": int(len(peaks_idx)),
    }
    return report


def _refine_cluster(acorr: Autocorrelogram, center: float, params: dict,
                    refinement_offset: float) -> PeakEstimate:
    hw = params["envelope_halfwidth"]
    guard = acorr.window(center, 1.5 * hw)
    seg = acorr.values[guard]
    lags = acorr.lags[guard]
    if len(seg) < 64:
        raise PeakFitError("cluster too close to the edge of the autocorrelogram")
    analytic = hilbert(seg)
    env = np.abs(analytic)
    phase = np.unwrap(np.angle(analytic))

    inner = (lags >= center - hw) & (lags <= center + hw)
    peak_lag = float(lags[inner][np.argmax(env[inner])])

    fit_hw = params["fit_halfwidth"]
    fit_sel = (lags >= peak_lag - fit_hw) & (lags <= peak_lag + fit_hw)
    vertex, sigma, coeffs = parabolic_peak_fit(lags[fit_sel], env[fit_sel])

    # carrier period from the mean phase slope across the fit region
    slope = float(np.polyfit(lags[fit_sel], phase[fit_sel], 1)[0])
    if slope <= 0:
        raise PeakFitError("carrier phase not increasing across the cluster")
    period = 2.0 * math.pi / slope     # lambda0 / 2 on the lag axis

    # nearest carrier maximum to the (optionally offset) seed: the carrier
    # phase is zero modulo 2 pi exactly at the true separation
    seed = vertex + refinement_offset
    phi_seed = float(np.interp(seed, lags, phase))
    target = 2.0 * math.pi * round(phi_seed / (2.0 * math.pi))
    if not (phase[0] <= target <= phase[-1]):
        raise PeakFitError("carrier refinement target outside the cluster window")
    refined = float(np.interp(target, phase, lags))

    outlier = abs(refined - vertex) > period / 2.0
    return PeakEstimate(
        separation=refined,
        envelope_vertex=vertex,
        carrier_refined=refined,
        uncertainty=sigma,
        outlier_flag=bool(outlier),
        diagnostics={
            "cluster_center": center,
            "carrier_period": period,
            "fit_coefficients": coeffs,
            "fit_halfwidth": fit_hw,
            "envelope_peak": float(env[inner].max()),
        },
    )
