"""Synthesis of reference-arm scans: stage trajectory, rates, counting noise.

The reference mirror is driven at constant commanded velocity and both
detector channels are binned at a fixed rate, so the reported position grid
is uniform with spacing velocity / sample_rate. The true mirror position
deviates from the report through a scale error, a lead-screw-like periodic
term, and a smoothed random walk; all three act on the distance traveled
since the scan start.

Count rates are kept strictly nonnegative by sitting the interference terms
on a baseline with headroom; clamping is never applied, a configuration
that would go negative is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from qolcr.errors import SynthesisError
from qolcr.model import (
    SPEED_OF_LIGHT,
    PumpReference,
    Sample,
    Spectrum,
    coherence_envelope,
    response_function,
)

# baselines sit this factor above the worst-case interference swing
BASELINE_HEADROOM = 1.2

# reject samples whose surfaces sit closer than this many packet widths
MIN_GAP_COHERENCE_LENGTHS = 3.0

# required clearance between the outermost surfaces and the scan ends
MIN_MARGIN_COHERENCE_LENGTHS = 1.0


@dataclass(frozen=True)
class StageModel:
    """Commanded motion plus deterministic and stochastic position errors."""

    velocity: float              # commanded speed, m/s
    sample_rate: float           # detector binning rate, Hz
    scale_error: float = 0.0     # fractional scale error of the drive
    periodic_amplitude: float = 0.0   # lead-screw wobble amplitude, m
    periodic_period: float = 50e-6    # lead-screw wobble period, m
    periodic_phase: float = 0.0       # wobble phase at the scan start, rad
    drift_step: float = 0.0      # random-walk step per sample, m
    drift_smoothing: int = 1500  # boxcar length applied to the walk, samples
    seed: int | None = None      # RNG seed for the walk

    def __post_init__(self):
        if self.velocity <= 0 or self.sample_rate <= 0:
            raise ValueError("stage velocity and sample rate must be positive")
        if self.periodic_period <= 0:
            raise ValueError("periodic_period must be positive")
        if self.drift_step < 0 or self.drift_smoothing < 1:
            raise ValueError("drift parameters out of range")

    @property
    def spacing(self) -> float:
        """Reported grid spacing in meters."""
        return self.velocity / self.sample_rate

    def reported_grid(self, n_samples: int, start: float = 0.0) -> np.ndarray:
        return start + self.spacing * np.arange(n_samples)


def true_positions(stage: StageModel, n_samples: int, start: float = 0.0) -> np.ndarray:
    """Actual mirror positions for an n-sample scan beginning at `start`.

    With all error terms zero this returns the reported grid exactly.
    Raises SynthesisError if the distorted trajectory is not strictly
    increasing (the pipeline assumes no stage reversals).
    """
    traveled = stage.spacing * np.arange(n_samples)
    positions = traveled * (1.0 + stage.scale_error)
    if stage.periodic_amplitude != 0.0:
        positions = positions + stage.periodic_amplitude * np.sin(
            2.0 * math.pi * traveled / stage.periodic_period + stage.periodic_phase
        )
    if stage.drift_step > 0.0:
        rng = np.random.default_rng(stage.seed)
        walk = np.cumsum(rng.normal(0.0, stage.drift_step, n_samples))
        walk = uniform_filter1d(walk, size=stage.drift_smoothing, mode="nearest")
        positions = positions + (walk - walk[0])
    positions = start + positions
    if np.any(np.diff(positions) <= 0.0):
        raise SynthesisError(
            "stage error model produced a non-monotone trajectory; "
            "reduce the periodic amplitude or drift step"
        )
    return positions


@dataclass(frozen=True)
class NoiseModel:
    """Counting statistics of the two detector channels."""

    singles_scale: float        # mean intensity counts per bin at the fringe-free baseline
    coincidence_scale: float    # mean coincidence counts per bin at the baseline
    background: float = 0.0     # uncorrelated counts per bin added to both channels
    poisson_enabled: bool = True
    seed: int | None = None

    def __post_init__(self):
        if self.singles_scale <= 0 or self.coincidence_scale <= 0:
            raise ValueError("count scales must be positive")
        if self.background < 0:
            raise ValueError("background must be nonnegative")


def intensity_baseline(sample: Sample, spectrum: Spectrum) -> float:
    """Constant pedestal of the intensity channel.

    Sized with headroom over the worst case |sum_j r_j f| <= f(0) sum_j r_j
    so the modeled rate can never go negative.
    """
    peak = response_function(spectrum, 0.0)
    return BASELINE_HEADROOM * peak * float(np.sum(sample.reflectivities))


def intensity_rate(sample: Sample, spectrum: Spectrum, d,
                   noise: NoiseModel | None = None):
    """Classical interferogram I(d) = I0 + sum_j r_j f(2 d / c - tau_j).

    With `noise` given, rescales so the fringe-free pedestal equals
    singles_scale counts per bin and adds the background.
    """
    d = np.asarray(d, dtype=float)
    tau = 2.0 * d / SPEED_OF_LIGHT
    baseline = intensity_baseline(sample, spectrum)
    rate = np.full(tau.shape, baseline)
    for r, tau_j in zip(sample.reflectivities, sample.delays):
        rate += r * response_function(spectrum, tau - tau_j)
    if noise is None:
        return rate
    return noise.singles_scale * rate / baseline + noise.background


def tpi_constant(sample: Sample, spectrum: Spectrum) -> complex:
    """Constant two-photon-interference amplitude S0 sum_j r_j^2 e^{-2i omega0 tau_j}.

    Every surface contributes with twice its phase at the center frequency
    and the summed amplitude does not depend on the scan position, which is
    what makes the coincidence carrier usable over the full scan.
    """
    taus = sample.delays
    refl = sample.reflectivities
    phases = np.exp(-2j * spectrum.center_frequency * taus)
    return complex(spectrum.total_power * np.sum(refl ** 2 * phases))


@dataclass(frozen=True)
class CoincidenceTerms:
    """Amplitudes of the four coincidence-rate contributions.

    The pair-interference constant is fixed by the sample and spectrum;
    the dip/packet visibilities are phenomenological knobs.
    """

    baseline: float           # M0 pedestal, model units
    hom_amplitude: float      # relative amplitude of the pairwise HOM envelopes
    fringe_amplitude: float   # relative amplitude of the single-photon packets
    pair_constant: complex    # S0 sum_j r_j^2 e^{-2i omega0 tau_j}

    @classmethod
    def from_sample(cls, sample: Sample, spectrum: Spectrum,
                    hom_amplitude: float = 1.0,
                    fringe_amplitude: float = 2.0) -> "CoincidenceTerms":
        refl = sample.reflectivities
        pair_constant = tpi_constant(sample, spectrum)
        env_peak = spectrum.total_power / (2.0 * math.pi)  # |s(0)|
        cross = float(sum(
            refl[i] * refl[j]
            for i in range(len(refl)) for j in range(i + 1, len(refl))
        ))
        swing = (
            2.0 * abs(hom_amplitude) * env_peak * cross
            + 4.0 * abs(fringe_amplitude) * env_peak * float(np.sum(refl))
            + 2.0 * abs(pair_constant)
        )
        return cls(
            baseline=BASELINE_HEADROOM * swing,
            hom_amplitude=hom_amplitude,
            fringe_amplitude=fringe_amplitude,
            pair_constant=pair_constant,
        )


def coincidence_components(sample: Sample, spectrum: Spectrum,
                           pump: PumpReference, terms: CoincidenceTerms, d):
    """The three position-dependent coincidence terms, separately.

    Returns a dict with keys 'hom', 'fringes', 'pair_carrier'; the total
    rate is terms.baseline plus their sum. The pair carrier is evaluated
    against the pump frequency, which for exact degeneracy equals the
    2 omega0 form bit for bit.
    """
    d = np.asarray(d, dtype=float)
    tau = 2.0 * d / SPEED_OF_LIGHT
    taus = sample.delays
    refl = sample.reflectivities
    env_scale = spectrum.total_power / (2.0 * math.pi)
    sig = spectrum.sigma

    hom = np.zeros(tau.shape)
    for i in range(len(refl)):
        for j in range(i + 1, len(refl)):
            center = taus[i] + taus[j]
            hom += refl[i] * refl[j] * np.exp(-0.5 * (sig * (2.0 * tau - center)) ** 2)
    hom = 2.0 * terms.hom_amplitude * env_scale * hom

    packet = np.zeros(tau.shape, dtype=complex)
    for r, tau_j in zip(refl, taus):
        packet += r * coherence_envelope(spectrum, tau - tau_j)
    fringes = 4.0 * terms.fringe_amplitude * np.real(
        packet * np.exp(-1j * spectrum.center_frequency * tau)
    )

    pair_carrier = 2.0 * np.real(
        terms.pair_constant * np.exp(-1j * pump.angular_frequency * tau)
    )
    return {"hom": hom, "fringes": fringes, "pair_carrier": pair_carrier}


def coincidence_rate(sample: Sample, spectrum: Spectrum, pump: PumpReference,
                     terms: CoincidenceTerms, d,
                     noise: NoiseModel | None = None):
    """Coincidence interferogram M(d); see coincidence_components for parts."""
    parts = coincidence_components(sample, spectrum, pump, terms, d)
    rate = terms.baseline + parts["hom"] + parts["fringes"] + parts["pair_carrier"]
    if noise is None:
        return rate
    return noise.coincidence_scale * rate / terms.baseline + noise.background


@dataclass
class ScanTruth:
    """Noise-free ground truth retained alongside a synthesized trace."""

    true_d: np.ndarray
    intensity_rate: np.ndarray       # expected counts per bin
    coincidence_rate: np.ndarray     # expected counts per bin
    pair_carrier: np.ndarray         # pair-interference part, model units
    coincidence_parts: dict = field(default_factory=dict)  # model units
    terms: CoincidenceTerms | None = None


@dataclass
class ScanTrace:
    """One synthesized scan: reported positions and both count channels."""

    reported_d: np.ndarray
    intensity: np.ndarray
    coincidence: np.ndarray
    spacing: float
    metadata: dict = field(default_factory=dict)
    truth: ScanTruth | None = None

    def __post_init__(self):
        n = len(self.reported_d)
        if len(self.intensity) != n or len(self.coincidence) != n:
            raise ValueError("trace channels must share one length")

    @property
    def n_samples(self) -> int:
        return len(self.reported_d)


def scan_sample_count(stage: StageModel, scan_range: tuple[float, float]) -> int:
    start, stop = scan_range
    if stop <= start:
        raise SynthesisError("scan range must have stop > start")
    return int(round((stop - start) / stage.spacing))


def simulate_scan(sample: Sample, spectrum: Spectrum, pump: PumpReference,
                  stage: StageModel, noise: NoiseModel | None,
                  scan_range: tuple[float, float],
                  terms: CoincidenceTerms | None = None,
                  keep_truth: bool = True) -> ScanTrace:
    """Synthesize one scan over [start, stop) of the reported axis.

    Expected per-bin counts are evaluated at the true mirror positions and,
    when noise.poisson_enabled, each bin is an independent Poisson draw.
    noise=None records the raw physical rates with no detector scaling.
    """
    pump.check_degenerate(spectrum)
    start, stop = scan_range
    n = scan_sample_count(stage, scan_range)
    if n < 16:
        raise SynthesisError(f"scan of {n} samples is too short to process")

    margin = MIN_MARGIN_COHERENCE_LENGTHS * spectrum.coherence_length
    z = sample.positions
    if z.min() - start < margin or (stop - stage.spacing) - z.max() < margin:
        raise SynthesisError(
            "scan range must cover every surface with at least "
            f"{MIN_MARGIN_COHERENCE_LENGTHS:g} coherence length of margin; "
            f"got [{start!r}, {stop!r}) for surfaces at {z.tolist()}"
        )
    if sample.min_gap() < MIN_GAP_COHERENCE_LENGTHS * spectrum.coherence_length:
        raise SynthesisError(
            "adjacent surfaces closer than the minimum resolvable gap of "
            f"{MIN_GAP_COHERENCE_LENGTHS:g} coherence lengths"
        )

    if terms is None:
        terms = CoincidenceTerms.from_sample(sample, spectrum)

    reported = stage.reported_grid(n, start)
    true_d = true_positions(stage, n, start)

    expected_i = intensity_rate(sample, spectrum, true_d, noise)
    expected_m = coincidence_rate(sample, spectrum, pump, terms, true_d, noise)
    if expected_i.min() < 0.0 or expected_m.min() < 0.0:
        raise SynthesisError("expected counts went negative; baseline headroom violated")

    if noise is not None and noise.poisson_enabled:
        rng = np.random.default_rng(noise.seed)
        intensity = rng.poisson(expected_i).astype(float)
        coincidence = rng.poisson(expected_m).astype(float)
    else:
        intensity = expected_i.copy()
        coincidence = expected_m.copy()

    truth = None
    if keep_truth:
        parts = coincidence_components(sample, spectrum, pump, terms, true_d)
        truth = ScanTruth(
            true_d=true_d,
            intensity_rate=expected_i,
            coincidence_rate=expected_m,
            pair_carrier=parts["pair_carrier"],
            coincidence_parts=parts,
            terms=terms,
        )

    metadata = {
        "n_samples": n,
        "scan_start": start,
        "scan_stop": stop,
        "spacing": stage.spacing,
        "velocity": stage.velocity,
        "sample_rate": stage.sample_rate,
        "poisson": bool(noise is not None and noise.poisson_enabled),
        "stage_seed": stage.seed,
        "noise_seed": None if noise is None else noise.seed,
    }
    return ScanTrace(
        reported_d=reported,
        intensity=intensity,
        coincidence=coincidence,
        spacing=stage.spacing,
        metadata=metadata,
        truth=truth,
    )
