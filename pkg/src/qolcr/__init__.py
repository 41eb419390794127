"""Quantum-calibrated optical low-coherence reflectometry toolkit.

Simulates intensity and photon-coincidence interferometer scans of layered
samples, self-calibrates the scan axis against the pump wavelength using the
constant-amplitude two-photon-interference carrier, and recovers absolute
surface separations from the autocorrelation of the calibrated intensity.
"""

from qolcr.config import RunConfig, default_config, load_config, parse_config
from qolcr.experiments import (
    linearity_experiment,
    repeatability_experiment,
    run_pipeline,
)
from qolcr.model import (
    SPEED_OF_LIGHT,
    PumpReference,
    Sample,
    Spectrum,
    Surface,
)

__all__ = [
    "SPEED_OF_LIGHT",
    "PumpReference",
    "RunConfig",
    "Sample",
    "Spectrum",
    "Surface",
    "default_config",
    "linearity_experiment",
    "load_config",
    "parse_config",
    "repeatability_experiment",
    "run_pipeline",
]

__version__ = "0.1.0"
