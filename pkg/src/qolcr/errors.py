"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: configuration and parse problems exit
with 1, quality failures discovered while processing exit with 2, and I/O
errors exit with 3.
"""


class QolcrError(Exception):
    """Base class for everything raised deliberately by this package."""


class ConfigError(QolcrError):
    """Invalid configuration or inconsistent model parameters."""


class SynthesisError(ConfigError):
    """Scan synthesis rejected the requested parameters.

    Raised for a non-monotone stage trajectory or expected count rates
    that would go negative; both indicate a bad configuration, so this
    maps to the validation exit code.
    """


class TraceParseError(QolcrError):
    """A trace, record, or table file could not be parsed."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc += f"line {line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class PipelineQualityError(QolcrError):
    """Signal quality too poor to continue the pipeline."""


class CalibrationQualityError(PipelineQualityError):
    """Calibration carrier too weak, masked, or non-monotone."""


class PeakFitError(PipelineQualityError):
    """Peak fitting failed (non-concave fit or degenerate window)."""


class PeakCountError(PipelineQualityError):
    """Fewer autocorrelation peak clusters found than expected."""
