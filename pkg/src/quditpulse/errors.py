"""Exception types shared across the package.

``ValueError`` subclasses signal bad inputs (CLI exit code 1);
``NumericalError`` subclasses signal runtime numerical failures
(CLI exit code 2).
"""


class NumericalError(RuntimeError):
    """A numerical routine failed (eigensolver or fit non-convergence)."""


class UnderparameterizedError(ValueError):
    """The waveform has fewer free phases than the target class requires."""

    def __init__(self, kind: str, n_phases: int, required: int):
        self.kind = kind
        self.n_phases = n_phases
        self.required = required
        super().__init__(
            f"waveform provides {n_phases} phases but a {kind} target "
            f"requires at least {required}; increase total_time or decrease dt"
        )


class DesignError(NumericalError):
    """Every optimization seed failed; carries the per-seed records."""

    def __init__(self, message: str, per_seed=()):
        self.per_seed = tuple(per_seed)
        super().__init__(message)


class SequenceConstructionError(NumericalError):
    """A benchmark prep or readout map could not be designed."""


class FitError(NumericalError):
    """The decay fit did not converge."""


class FileFormatError(ValueError):
    """A file failed schema or version validation."""
