"""Exception types shared across the package.

The CLI maps these onto its documented exit codes, so raising the right
class is part of the contract, not just diagnostics.
"""


class TaxaError(Exception):
    """Base class for all package errors."""


class ConfigError(TaxaError):
    """Bad or unknown configuration key/value. CLI exit code 2."""


class IOFailure(TaxaError):
    """Filesystem-level failure (missing file, refusing to overwrite). Exit 3."""


class ShapeError(TaxaError):
    """Shape-incompatible operands; message names both shapes."""


class NonFiniteError(TaxaError):
    """An operation produced NaN/Inf; message names the operation."""


class GraphConsumedError(TaxaError):
    """backward() called on a graph that was already freed."""


class MissingLevelError(TaxaError):
    def __init__(self, record_id, level_name):
        super().__init__(f"record {record_id!r}: missing taxonomy level {level_name!r}")
        self.record_id = record_id
        self.level_name = level_name


class DuplicateSpeciesError(TaxaError):
    """Same species name appears under two different ancestries."""


class UnknownPathError(TaxaError):
    """A taxon path not present in the tree. CLI exit code 7."""


class StageOrderError(TaxaError):
    """Progressive stages run or frozen out of order. CLI exit code 4."""


class NonFiniteLossError(TaxaError):
    """Training loss went NaN/Inf; message carries the step. Exit 5."""

    def __init__(self, step, stage):
        super().__init__(f"non-finite loss at stage {stage}, step {step}")
        self.step = step
        self.stage = stage


class CheckpointError(TaxaError):
    """Corrupt header/CRC, unknown version, or shape mismatch on load."""


class UntrainedLevelError(TaxaError):
    """Sampling requested at a level deeper than trained_through. Exit 6."""


class ProbeUnreliableError(TaxaError):
    """Probe classifier below the 3x-chance reliability floor. Exit 8."""
