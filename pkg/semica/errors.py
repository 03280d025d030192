"""Exception hierarchy for semica.

Every error carries the offending values as attributes so callers (and the
CLI) can report them without parsing messages.
"""
from __future__ import annotations

from typing import Sequence


class SemIcaError(Exception):
    """Base class for all semica failures."""

    pass


class ConfigError(SemIcaError, ValueError):
    """Raised when an experiment or option configuration is invalid."""

    pass


class ModelValidationError(SemIcaError, ValueError):
    """Raised when a model cannot be used because it breaks an invariant."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        self.violations = list(violations)
        self.message = message
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message)


class DimensionMismatchError(SemIcaError, ValueError):
    """Raised when array shapes do not agree."""

    def __init__(self, what: str, expected: object, actual: object):
        self.what = what
        self.expected = expected
        self.actual = actual
        self.message = f"{what}: expected {expected}, got {actual}"
        super().__init__(self.message)


class InterventionIndexError(SemIcaError, IndexError):
    """Raised when an intervention target is outside 0..n-1."""

    def __init__(self, index: int, n: int):
        self.index = index
        self.n = n
        self.message = f"Intervention target {index} out of range for {n} variables (valid: 0..{n - 1})"
        super().__init__(self.message)


class GenerationError(SemIcaError):
    """Raised when random model generation exhausts its retries."""

    def __init__(self, attempts: int, last_violations: Sequence[str]):
        self.attempts = attempts
        self.last_violations = list(last_violations)
        self.message = (
            f"Could not generate a valid model after {attempts} attempts. "
            f"Last violations: {'; '.join(self.last_violations) or 'none'}"
        )
        super().__init__(self.message)


class InsufficientSamplesError(SemIcaError, ValueError):
    """Raised when an estimator receives too few samples."""

    def __init__(self, required: int, actual: int):
        self.required = required
        self.actual = actual
        self.message = f"Need at least {required} samples, got {actual}"
        super().__init__(self.message)


class NotCenteredError(SemIcaError, ValueError):
    """Raised when an estimator that expects centered data gets raw data."""

    def __init__(self, mean_norm: float, tolerance: float):
        self.mean_norm = mean_norm
        self.tolerance = tolerance
        self.message = (
            f"Data is not centered: column-mean norm {mean_norm:.3g} exceeds {tolerance:.1g}. "
            f"Call center() first."
        )
        super().__init__(self.message)


class ZeroVarianceError(SemIcaError, ValueError):
    """Raised when a sample vector has no spread."""

    pass


class WhiteningRankError(SemIcaError):
    """Raised when the covariance has fewer than k usable eigenvalues."""

    def __init__(self, k: int, eigenvalue: float, floor: float):
        self.k = k
        self.eigenvalue = eigenvalue
        self.floor = floor
        self.message = (
            f"Cannot whiten to {k} components: eigenvalue #{k} is {eigenvalue:.3g}, "
            f"below the floor {floor:.3g} (signal rank is smaller than {k})"
        )
        super().__init__(self.message)


class DegenerateDirectionError(SemIcaError):
    """Raised when a power step produces a (numerically) zero vector."""

    def __init__(self, norm: float):
        self.norm = norm
        self.message = f"Power step collapsed: contracted vector norm {norm:.3g}"
        super().__init__(self.message)


class MissingInterventionError(SemIcaError, ValueError):
    """Raised when an interventional dataset is required but none is tagged."""

    pass


class CyclicEffectsError(SemIcaError):
    """Raised when detected intervention effects contain a cycle."""

    def __init__(self, cycle: Sequence[int]):
        self.cycle = list(cycle)
        path = " -> ".join(str(node) for node in [*self.cycle, self.cycle[0]]) if self.cycle else "?"
        self.message = f"Intervention effects are cyclic (inconsistent data): {path}"
        super().__init__(self.message)


class AlignmentAmbiguityError(SemIcaError):
    """Raised when two candidate columns are indistinguishable."""

    def __init__(self, first: int, second: int, angle: float):
        self.pair = (first, second)
        self.angle = angle
        self.message = (
            f"Columns {first} and {second} are within {angle:.3g} rad of each other; "
            f"alignment is ambiguous"
        )
        super().__init__(self.message)


class NormalizationError(SemIcaError):
    """Raised when a rank-1 factor cannot be pinned to unit self-effect."""

    def __init__(self, target: int, value: float, floor: float):
        self.target = target
        self.value = value
        self.floor = floor
        self.message = (
            f"Intervention on variable {target} produced no self-column signal "
            f"(|u[{target}]| = {value:.3g} < {floor:.1g})"
        )
        super().__init__(self.message)


class TriangularityError(SemIcaError):
    """Raised when the assembled total-effect matrix is not lower triangular."""

    def __init__(self, entries: Sequence[tuple[int, int, float]], tolerance: float):
        self.entries = list(entries)
        self.tolerance = tolerance
        shown = ", ".join(f"({r}, {c})={v:.3g}" for r, c, v in self.entries[:5])
        self.message = (
            f"{len(self.entries)} entries above the diagonal exceed {tolerance:.1g} "
            f"in causal-order coordinates: {shown}"
        )
        super().__init__(self.message)


class SolverFaultError(SemIcaError):
    """Raised when refinement diverges or produces non-finite values."""

    pass
