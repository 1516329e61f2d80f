"""Exception hierarchy shared by every module.

Library code raises these; only the CLI layer turns them into messages and
process exit codes (see ``active_manip.main``).
"""

from typing import Any, Optional


class ActiveManipError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class ConfigError(ActiveManipError):
    """Invalid configuration. Carries every offending key at once."""

    exit_code = 2

    def __init__(self, problems: list[str] | str) -> None:
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(ActiveManipError):
    """Inputs on disk or generated data are inconsistent."""

    exit_code = 3


class GenerationError(DataError):
    """Scene generation could not place an object."""

    def __init__(self, message: str, object_id: Optional[str] = None) -> None:
        self.object_id = object_id
        super().__init__(message)


class RejectionError(DataError):
    """A task instance cannot be bound or viewed; the caller resamples."""

    def __init__(self, message: str, template_id: Optional[str] = None) -> None:
        self.template_id = template_id
        super().__init__(message)


class InfeasiblePerturbationError(RejectionError):
    """No perturbed view satisfied the modality's visibility condition."""


class DegenerateGeometryError(DataError):
    """Geometry without a defined answer (e.g. target at the camera pivot)."""


class DimensionError(DataError, ValueError):
    """Shape mismatch; the message names the offending layer or tensor."""

    def __init__(self, message: str, layer: Optional[str] = None) -> None:
        self.layer = layer
        super().__init__(message)


class NumericalFault(ActiveManipError):
    """NaN/inf detected; ``diagnostics`` holds where it happened."""

    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None) -> None:
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class FreezeViolationError(NumericalFault):
    """A frozen parameter group changed during training."""


class OracleFailure(ActiveManipError):
    """The scripted expert stopped making progress."""
