"""
Restenosis Core - Error hierarchy.

Every failure surfaced to the CLI or the HTTP API carries a short diagnostic
category; the CLI turns it into an exit code.
"""
from __future__ import annotations

from collections.abc import Sequence


class RestenosisError(Exception):
    category = "ERROR"


class ConfigError(RestenosisError):
    """Invalid scenario configuration. `line` is 1-based when known."""
    category = "CONFIG"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MeshError(RestenosisError):
    category = "MESH"


class ConstitutiveError(RestenosisError):
    category = "CONSTITUTIVE"


class InvertedElementError(RestenosisError):
    category = "INVERTED_ELEMENT"

    def __init__(self, element_id: int | None = None, detail: str = ""):
        self.element_id = None if element_id is None else int(element_id)
        where = "material point" if element_id is None else f"element {self.element_id}"
        msg = f"{where} inverted (det F <= 0)"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class ConvergenceError(RestenosisError):
    category = "CONVERGENCE"

    def __init__(self, message: str, t: float | None = None, residual_history: Sequence[float] = ()):
        self.t = t
        self.residual_history = list(residual_history)
        super().__init__(f"t={t:g} days: {message}" if t is not None else message)


class OutputError(RestenosisError):
    category = "IO"


EXIT_CODES = {
    "CONFIG": 2,
    "MESH": 3,
    "CONSTITUTIVE": 3,
    "CONVERGENCE": 4,
    "INVERTED_ELEMENT": 4,
    "IO": 5,
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, RestenosisError):
        return EXIT_CODES.get(error.category, 1)
    return 1
