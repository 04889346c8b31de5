"""
Exceptions raised by the DFK pipeline.

Management commands map each class to its own exit code.
"""


class DfkError(Exception):
    """Base class for pipeline failures."""


class DivergenceError(DfkError):
    """A simulated trajectory left the finite range."""

    def __init__(self, step: int, time: float = None, value: float = None, message: str = None):
        self.step = step
        self.time = time
        self.value = value
        text = message or f"Trajectory diverged at step {step}"
        if time is not None:
            text += f" (t = {time:.6g} s)"
        if value is not None:
            text += f", |x| = {value:.3g}"
        super().__init__(text)


class InfeasibleDesignError(DfkError):
    """The design program has no solution for the chosen priors."""

    def __init__(self, status: str, message: str = '', hint: str = None):
        self.status = status
        self.hint = hint or (
            "Increase the noise bound delta or the residue budget lambda2_s "
            "(safety margin) and design again."
        )
        super().__init__(f"Design program {status}: {message}. {self.hint}".strip())


class EstimationError(DfkError):
    """A prior bound cannot be estimated from the dataset."""


class DatasetFormatError(DfkError):
    """An artifact file cannot be parsed."""
