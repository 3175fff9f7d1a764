"""Exception types shared across the package."""


class ChainLabError(Exception):
    """Base class for all chainlab errors."""


class NonConvergedQuadrature(ChainLabError):
    """Adaptive quadrature failed to meet its tolerance within budget."""


class OutOfRange(ChainLabError):
    """Requested value cannot be bracketed even after grid extension."""


class EnvelopeFailure(ChainLabError):
    """Rejection-sampling envelope failed the dominance check."""


class BlowUp(ChainLabError):
    """A state entry left the admissible range (|x| > 1e8 or non-finite)."""


class IndexOutOfRange(ChainLabError, IndexError):
    """Block-average index outside the valid window."""


class ConstraintViolation(ChainLabError):
    """Test function violates its boundary-trace constraint."""


class PairInvalid(ChainLabError):
    """Entropy/flux pair fails the compatibility relations."""


class ConfigInvalid(ChainLabError):
    """Experiment configuration failed validation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
