"""Exception types shared across the package."""


class GrasslangError(Exception):
    """Base class for all package errors."""


class InputError(GrasslangError, ValueError):
    """Malformed or non-finite input data."""


class DimensionError(GrasslangError, ValueError):
    """Ambient-dimension or shape mismatch between operands."""


class RankError(GrasslangError, ValueError):
    """Requested rank is outside the valid range for the operand."""


class ShortUtteranceError(GrasslangError, ValueError):
    """Utterance has fewer phone vectors than the stacked dimension (K < D)."""


class StochasticityError(InputError):
    """Rows are too far from a probability distribution to repair."""
