"""Exception types shared across the package."""

import os

DEFAULT_BUDGET = 10**7


class FractalError(Exception):
    """Base class for all package errors."""


class ValidationError(FractalError, ValueError):
    """A system, weight set or config violates a declared invariant."""


class ResolutionExceeded(FractalError):
    """A sequence was asked for more symbols than it can resolve."""


class SymbolOutOfAlphabet(FractalError, ValueError):
    pass


class ZeroWeight(FractalError):
    """p_i vanishes at the evaluation point, so log p_i = -inf."""


class TailUncertified(FractalError):
    pass


class CombinatorialBlowup(FractalError):
    pass


class NoConvergence(FractalError):
    pass


class EmptyBall(FractalError):
    pass


class NonHyperbolic(FractalError, ValueError):
    pass


class UnfoldTimeout(FractalError):
    pass


class ZeroMarginal(FractalError):
    pass


def budget():
    """Cylinder-evaluation budget, overridable through FRACTALDIM_BUDGET."""
    raw = os.environ.get("FRACTALDIM_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    return int(float(raw))


def check_budget(count, what="cylinder evaluations"):
    limit = budget()
    if count > limit:
        raise CombinatorialBlowup(f"{what}: {count} exceeds budget {limit}")
