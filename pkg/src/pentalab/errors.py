"""Exception hierarchy.

Errors fall into three families that the CLI maps onto distinct exit codes:
contract violations (bad input), numerical failures (degenerate geometry,
divergence) and structural mismatches (an internal convention is broken).
"""

from __future__ import annotations


class PentalabError(Exception):
    """Base class for all library errors."""


class ContractViolation(PentalabError, ValueError):
    """A precondition of an operation does not hold."""


class NumericalFailure(PentalabError):
    """The mathematics degenerates at this input."""


class StructuralMismatch(PentalabError):
    """An output violates a structure that must hold by construction."""


class DegenerateConfiguration(NumericalFailure):
    def __init__(self, message: str = "degenerate configuration", index=None):
        self.index = index
        if index is not None:
            message = f"{message} (at index {index})"
        super().__init__(message)


class NotNormalized(NumericalFailure):
    """A vertex chain is inconsistent with its monodromy or its unit windows."""


class NoLift(ContractViolation):
    """gcd(n, d+1) != 1, so a unimodular lift is not unique."""


class IrrationalNormalization(NumericalFailure):
    """The unit lift needs a root that is not rational."""


class GenerationFailed(NumericalFailure):
    pass


class NormalizationPole(NumericalFailure):
    """An eigenvector has component sum zero, so it cannot be normalized."""


class RepeatedSpectrum(NumericalFailure):
    pass


class Diverged(NumericalFailure):
    def __init__(self, step: int, norm: float):
        self.step = step
        self.norm = norm
        super().__init__(f"flow diverged at step {step} (max |u| = {norm:.3e})")


class IntegrationFailure(NumericalFailure):
    pass


class IllConditioned(NumericalFailure):
    pass
