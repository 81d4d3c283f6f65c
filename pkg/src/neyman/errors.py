"""Exception hierarchy shared across the toolkit.

Every domain error derives from :class:`NeymanError` so callers (CLI,
service, Monte Carlo harness) can distinguish domain failures from bugs.
"""

from __future__ import annotations


class NeymanError(Exception):
    """Base class for all domain errors raised by this package."""


class InfiniteVariance(NeymanError):
    """An arm with strictly positive sigma received zero subjects."""


class ZeroBenchmark(NeymanError):
    """Competitive ratio is undefined because both sigmas are zero."""


class TooFewObservations(NeymanError):
    """Sample variance needs at least two observations."""


class DegenerateEstimation(TooFewObservations):
    """An arm had fewer than ``min_arm_obs`` observations at an estimation
    point.  Batches count these instead of aborting."""


class EmptyArm(NeymanError):
    """An operation that needs data for both arms received an empty arm."""


class InfeasibleConfig(NeymanError):
    """A design configuration violates its feasibility chain.  The message
    names the first violated link."""


class WrongStage(NeymanError):
    """A stage transition was requested out of order."""


class CountMismatch(NeymanError):
    """Submitted observation counts do not match the pending allocation."""


class IncompleteExperiment(NeymanError):
    """finalize() was called before all subjects were assigned and observed."""


class OutOfRange(NeymanError):
    """An argument violates a closed-form bound's stated hypothesis."""


class TooSmallT(OutOfRange):
    """The horizon is below the threshold required by a schedule or bound."""


class BadStageCount(OutOfRange):
    """The number of stages is outside the schedule's admissible range."""


class ZeroVariance(NeymanError):
    """Kurtosis is undefined for a distribution with zero variance."""


class InfiniteKL(NeymanError):
    """KL divergence is infinite: the first argument puts mass where the
    second has none."""


class UnknownLemma(NeymanError):
    """lemma_grid_check received an id it does not know."""


class MismatchedHorizon(NeymanError):
    """Designs compared under common random numbers must share T."""


class ParseError(NeymanError):
    """CSV ingestion failed; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
