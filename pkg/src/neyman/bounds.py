"""Closed-form performance guarantees and the hard-instance construction.

Each guarantee pairs a competitive-ratio ceiling with the probability floor
of the event on which it holds.  Floors are clamped at zero and flagged as
vacuous when the raw formula dips below zero, so dashboards can aggregate
them without special cases.  The hard instance is a pair of three-point
distributions on {-1, 0, +1} that no policy can tell apart within the
horizon; its KL divergences admit the closed ceiling 1/(2T).

Natural log everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfiniteKL, OutOfRange, TooSmallT, ZeroVariance
from .tuning import MULTI_STAGE_LOG_MIN_T, TWO_STAGE_LOG_MIN_T

__all__ = [
    "BoundReport",
    "ThreePointDist",
    "two_stage_ratio_bound",
    "multi_stage_ratio_bound",
    "limit_ratio_bound",
    "expectation_ratio_bound",
    "lower_bound_instance",
    "three_point_moments",
    "kl_three_point",
]


@dataclass(frozen=True, slots=True)
class BoundReport:
    """A ratio ceiling, the probability it holds with, and its provenance."""

    ratio_bound: float
    probability_floor: float
    vacuous: bool
    source: str

    def __post_init__(self) -> None:
        if not self.ratio_bound > 1.0:
            raise ValueError(f"ratio_bound must exceed 1, got {self.ratio_bound}")
        if not 0.0 <= self.probability_floor <= 1.0:
            raise ValueError(f"probability_floor out of [0,1]: {self.probability_floor}")

    def to_json_dict(self) -> dict:
        return {
            "ratio_bound": self.ratio_bound,
            "probability_floor": self.probability_floor,
            "vacuous": self.vacuous,
            "source": self.source,
        }


@dataclass(frozen=True, slots=True)
class ThreePointDist:
    """Distribution on the support {-1, 0, +1}."""

    p_neg: float
    p_zero: float
    p_pos: float

    def __post_init__(self) -> None:
        probs = (self.p_neg, self.p_zero, self.p_pos)
        if any(p < 0 for p in probs):
            raise ValueError(f"probabilities must be nonnegative, got {probs}")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {sum(probs)!r}")

    @property
    def probs(self) -> tuple[float, float, float]:
        return (self.p_neg, self.p_zero, self.p_pos)

    def to_json_dict(self) -> dict:
        return {"p_neg": self.p_neg, "p_zero": self.p_zero, "p_pos": self.p_pos}


def _floor_report(raw_floor: float, ratio: float, source: str) -> BoundReport:
    vacuous = raw_floor <= 0.0
    return BoundReport(ratio, max(0.0, raw_floor), vacuous, source)


def two_stage_ratio_bound(
    T: int, eps: float, kappa1: float, kappa0: float
) -> BoundReport:
    """Ceiling 1 + T**(-1/2+eps) with floor 1 - (kappa1+kappa0)*T**(-eps).

    Valid for T >= 16, eps in (0, 1/8), kurtoses above 1.
    """
    if T < 16:
        raise OutOfRange(f"two-stage bound needs T >= 16, got {T}")
    if not 0.0 < eps < 0.125:
        raise OutOfRange(f"eps must lie in (0, 1/8), got {eps}")
    if kappa1 <= 1.0 or kappa0 <= 1.0:
        raise OutOfRange("kurtosis values are always above 1")
    ratio = 1.0 + T ** (-0.5 + eps)
    raw = 1.0 - (kappa1 + kappa0) * T ** (-eps)
    return _floor_report(raw, ratio, "two_stage")


def multi_stage_ratio_bound(
    M: int, T: int, eps: float, kappa1: float, kappa0: float
) -> BoundReport:
    """Ceiling 1 + 4*15**(-1/M)*T**(-(M-1)/M+eps), floor 1-(M-1)(k1+k0)T**-eps.

    Valid for M >= 3, T >= 16, eps in (0, min(1/M, 1/100)].
    """
    if M < 3:
        raise OutOfRange(f"multi-stage bound needs M >= 3, got {M}")
    if T < 16:
        raise OutOfRange(f"multi-stage bound needs T >= 16, got {T}")
    if not 0.0 < eps <= min(1.0 / M, 0.01):
        raise OutOfRange(f"eps must lie in (0, min(1/M, 1/100)], got {eps}")
    if kappa1 <= 1.0 or kappa0 <= 1.0:
        raise OutOfRange("kurtosis values are always above 1")
    ratio = 1.0 + 4.0 * 15.0 ** (-1.0 / M) * T ** (-(M - 1.0) / M + eps)
    raw = 1.0 - (M - 1) * (kappa1 + kappa0) * T ** (-eps)
    return _floor_report(raw, ratio, "multi_stage")


def limit_ratio_bound(T: int) -> float:
    """Information-theoretic floor 1 + 1/(480*T) that no design can beat."""
    if T < 4:
        raise OutOfRange(f"the limit bound needs T >= 4, got {T}")
    return 1.0 + 1.0 / (480.0 * T)


def expectation_ratio_bound(
    which: str, T: int, C: float = 1.0, M: int | None = None
) -> BoundReport:
    """In-expectation ceilings for bounded-support arms (|Y| <= C*sigma).

    which="two_stage":   1 + 5*C**2*T**(-1/2)*(log T)**(1/2)
    which="multi_stage": 1 + 97*(1000/3)**(-1/M)*C**(4(M-1)/M)
                           * T**(-(M-1)/M) * (log T)**((M-1)/M)
    These hold in expectation, so the probability floor is 1.
    """
    if C < 1.0:
        raise OutOfRange(f"C must be at least 1, got {C}")
    if which == "two_stage":
        threshold = TWO_STAGE_LOG_MIN_T * C**5
        if T < threshold:
            raise TooSmallT(f"needs T >= {threshold:.1f}, got {T}")
        ratio = 1.0 + 5.0 * C * C * T**-0.5 * math.log(T) ** 0.5
        return BoundReport(ratio, 1.0, False, "two_stage_expectation")
    if which == "multi_stage":
        if M is None or M < 3:
            raise OutOfRange(f"multi-stage expectation bound needs M >= 3, got {M}")
        threshold = MULTI_STAGE_LOG_MIN_T * C**5
        if T < threshold:
            raise TooSmallT(f"needs T >= {threshold:.1f}, got {T}")
        frac = (M - 1.0) / M
        ratio = 1.0 + 97.0 * (1000.0 / 3.0) ** (-1.0 / M) * C ** (4.0 * frac) * T ** (
            -frac
        ) * math.log(T) ** frac
        return BoundReport(ratio, 1.0, False, "multi_stage_expectation")
    raise OutOfRange(f"unknown expectation bound {which!r}")


def lower_bound_instance(T: int) -> tuple[ThreePointDist, ThreePointDist, float]:
    """The near-indistinguishable pair behind the information-theoretic limit.

    eps = 1/(3*sqrt(T)); the uniform three-point law is paired with
    (1/3+eps/2, 1/3-eps, 1/3+eps/2).  Both are mean zero with variances 2/3
    and 2/3+eps, and both KL divergences are at most (9/2)*eps**2 = 1/(2T).
    """
    if T < 4:
        raise OutOfRange(f"the instance needs T >= 4 so eps <= 1/6, got {T}")
    eps = 1.0 / (3.0 * math.sqrt(T))
    uniform = ThreePointDist(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    tilted = ThreePointDist(1.0 / 3.0 + eps / 2.0, 1.0 / 3.0 - eps, 1.0 / 3.0 + eps / 2.0)
    return uniform, tilted, eps


def three_point_moments(d: ThreePointDist) -> tuple[float, float, float]:
    """(mean, variance, kurtosis) in closed form.

    Kurtosis is the standardized fourth central moment; it is undefined for
    a point mass (ZeroVariance).
    """
    mean = d.p_pos - d.p_neg
    second = d.p_pos + d.p_neg
    variance = second - mean * mean
    fourth = (
        d.p_neg * (-1.0 - mean) ** 4
        + d.p_zero * (0.0 - mean) ** 4
        + d.p_pos * (1.0 - mean) ** 4
    )
    if variance == 0.0:
        raise ZeroVariance("kurtosis undefined for a zero-variance distribution")
    return mean, variance, fourth / (variance * variance)


def three_point_mean_variance(d: ThreePointDist) -> tuple[float, float]:
    """(mean, variance) only; defined even for a point mass."""
    mean = d.p_pos - d.p_neg
    return mean, d.p_pos + d.p_neg - mean * mean


def kl_three_point(a: ThreePointDist, b: ThreePointDist) -> float:
    """sum_i a_i * log(a_i/b_i), with 0*log(0/x) = 0.

    InfiniteKL when `a` has mass on a point where `b` has none.
    """
    total = 0.0
    for pa, pb in zip(a.probs, b.probs):
        if pa == 0.0:
            continue
        if pb == 0.0:
            raise InfiniteKL("first distribution has mass where the second has none")
        total += pa * math.log(pa / pb)
    return total
