"""Closed-form allocation math.

Everything here is a pure function over immutable values: the proxy mean
squared error of a treated/control split, the clairvoyant (standard-deviation
proportional) allocation and its optimal value, the competitive ratio against
that optimum, the plug-in allocation driven by estimated sigmas, and the two
sample statistics (unbiased sample variance, difference in means) the
sequential designs are built on.

Conventions:

* ``sigma**2 / 0`` with ``sigma == 0`` contributes 0 (limit convention), so a
  single-arm allocation under a degenerate arm evaluates finitely.
* When both sigmas are zero the proportional split is defined as half-half.
* All case/threshold comparisons downstream use exact floating point, so no
  epsilons are introduced here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyArm,
    InfiniteVariance,
    TooFewObservations,
    ZeroBenchmark,
)

__all__ = [
    "ArmMoments",
    "Allocation",
    "RealAllocation",
    "round_half_up",
    "proxy_mse",
    "clairvoyant_allocation",
    "integer_clairvoyant",
    "optimal_proxy_mse",
    "competitive_ratio",
    "half_half_ratio",
    "sample_variance",
    "plug_in_allocation",
    "difference_in_means",
]


@dataclass(frozen=True, slots=True)
class ArmMoments:
    """True or estimated standard deviations of the two arms.

    Either sigma may be zero (the worst case for a balanced split sits at a
    degenerate arm), but not negative.
    """

    sigma1: float
    sigma0: float

    def __post_init__(self) -> None:
        for name, value in (("sigma1", self.sigma1), ("sigma0", self.sigma0)):
            if not (value >= 0.0) or math.isinf(value) or math.isnan(value):
                raise ValueError(f"{name} must be a finite nonnegative real, got {value!r}")

    def swapped(self) -> "ArmMoments":
        return ArmMoments(self.sigma0, self.sigma1)


@dataclass(frozen=True, slots=True)
class Allocation:
    """Integer subject counts for the two arms."""

    t1: int
    t0: int

    def __post_init__(self) -> None:
        if self.t1 < 0 or self.t0 < 0:
            raise ValueError(f"counts must be nonnegative, got ({self.t1}, {self.t0})")

    @property
    def total(self) -> int:
        return self.t1 + self.t0


@dataclass(frozen=True, slots=True)
class RealAllocation:
    """Real-valued (pre-rounding) subject counts for the two arms."""

    t1: float
    t0: float

    @property
    def total(self) -> float:
        return self.t1 + self.t0


def round_half_up(x: float) -> int:
    """Round a nonnegative real to the nearest integer, halves up.

    The sequential designs round cumulative targets with this rule; Python's
    built-in round() is half-to-even and must not be used for stage sizes.
    """
    if x < 0:
        raise ValueError(f"round_half_up expects a nonnegative value, got {x!r}")
    return int(math.floor(x + 0.5))


def _per_arm_mse(sigma: float, count: float) -> float:
    if count > 0:
        return sigma * sigma / count
    if sigma == 0.0:
        return 0.0
    raise InfiniteVariance(
        f"arm with sigma={sigma} received zero subjects; proxy MSE is infinite"
    )


def proxy_mse(alloc: Allocation | RealAllocation, moments: ArmMoments) -> float:
    """sigma1^2/t1 + sigma0^2/t0, with 0/0 arms contributing 0.

    Raises InfiniteVariance when an arm with positive sigma has zero count;
    callers that aggregate ratios surface that case as +inf instead.
    """
    return _per_arm_mse(moments.sigma1, alloc.t1) + _per_arm_mse(moments.sigma0, alloc.t0)


def clairvoyant_allocation(moments: ArmMoments, T: int) -> RealAllocation:
    """Split T proportionally to the true standard deviations (real-valued).

    Both sigmas zero falls back to the half-half convention.
    """
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    denom = moments.sigma1 + moments.sigma0
    if denom == 0.0:
        return RealAllocation(T / 2.0, T / 2.0)
    share1 = moments.sigma1 / denom
    return RealAllocation(share1 * T, T - share1 * T)


def plug_in_allocation(sigma_hat: ArmMoments, T: int) -> RealAllocation:
    """Clairvoyant split evaluated at estimated sigmas."""
    return clairvoyant_allocation(sigma_hat, T)


def integer_clairvoyant(moments: ArmMoments, T: int) -> Allocation:
    """Round the clairvoyant split to integers summing to T.

    The treated count is rounded half-up and control takes the complement;
    each arm with positive sigma is then clamped to at least one subject so
    the result always has finite proxy MSE.
    """
    real = clairvoyant_allocation(moments, T)
    t1 = round_half_up(real.t1)
    t1 = min(max(t1, 0), T)
    if moments.sigma1 > 0.0 and t1 == 0:
        t1 = 1
    if moments.sigma0 > 0.0 and t1 == T:
        t1 = T - 1
    return Allocation(t1, T - t1)


def optimal_proxy_mse(moments: ArmMoments, T: int) -> float:
    """(sigma1 + sigma0)^2 / T, the value of the clairvoyant split."""
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    s = moments.sigma1 + moments.sigma0
    return s * s / T


def competitive_ratio(alloc: Allocation | RealAllocation, moments: ArmMoments, T: int) -> float:
    """Realized proxy MSE over the clairvoyant optimum.

    Returns +inf (a value, not an error) when an arm with positive sigma got
    zero subjects, so Monte Carlo aggregation never aborts.  Raises
    ZeroBenchmark when both sigmas are zero (ratio undefined).
    """
    if alloc.t1 + alloc.t0 != T:
        raise ValueError(
            f"allocation ({alloc.t1}, {alloc.t0}) does not sum to the horizon T={T}"
        )
    denom = optimal_proxy_mse(moments, T)
    if denom == 0.0:
        raise ZeroBenchmark("competitive ratio undefined when sigma1 = sigma0 = 0")
    try:
        return proxy_mse(alloc, moments) / denom
    except InfiniteVariance:
        return math.inf


def half_half_ratio(rho: float) -> float:
    """Competitive ratio of the balanced split at sigma ratio rho.

    Equals 2*(rho^2 + 1)/(rho + 1)^2: exactly 1 at rho = 1, exactly 2 at
    rho = 0, and approaching 2 as rho grows.  rho = +inf is accepted as the
    symbolic limit.
    """
    if math.isinf(rho):
        return 2.0
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho!r}")
    return 2.0 * (rho * rho + 1.0) / ((rho + 1.0) * (rho + 1.0))


def sample_variance(values) -> float:
    """Unbiased sample variance (divisor n-1).  Needs n >= 2."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        raise TooFewObservations(
            f"sample variance needs at least two observations, got {arr.size}"
        )
    return float(np.var(arr, ddof=1))


def difference_in_means(treated, control) -> float:
    """mean(treated) - mean(control).  Both samples must be nonempty."""
    t = np.asarray(treated, dtype=np.float64)
    c = np.asarray(control, dtype=np.float64)
    if t.size == 0 or c.size == 0:
        raise EmptyArm("difference in means needs data in both arms")
    return float(np.mean(t) - np.mean(c))
