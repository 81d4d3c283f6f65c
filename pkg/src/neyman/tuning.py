"""Tuning-parameter schedules and their feasibility predicates.

A schedule is the vector of stage multipliers ``beta_1..beta_M`` that place
the cumulative stage boundaries at ``beta_m * T**(m/M)`` (the last multiplier
is pinned to 1 so the final boundary is the horizon itself).  Three closed
forms are provided:

* ``geometric_schedule``   - beta_m = 6 * 15**(-m/M), the default for
  designs with at least three stages;
* ``two_stage_log_beta``   - beta = 4*C**2*sqrt(log T) for bounded-support
  populations (|Y| <= C*sigma), valid once T clears 320**(5/4)*C**5;
* ``multi_stage_log_schedule`` - the bounded-support analogue for M >= 3
  stages, valid once T clears (5000/3)**(5/4)*C**5.

``log`` is the natural log throughout.  Schedules are computed in reals; the
designs module owns rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import BadStageCount, InfeasibleConfig, TooSmallT

__all__ = [
    "Schedule",
    "FeasibilityLink",
    "FeasibilityReport",
    "geometric_schedule",
    "two_stage_log_beta",
    "two_stage_log_schedule",
    "multi_stage_log_schedule",
    "full_betas",
    "feasibility_check",
    "TWO_STAGE_LOG_MIN_T",
    "MULTI_STAGE_LOG_MIN_T",
]

# Horizon thresholds under which the log-family schedules are not certified.
TWO_STAGE_LOG_MIN_T = 320.0 ** 1.25  # times C**5
MULTI_STAGE_LOG_MIN_T = (5000.0 / 3.0) ** 1.25  # times C**5


@dataclass(frozen=True, slots=True)
class Schedule:
    """A named beta vector plus the parameters that generated it."""

    name: str  # "geometric" | "two_stage_log" | "multi_stage_log" | "custom"
    M: int
    betas: tuple[float, ...]
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(b <= 0 for b in self.betas):
            raise ValueError(f"betas must be positive, got {self.betas}")

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "M": self.M,
            "betas": list(self.betas),
            "params": dict(self.params),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Schedule":
        return cls(
            name=str(obj["name"]),
            M=int(obj["M"]),
            betas=tuple(float(b) for b in obj["betas"]),
            params={str(k): float(v) for k, v in obj.get("params", {}).items()},
        )


def geometric_schedule(M: int) -> Schedule:
    """beta_m = 6 * 15**(-m/M) for m < M, beta_M = 1.

    Consecutive stage boundaries then grow by the constant factor
    (T/15)**(1/M), and the chain is feasible for every T >= 16.
    """
    if M < 3:
        raise BadStageCount(f"the geometric schedule needs M >= 3 stages, got {M}")
    betas = tuple(6.0 * 15.0 ** (-m / M) for m in range(1, M)) + (1.0,)
    return Schedule("geometric", M, betas)


def two_stage_log_beta(T: int, C: float = 1.0) -> float:
    """First-stage multiplier 4*C**2*sqrt(log T) for bounded-support arms.

    Requires T >= 320**(5/4)*C**5, which in particular certifies
    beta*sqrt(T) <= T/2 so the second stage is never starved.
    """
    if C < 1.0:
        raise ValueError(f"C must be at least 1, got {C}")
    threshold = TWO_STAGE_LOG_MIN_T * C**5
    if T < threshold:
        raise TooSmallT(f"two-stage log schedule needs T >= {threshold:.1f}, got {T}")
    beta = 4.0 * C * C * math.sqrt(math.log(T))
    if beta * math.sqrt(T) > T / 2.0:
        raise TooSmallT(
            f"beta*sqrt(T) = {beta * math.sqrt(T):.3f} exceeds T/2 at T={T}, C={C}"
        )
    return beta


def two_stage_log_schedule(T: int, C: float = 1.0) -> Schedule:
    return Schedule(
        "two_stage_log", 2, (two_stage_log_beta(T, C),), {"C": C, "T": float(T)}
    )


def multi_stage_log_schedule(M: int, T: int, C: float = 1.0) -> Schedule:
    """beta_m = (400/3)*C**4*log T * ((1000/3)*C**4*log T)**(-m/M), beta_M = 1.

    Requires T >= (5000/3)**(5/4)*C**5; the resulting boundary chain is
    re-checked numerically and reported if ever violated.
    """
    if M < 3:
        raise BadStageCount(f"the multi-stage log schedule needs M >= 3, got {M}")
    if C < 1.0:
        raise ValueError(f"C must be at least 1, got {C}")
    threshold = MULTI_STAGE_LOG_MIN_T * C**5
    if T < threshold:
        raise TooSmallT(f"multi-stage log schedule needs T >= {threshold:.1f}, got {T}")
    log_t = math.log(T)
    lead = (400.0 / 3.0) * C**4 * log_t
    base = (1000.0 / 3.0) * C**4 * log_t
    betas = tuple(lead * base ** (-m / M) for m in range(1, M)) + (1.0,)
    schedule = Schedule("multi_stage_log", M, betas, {"C": C, "T": float(T)})
    report = feasibility_check(schedule, T, M)
    if not report.real_ok:
        raise InfeasibleConfig(report.first_violation or "boundary chain violated")
    return schedule


def full_betas(betas: tuple[float, ...], M: int) -> tuple[float, ...]:
    """Normalize a beta vector to length M with the final entry pinned to 1.

    Accepts length M (final entry must already be 1), length M-1 (the final
    1 is appended), or length 1 for two-stage schedules.
    """
    if M == 2 and len(betas) == 1:
        return (betas[0], 1.0)
    if len(betas) == M:
        if betas[-1] != 1.0:
            raise ValueError(f"the final beta must be 1, got {betas[-1]}")
        return tuple(betas)
    if len(betas) == M - 1:
        return tuple(betas) + (1.0,)
    raise ValueError(f"expected {M} or {M - 1} betas for an {M}-stage design, got {len(betas)}")


@dataclass(frozen=True, slots=True)
class FeasibilityLink:
    name: str
    lhs: float
    rhs: float
    ok: bool


@dataclass(frozen=True, slots=True)
class FeasibilityReport:
    ok: bool
    real_ok: bool
    links: tuple[FeasibilityLink, ...]

    @property
    def first_violation(self) -> str | None:
        for link in self.links:
            if not link.ok:
                return f"{link.name} fails ({link.lhs:.6g} vs {link.rhs:.6g})"
        return None

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "real_ok": self.real_ok,
            "links": [
                {"name": l.name, "lhs": l.lhs, "rhs": l.rhs, "ok": l.ok}
                for l in self.links
            ],
            "first_violation": self.first_violation,
        }


def feasibility_check(
    schedule: Schedule | tuple[float, ...] | list[float],
    T: int,
    M: int,
    min_arm_obs: int = 2,
) -> FeasibilityReport:
    """Verify the strict boundary chain 1 < b_1 < ... < b_{M-1} < T.

    The chain is checked on reals; two rounding-level checks follow so a
    chain that is feasible in reals but collapses under integer stage sizes
    is reported: the rounded stage-1 per-arm size must reach ``min_arm_obs``
    and the balanced boundary before the final stage must leave room for at
    least one more subject.
    """
    betas = schedule.betas if isinstance(schedule, Schedule) else tuple(schedule)
    betas = full_betas(betas, M)
    boundaries = [betas[m - 1] * float(T) ** (m / M) for m in range(1, M)]

    links: list[FeasibilityLink] = []
    if boundaries:
        links.append(FeasibilityLink("1 < b[1]", 1.0, boundaries[0], 1.0 < boundaries[0]))
        for m in range(1, len(boundaries)):
            links.append(
                FeasibilityLink(
                    f"b[{m}] < b[{m + 1}]",
                    boundaries[m - 1],
                    boundaries[m],
                    boundaries[m - 1] < boundaries[m],
                )
            )
        links.append(
            FeasibilityLink(f"b[{M - 1}] < T", boundaries[-1], float(T), boundaries[-1] < T)
        )
    real_ok = all(link.ok for link in links)

    if boundaries:
        stage1 = math.floor(boundaries[0] / 2.0 + 0.5)
        links.append(
            FeasibilityLink(
                f"round(b[1]/2) >= min_arm_obs={min_arm_obs}",
                float(stage1),
                float(min_arm_obs),
                stage1 >= min_arm_obs,
            )
        )
        last_full = 2 * math.floor(boundaries[-1] / 2.0 + 0.5)
        links.append(
            FeasibilityLink(
                "2*round(b[M-1]/2) < T", float(last_full), float(T), last_full < T
            )
        )
    return FeasibilityReport(all(l.ok for l in links), real_ok, tuple(links))
