"""Experiment-data ingestion and bootstrap population construction.

The expected CSV layout is one experiment per row with the header
``arm,impressions,clicks``; rows are normalized to clicks per million
impressions and partitioned by arm.  A moment-matched synthetic generator
stands in for the upstream dataset so the repo carries no third-party data:
it draws a lognormal shape and affinely adjusts each arm to hit the
published mean and standard deviation exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyArm, ParseError
from .montecarlo import EmpiricalPopulation

__all__ = [
    "TABLE1_TREATED_MEAN",
    "TABLE1_TREATED_STD",
    "TABLE1_CONTROL_MEAN",
    "TABLE1_CONTROL_STD",
    "ArmSummary",
    "SummaryStats",
    "ingest_csv",
    "summarize",
    "bootstrap_population",
    "synthetic_table1",
    "table1_population",
    "arrays_to_json_dict",
    "arrays_from_json_dict",
]

# Published clicks-per-million summary moments the synthetic generator hits.
TABLE1_TREATED_MEAN = 34176.0
TABLE1_TREATED_STD = 12256.0
TABLE1_CONTROL_MEAN = 53618.0
TABLE1_CONTROL_STD = 24850.0

PER_MILLION = 1_000_000.0


@dataclass(frozen=True, slots=True)
class ArmSummary:
    mean: float
    stdev: float
    min: float
    median: float
    max: float

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stdev": self.stdev,
            "min": self.min,
            "median": self.median,
            "max": self.max,
        }


@dataclass(frozen=True, slots=True)
class SummaryStats:
    treated: ArmSummary
    control: ArmSummary

    def to_json_dict(self) -> dict:
        return {"treated": self.treated.to_json_dict(), "control": self.control.to_json_dict()}


def ingest_csv(source) -> tuple[np.ndarray, np.ndarray]:
    """Parse `arm,impressions,clicks` rows into per-arm clicks-per-million.

    `source` may be a path or an open text stream.  Parse failures carry the
    1-based line number; either arm ending up empty is an error.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", newline="") as handle:
            return ingest_csv(handle)
    if isinstance(source, (bytes, bytearray)):
        return ingest_csv(io.StringIO(source.decode("utf-8")))

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty input") from None
    expected = ["arm", "impressions", "clicks"]
    if [h.strip().lower() for h in header] != expected:
        raise ParseError(1, f"expected header {','.join(expected)!r}, got {header!r}")

    treated: list[float] = []
    control: list[float] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise ParseError(line_no, f"expected 3 columns, got {len(row)}")
        arm = row[0].strip().lower()
        if arm not in ("treated", "control"):
            raise ParseError(line_no, f"arm must be treated or control, got {row[0]!r}")
        try:
            impressions = int(row[1])
            clicks = int(row[2])
        except ValueError:
            raise ParseError(line_no, f"impressions/clicks must be integers, got {row[1:]!r}") from None
        if impressions <= 0:
            raise ParseError(line_no, f"impressions must be positive, got {impressions}")
        if clicks < 0:
            raise ParseError(line_no, f"clicks must be nonnegative, got {clicks}")
        if clicks > impressions:
            raise ParseError(line_no, f"clicks ({clicks}) exceed impressions ({impressions})")
        value = clicks / impressions * PER_MILLION
        (treated if arm == "treated" else control).append(value)

    if not treated:
        raise EmptyArm("no treated rows in input")
    if not control:
        raise EmptyArm("no control rows in input")
    return np.asarray(treated, dtype=np.float64), np.asarray(control, dtype=np.float64)


def _summarize_arm(values: np.ndarray) -> ArmSummary:
    if values.size == 0:
        raise EmptyArm("cannot summarize an empty arm")
    stdev = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return ArmSummary(
        mean=float(np.mean(values)),
        stdev=stdev,
        min=float(np.min(values)),
        median=float(np.median(values)),
        max=float(np.max(values)),
    )


def summarize(treated: np.ndarray, control: np.ndarray) -> SummaryStats:
    return SummaryStats(_summarize_arm(np.asarray(treated, dtype=np.float64)),
                        _summarize_arm(np.asarray(control, dtype=np.float64)))


def bootstrap_population(treated, control, name: str = "bootstrap") -> EmpiricalPopulation:
    """Resampling population whose truth is the arrays' own plug-in moments."""
    t = np.asarray(treated, dtype=np.float64)
    c = np.asarray(control, dtype=np.float64)
    if t.size == 0 or c.size == 0:
        raise EmptyArm("bootstrap population needs nonempty arrays for both arms")
    return EmpiricalPopulation(treated=t, control=c, name=name)


def _moment_matched(
    rng: np.random.Generator, n: int, mean: float, stdev: float
) -> np.ndarray:
    """Lognormal-shaped positive draws with exact sample mean and stdev.

    The lognormal shape parameter matches the target coefficient of
    variation, so the affinely standardized sample stays positive except in
    rare draws, which are rejected and redrawn.
    """
    cv = stdev / mean
    shape = float(np.sqrt(np.log1p(cv * cv)))
    for _ in range(1000):
        x = rng.lognormal(mean=0.0, sigma=shape, size=n)
        sd = np.std(x, ddof=1)
        if sd == 0.0:
            continue
        y = mean + stdev * (x - np.mean(x)) / sd
        if np.all(y > 0.0):
            return y
    raise RuntimeError("failed to draw a positive moment-matched sample")


def synthetic_table1(n_per_arm: int = 40, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic clicks-per-million arrays hitting the published moments.

    Sample mean/stdev match per arm to float precision, so the implied
    average effect is exactly the published one.
    """
    if n_per_arm < 2:
        raise ValueError(f"need at least 2 values per arm, got {n_per_arm}")
    rng = np.random.default_rng(seed)
    treated = _moment_matched(rng, n_per_arm, TABLE1_TREATED_MEAN, TABLE1_TREATED_STD)
    control = _moment_matched(rng, n_per_arm, TABLE1_CONTROL_MEAN, TABLE1_CONTROL_STD)
    return treated, control


def table1_population(n_per_arm: int = 40, seed: int = 0) -> EmpiricalPopulation:
    treated, control = synthetic_table1(n_per_arm, seed)
    return bootstrap_population(treated, control, name="table1")


def arrays_to_json_dict(treated, control) -> dict:
    return {
        "treated": [float(x) for x in np.asarray(treated, dtype=np.float64)],
        "control": [float(x) for x in np.asarray(control, dtype=np.float64)],
    }


def arrays_from_json_dict(obj: dict) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.asarray(obj["treated"], dtype=np.float64),
        np.asarray(obj["control"], dtype=np.float64),
    )
