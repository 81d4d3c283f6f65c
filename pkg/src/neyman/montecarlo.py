"""Deterministic Monte Carlo harness for the sequential designs.

Each trajectory draws two length-T potential-outcome arrays from a stream
derived injectively from (master_seed, trajectory index) via the Philox
counter-based generator; the design then reads prefixes of those arrays as
it assigns subjects.  Because the arrays depend only on (master_seed,
index, population), different designs evaluated at the same index consume
identical outcomes: comparisons ride on common random numbers.

Batches are reproducible for any worker count: every trajectory owns its
stream, and summaries are computed once from the results assembled in index
order.
"""

from __future__ import annotations

import hashlib
import math
import multiprocessing
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .bounds import ThreePointDist, three_point_mean_variance
from .core import Allocation, ArmMoments, competitive_ratio
from .designs import DesignConfig, advance, finalize, init_design
from .errors import DegenerateEstimation, MismatchedHorizon

__all__ = [
    "Population",
    "GaussianPopulation",
    "ThreePointPopulation",
    "ScaledBoundedPopulation",
    "EmpiricalPopulation",
    "population_from_json_dict",
    "trajectory_rng",
    "TrajectoryResult",
    "BatchSummary",
    "run_trajectory",
    "run_batch",
    "compare_designs",
    "bound_violation_rate",
]

_MASK64 = (1 << 64) - 1


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Philox stream keyed by the (master_seed, index) pair.

    Philox is counter-based, so distinct keys give independent streams and
    the (arm, position) draws within a trajectory occupy distinct counter
    states: the derivation is injective in (seed, index, arm, position).
    """
    if index < 0:
        raise ValueError(f"trajectory index must be nonnegative, got {index}")
    key = np.array([master_seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# -- populations --------------------------------------------------------------


class Population:
    """A super-population handing out iid potential-outcome pairs.

    Subclasses implement sample(); the treated array is always drawn before
    the control array so streams are reproducible.
    """

    kind = "abstract"

    def sample(self, T: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def moments(self) -> ArmMoments:
        raise NotImplementedError

    def tau(self) -> float:
        raise NotImplementedError

    def label(self) -> str:
        return self.kind

    def to_json_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, slots=True)
class GaussianPopulation(Population):
    sigma1: float
    sigma0: float
    mean1: float = 0.0
    mean0: float = 0.0

    kind = "gaussian"

    def sample(self, T, rng):
        y1 = rng.standard_normal(T) * self.sigma1 + self.mean1
        y0 = rng.standard_normal(T) * self.sigma0 + self.mean0
        return y1, y0

    def moments(self):
        return ArmMoments(self.sigma1, self.sigma0)

    def tau(self):
        return self.mean1 - self.mean0

    def label(self):
        return f"gaussian(s1={self.sigma1:g},s0={self.sigma0:g})"

    def to_json_dict(self):
        return {
            "kind": "gaussian",
            "sigma1": self.sigma1,
            "sigma0": self.sigma0,
            "mean1": self.mean1,
            "mean0": self.mean0,
        }


_SUPPORT = np.array([-1.0, 0.0, 1.0])


def _three_point_draw(dist: ThreePointDist, T: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(T)
    idx = (u >= dist.p_neg).astype(np.int64) + (u >= dist.p_neg + dist.p_zero)
    return _SUPPORT[idx]


@dataclass(frozen=True, slots=True)
class ThreePointPopulation(Population):
    dist1: ThreePointDist
    dist0: ThreePointDist

    kind = "three_point"

    def sample(self, T, rng):
        return _three_point_draw(self.dist1, T, rng), _three_point_draw(self.dist0, T, rng)

    def moments(self):
        _, v1 = three_point_mean_variance(self.dist1)
        _, v0 = three_point_mean_variance(self.dist0)
        return ArmMoments(math.sqrt(v1), math.sqrt(v0))

    def tau(self):
        m1, _ = three_point_mean_variance(self.dist1)
        m0, _ = three_point_mean_variance(self.dist0)
        return m1 - m0

    def label(self):
        return f"three_point(p1={self.dist1.p_pos:g},p0={self.dist0.p_pos:g})"

    def to_json_dict(self):
        return {
            "kind": "three_point",
            "dist1": self.dist1.to_json_dict(),
            "dist0": self.dist0.to_json_dict(),
        }


@dataclass(frozen=True, slots=True)
class ScaledBoundedPopulation(Population):
    """Symmetric three-point draws scaled per arm: |Y(w)| <= C*sigma(w).

    With mass p on each of +/-scale and 1-2p at zero, sigma(w) is
    scale_w*sqrt(2p) and the bounded-support constant is C = 1/sqrt(2p),
    shared by both arms.
    """

    p: float
    scale1: float = 1.0
    scale0: float = 1.0

    kind = "scaled_bounded"

    def __post_init__(self):
        if not 0.0 < self.p <= 0.5:
            raise ValueError(f"p must lie in (0, 1/2], got {self.p}")
        if self.scale1 <= 0 or self.scale0 <= 0:
            raise ValueError("scales must be positive")

    @property
    def C(self) -> float:
        return 1.0 / math.sqrt(2.0 * self.p)

    def sample(self, T, rng):
        dist = ThreePointDist(self.p, 1.0 - 2.0 * self.p, self.p)
        y1 = _three_point_draw(dist, T, rng) * self.scale1
        y0 = _three_point_draw(dist, T, rng) * self.scale0
        return y1, y0

    def moments(self):
        s = math.sqrt(2.0 * self.p)
        return ArmMoments(self.scale1 * s, self.scale0 * s)

    def tau(self):
        return 0.0

    def label(self):
        return f"scaled_bounded(p={self.p:g},s1={self.scale1:g},s0={self.scale0:g})"

    def to_json_dict(self):
        return {
            "kind": "scaled_bounded",
            "p": self.p,
            "scale1": self.scale1,
            "scale0": self.scale0,
        }


@dataclass(frozen=True, slots=True, eq=False)
class EmpiricalPopulation(Population):
    """Uniform-with-replacement resampling of two source arrays.

    The population's "true" moments are the source arrays' plug-in values
    (divisor n-1): those are exactly the parameters of the resampling law.
    """

    treated: np.ndarray
    control: np.ndarray
    name: str = "empirical"

    kind = "empirical"

    def __post_init__(self):
        if len(self.treated) == 0 or len(self.control) == 0:
            raise ValueError("empirical population needs nonempty source arrays")

    def sample(self, T, rng):
        y1 = self.treated[rng.integers(0, len(self.treated), size=T)]
        y0 = self.control[rng.integers(0, len(self.control), size=T)]
        return y1, y0

    def moments(self):
        s1 = float(np.std(self.treated, ddof=1)) if len(self.treated) > 1 else 0.0
        s0 = float(np.std(self.control, ddof=1)) if len(self.control) > 1 else 0.0
        return ArmMoments(s1, s0)

    def tau(self):
        return float(np.mean(self.treated) - np.mean(self.control))

    def label(self):
        return self.name

    def to_json_dict(self):
        return {
            "kind": "empirical",
            "treated": [float(x) for x in self.treated],
            "control": [float(x) for x in self.control],
            "name": self.name,
        }


def population_from_json_dict(obj: dict) -> Population:
    kind = obj.get("kind")
    if kind == "gaussian":
        return GaussianPopulation(
            sigma1=float(obj["sigma1"]),
            sigma0=float(obj["sigma0"]),
            mean1=float(obj.get("mean1", 0.0)),
            mean0=float(obj.get("mean0", 0.0)),
        )
    if kind == "three_point":
        d1 = obj["dist1"]
        d0 = obj["dist0"]
        return ThreePointPopulation(
            ThreePointDist(d1["p_neg"], d1["p_zero"], d1["p_pos"]),
            ThreePointDist(d0["p_neg"], d0["p_zero"], d0["p_pos"]),
        )
    if kind == "scaled_bounded":
        return ScaledBoundedPopulation(
            p=float(obj["p"]),
            scale1=float(obj.get("scale1", 1.0)),
            scale0=float(obj.get("scale0", 1.0)),
        )
    if kind == "empirical":
        return EmpiricalPopulation(
            treated=np.asarray(obj["treated"], dtype=np.float64),
            control=np.asarray(obj["control"], dtype=np.float64),
            name=str(obj.get("name", "empirical")),
        )
    raise ValueError(f"unknown population kind {kind!r}")


# -- trajectories -------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TrajectoryResult:
    totals: Allocation
    tau_hat: float
    proxy_ratio: float
    case_path: tuple[str, ...]
    seed_index: int
    degenerate: bool = False
    outcome_digest: str | None = None


def run_trajectory(
    design: DesignConfig,
    pop: Population,
    master_seed: int,
    index: int,
    keep_digest: bool = False,
) -> TrajectoryResult:
    """Simulate one experiment; bit-identical for identical inputs."""
    T = design.horizon_T
    rng = trajectory_rng(master_seed, index)
    y1, y0 = pop.sample(T, rng)
    digest = None
    if keep_digest:
        digest = hashlib.sha256(y1.tobytes() + y0.tobytes()).hexdigest()

    state, _ = init_design(design)
    used1 = 0
    used0 = 0
    try:
        while not state.done:
            alloc = state.pending
            o1 = y1[used1 : used1 + alloc.t1]
            o0 = y0[used0 : used0 + alloc.t0]
            used1 += alloc.t1
            used0 += alloc.t0
            advance(state, o1, o0)
    except DegenerateEstimation:
        return TrajectoryResult(
            state.cumulative,
            math.nan,
            math.nan,
            tuple(state.case_path),
            index,
            degenerate=True,
            outcome_digest=digest,
        )

    totals, tau_hat = finalize(state)
    moments = pop.moments()
    if moments.sigma1 + moments.sigma0 == 0.0:
        ratio = math.nan  # degenerate population: the benchmark is zero
    else:
        ratio = competitive_ratio(totals, moments, T)
    return TrajectoryResult(
        totals, tau_hat, ratio, tuple(state.case_path), index, False, digest
    )


@dataclass(slots=True)
class BatchSummary:
    """Order-independent aggregate of a batch of trajectories.

    Retains the per-trajectory tau and ratio samples (in index order) so
    quantiles and violation rates stay exact under any chunking.
    """

    design_label: str
    horizon_T: int
    n_trajectories: int
    n_degenerate: int
    mean_ratio: float
    ratio_quantiles: dict[int, float]
    mean_tau_hat: float
    var_tau_hat: float
    var_tau_hat_se: float
    case_path_counts: dict[str, int]
    tau_hats: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)

    @classmethod
    def from_samples(
        cls,
        design_label: str,
        horizon_T: int,
        tau_hats: np.ndarray,
        ratios: np.ndarray,
        case_counts: Counter,
        n_degenerate: int,
    ) -> "BatchSummary":
        valid_tau = tau_hats[~np.isnan(tau_hats)]
        valid_ratio = ratios[~np.isnan(ratios)]
        n = len(tau_hats)
        if valid_ratio.size:
            mean_ratio = float(np.mean(valid_ratio))
            quantiles = {
                q: float(np.quantile(valid_ratio, q / 100.0)) for q in (50, 95, 99)
            }
        else:
            mean_ratio = math.nan
            quantiles = {50: math.nan, 95: math.nan, 99: math.nan}
        if valid_tau.size >= 2:
            mean_tau = float(np.mean(valid_tau))
            var_tau = float(np.var(valid_tau, ddof=1))
            # SE of the sample variance from the sample's own fourth moment.
            m = valid_tau.size
            mu4 = float(np.mean((valid_tau - mean_tau) ** 4))
            var_of_var = (mu4 - var_tau**2 * (m - 3) / (m - 1)) / m
            var_se = math.sqrt(max(var_of_var, 0.0))
        else:
            mean_tau = float(valid_tau[0]) if valid_tau.size else math.nan
            var_tau = math.nan
            var_se = math.nan
        return cls(
            design_label=design_label,
            horizon_T=horizon_T,
            n_trajectories=n,
            n_degenerate=n_degenerate,
            mean_ratio=mean_ratio,
            ratio_quantiles=quantiles,
            mean_tau_hat=mean_tau,
            var_tau_hat=var_tau,
            var_tau_hat_se=var_se,
            case_path_counts=dict(case_counts),
            tau_hats=tau_hats,
            ratios=ratios,
        )

    @property
    def tau_hat_se(self) -> float:
        if self.n_trajectories < 2 or math.isnan(self.var_tau_hat):
            return math.nan
        return math.sqrt(self.var_tau_hat / self.n_trajectories)

    def to_json_dict(self) -> dict:
        return {
            "design": self.design_label,
            "T": self.horizon_T,
            "n": self.n_trajectories,
            "n_degenerate": self.n_degenerate,
            "mean_ratio": self.mean_ratio,
            "p50_ratio": self.ratio_quantiles[50],
            "p95_ratio": self.ratio_quantiles[95],
            "p99_ratio": self.ratio_quantiles[99],
            "mean_tau_hat": self.mean_tau_hat,
            "tau_hat_se": self.tau_hat_se,
            "var_tau_hat": self.var_tau_hat,
            "var_tau_hat_se": self.var_tau_hat_se,
            "case_path_counts": dict(sorted(self.case_path_counts.items())),
        }


def _run_range(args) -> tuple[int, np.ndarray, np.ndarray, Counter, int]:
    design, pop, master_seed, start, stop = args
    count = stop - start
    taus = np.empty(count, dtype=np.float64)
    ratios = np.empty(count, dtype=np.float64)
    cases: Counter = Counter()
    degenerate = 0
    for offset in range(count):
        result = run_trajectory(design, pop, master_seed, start + offset)
        taus[offset] = result.tau_hat
        ratios[offset] = result.proxy_ratio
        cases[">".join(result.case_path)] += 1
        if result.degenerate:
            degenerate += 1
    return start, taus, ratios, cases, degenerate


def run_batch(
    design: DesignConfig,
    pop: Population,
    master_seed: int,
    n: int,
    workers: int = 1,
) -> BatchSummary:
    """n trajectories at indices 0..n-1; identical for any worker count."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if workers <= 1 or n < 4:
        chunks = [_run_range((design, pop, master_seed, 0, n))]
    else:
        step = -(-n // workers)
        jobs = [
            (design, pop, master_seed, lo, min(lo + step, n))
            for lo in range(0, n, step)
        ]
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            chunks = pool.map(_run_range, jobs)
    chunks.sort(key=lambda c: c[0])
    taus = np.concatenate([c[1] for c in chunks])
    ratios = np.concatenate([c[2] for c in chunks])
    cases: Counter = Counter()
    degenerate = 0
    for c in chunks:
        cases.update(c[3])
        degenerate += c[4]
    return BatchSummary.from_samples(
        design.label(), design.horizon_T, taus, ratios, cases, degenerate
    )


def compare_designs(
    designs: list[DesignConfig],
    pop: Population,
    master_seed: int,
    n: int,
    workers: int = 1,
) -> dict[DesignConfig, BatchSummary]:
    """Run several designs over the same trajectory indices.

    All designs must share the horizon; trajectory index i sees identical
    potential-outcome arrays under every design (common random numbers).
    """
    if not designs:
        raise ValueError("no designs to compare")
    horizon = designs[0].horizon_T
    for d in designs:
        if d.horizon_T != horizon:
            raise MismatchedHorizon(
                f"designs share T for coupled comparison; got {d.horizon_T} != {horizon}"
            )
    return {d: run_batch(d, pop, master_seed, n, workers) for d in designs}


def bound_violation_rate(batch: BatchSummary, bound: float) -> float:
    """Fraction of trajectories whose realized ratio exceeds `bound`."""
    valid = batch.ratios[~np.isnan(batch.ratios)]
    if valid.size == 0:
        return math.nan
    return float(np.mean(valid > bound))
