"""Sequential design state machines.

Three designs share one driver:

* half-half      - a single completely randomized stage with a balanced split
                   (the assumption-free benchmark);
* two-stage      - a balanced pilot of size beta*sqrt(T), then one plug-in
                   stage that steers the grand totals to the estimated
                   standard-deviation shares, or hands the remainder to a
                   single arm when the pilot already overshot the other one;
* multi-stage    - M stages with cumulative boundaries beta_m * T**(m/M).
                   At the end of each stage the pooled sample variances are
                   re-estimated and one of five cases fires: freeze an arm
                   whose estimated share is already covered (Case1/Case5),
                   give it one tapering stage and then freeze (Case2/Case4),
                   or keep a balanced stage (Case3).  The final stage steers
                   to the estimated shares if neither arm froze.

Rounding rule: each arm carries a real cumulative target; a stage's integer
size is round-half-up(target) minus what was already assigned, and the final
stage takes the exact complement so the grand total is always T.  If a stage
size would round negative near a case boundary it is clamped to zero and the
deficit moves to the other arm within the same stage (flagged on the
allocation).

Case thresholds are compared in exact floating point; the pseudo-ordering of
the cases and their strict/weak inequalities follow the stage boundaries
verbatim.  A `DesignState` is a single-owner mutable session; all randomness
flows through explicitly passed generators.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Allocation,
    difference_in_means,
    round_half_up,
)
from .errors import (
    CountMismatch,
    DegenerateEstimation,
    IncompleteExperiment,
    InfeasibleConfig,
    WrongStage,
)
from .tuning import feasibility_check, full_betas

__all__ = [
    "INIT",
    "CASE1",
    "CASE2",
    "CASE3",
    "CASE4",
    "CASE5",
    "LAST_CASE1",
    "LAST_CASE2",
    "LAST_CASE3",
    "PLUGIN_2STAGE",
    "ALL_TREATED",
    "ALL_CONTROL",
    "TREATED",
    "CONTROL",
    "DesignConfig",
    "StageAllocation",
    "DesignState",
    "half_half_config",
    "two_stage_config",
    "multi_stage_config",
    "init_design",
    "init_half_half",
    "init_two_stage",
    "init_multi_stage",
    "advance",
    "next_two_stage",
    "next_multi_stage",
    "preview_next",
    "preview_init",
    "randomize_stage",
    "finalize",
    "state_to_snapshot",
    "state_from_snapshot",
]

# Case labels recorded on stage allocations and in the decision path.
INIT = "Init"
CASE1 = "Case1"
CASE2 = "Case2"
CASE3 = "Case3"
CASE4 = "Case4"
CASE5 = "Case5"
LAST_CASE1 = "LastCase1"
LAST_CASE2 = "LastCase2"
LAST_CASE3 = "LastCase3"
PLUGIN_2STAGE = "Plugin2Stage"
ALL_TREATED = "AllTreated"
ALL_CONTROL = "AllControl"

TREATED = "treated"
CONTROL = "control"

KINDS = ("half_half", "two_stage", "multi_stage")


@dataclass(frozen=True, slots=True)
class DesignConfig:
    """Immutable description of a design: kind, horizon, stages, betas."""

    kind: str
    horizon_T: int
    num_stages_M: int
    betas: tuple[float, ...]
    min_arm_obs: int = 2

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.horizon_T < 1:
            raise ValueError(f"horizon_T must be positive, got {self.horizon_T}")
        if self.min_arm_obs < 1:
            raise ValueError(f"min_arm_obs must be positive, got {self.min_arm_obs}")
        expected_m = {"half_half": 1, "two_stage": 2}.get(self.kind)
        if expected_m is not None and self.num_stages_M != expected_m:
            raise ValueError(f"{self.kind} design requires M={expected_m}")
        if self.kind == "multi_stage" and self.num_stages_M < 3:
            raise ValueError("multi_stage design requires M >= 3; use two_stage for M=2")
        if len(self.betas) != self.num_stages_M:
            raise ValueError(
                f"betas must have length M={self.num_stages_M}, got {len(self.betas)}"
            )
        if self.betas[-1] != 1.0:
            raise ValueError(f"the final beta must be 1, got {self.betas[-1]}")
        if any(b <= 0 for b in self.betas):
            raise ValueError(f"betas must be positive, got {self.betas}")

    def boundary(self, m: int) -> float:
        """Cumulative stage boundary b_m = beta_m * T**(m/M); b_M is exactly T."""
        if m == self.num_stages_M:
            return float(self.horizon_T)
        return self.betas[m - 1] * float(self.horizon_T) ** (m / self.num_stages_M)

    def half_boundary(self, m: int) -> float:
        return self.boundary(m) / 2.0

    def label(self) -> str:
        if self.kind == "half_half":
            return "half_half"
        if self.kind == "two_stage":
            return f"two_stage(beta={self.betas[0]:g})"
        return f"multi_stage(M={self.num_stages_M})"

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.horizon_T,
            "M": self.num_stages_M,
            "betas": list(self.betas),
            "min_arm_obs": self.min_arm_obs,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DesignConfig":
        return cls(
            kind=str(obj["kind"]),
            horizon_T=int(obj["T"]),
            num_stages_M=int(obj["M"]),
            betas=tuple(float(b) for b in obj["betas"]),
            min_arm_obs=int(obj.get("min_arm_obs", 2)),
        )


def half_half_config(T: int) -> DesignConfig:
    return DesignConfig("half_half", T, 1, (1.0,))


def two_stage_config(T: int, beta: float = 1.0, min_arm_obs: int = 2) -> DesignConfig:
    return DesignConfig("two_stage", T, 2, (beta, 1.0), min_arm_obs)


def multi_stage_config(
    T: int, M: int, betas, min_arm_obs: int = 2
) -> DesignConfig:
    return DesignConfig("multi_stage", T, M, full_betas(tuple(betas), M), min_arm_obs)


@dataclass(frozen=True, slots=True)
class StageAllocation:
    """One stage's integer sizes plus the case that produced them."""

    stage_index: int
    t1: int
    t0: int
    case_label: str
    clamped: bool = False

    @property
    def total(self) -> int:
        return self.t1 + self.t0

    def to_json_dict(self) -> dict:
        return {
            "stage_index": self.stage_index,
            "t1": self.t1,
            "t0": self.t0,
            "case_label": self.case_label,
            "clamped": self.clamped,
        }


class DesignState:
    """Mutable session for one experiment: buffers, targets, case history."""

    __slots__ = (
        "config",
        "stage",
        "pending",
        "scheduled",
        "obs1",
        "obs0",
        "n1",
        "n0",
        "assigned1",
        "assigned0",
        "target1",
        "target0",
        "frozen_arm",
        "case_path",
        "stage_log",
        "sigma_history",
        "done",
    )

    def __init__(self, config: DesignConfig):
        self.config = config
        self.stage = 0  # index of the most recently emitted stage
        self.pending: StageAllocation | None = None
        self.scheduled: list[StageAllocation] = []
        self.obs1 = np.empty(config.horizon_T, dtype=np.float64)
        self.obs0 = np.empty(config.horizon_T, dtype=np.float64)
        self.n1 = 0
        self.n0 = 0
        self.assigned1 = 0
        self.assigned0 = 0
        self.target1 = 0.0
        self.target0 = 0.0
        self.frozen_arm: str | None = None
        self.case_path: list[str] = []
        self.stage_log: list[StageAllocation] = []
        self.sigma_history: list[dict] = []
        self.done = False

    @property
    def cumulative(self) -> Allocation:
        """Subjects whose outcomes have been ingested so far."""
        return Allocation(self.n1, self.n0)

    # -- emission ---------------------------------------------------------

    def _emit(
        self, stage_index: int, g1: float, g0: float, label: str, final: bool
    ) -> StageAllocation:
        T = self.config.horizon_T
        if final:
            if self.frozen_arm == CONTROL:
                t1 = (T - self.assigned0) - self.assigned1
                t0 = 0
            elif self.frozen_arm == TREATED:
                t0 = (T - self.assigned1) - self.assigned0
                t1 = 0
            else:
                t1 = round_half_up(g1) - self.assigned1
                t0 = T - (self.assigned1 + t1) - self.assigned0
        else:
            t1 = 0 if self.frozen_arm == TREATED else round_half_up(g1) - self.assigned1
            t0 = 0 if self.frozen_arm == CONTROL else round_half_up(g0) - self.assigned0

        clamped = False
        if t1 < 0:
            t0 += t1
            t1 = 0
            clamped = True
        if t0 < 0:
            t1 += t0
            t0 = 0
            clamped = True
        if t1 < 0:  # both directions collapsed; keep totals nonnegative
            t1 = 0
            clamped = True

        self.assigned1 += t1
        self.assigned0 += t0
        self.target1 = g1
        self.target0 = g0
        alloc = StageAllocation(stage_index, t1, t0, label, clamped)
        self.stage_log.append(alloc)
        return alloc

    def _emit_frozen_tail(self, from_stage: int, open_arm: str, label: str) -> None:
        """Pre-compute every remaining stage for the single open arm."""
        cfg = self.config
        M = cfg.num_stages_M
        closed_target = self.target0 if open_arm == TREATED else self.target1
        for l in range(from_stage, M + 1):
            final = l == M
            open_target = cfg.boundary(l) - closed_target
            if open_arm == TREATED:
                self.scheduled.append(self._emit(l, open_target, self.target0, label, final))
            else:
                self.scheduled.append(self._emit(l, self.target1, open_target, label, final))

    # -- estimation -------------------------------------------------------

    def _sigma_hats(self) -> tuple[float, float]:
        need = self.config.min_arm_obs
        if self.n1 < need or self.n0 < need:
            raise DegenerateEstimation(
                f"estimation at stage {self.stage} needs {need} observations per arm, "
                f"have ({self.n1}, {self.n0})"
            )
        s1 = math.sqrt(float(np.var(self.obs1[: self.n1], ddof=1)))
        s0 = math.sqrt(float(np.var(self.obs0[: self.n0], ddof=1)))
        return s1, s0

    def _shares(self, s1: float, s0: float) -> tuple[float, float]:
        T = self.config.horizon_T
        denom = s1 + s0
        if denom == 0.0:
            return T / 2.0, T / 2.0
        return s1 / denom * T, s0 / denom * T


def _validate_feasible(config: DesignConfig) -> None:
    report = feasibility_check(config.betas, config.horizon_T, config.num_stages_M,
                               config.min_arm_obs)
    if not report.ok:
        raise InfeasibleConfig(report.first_violation or "infeasible configuration")


def init_half_half(config: DesignConfig) -> tuple[DesignState, StageAllocation]:
    if config.kind != "half_half":
        raise ValueError("init_half_half needs a half_half config")
    state = DesignState(config)
    T = config.horizon_T
    t1 = round_half_up(T / 2.0)
    state.target1 = T / 2.0
    state.target0 = T / 2.0
    state.assigned1 = t1
    state.assigned0 = T - t1
    alloc = StageAllocation(1, t1, T - t1, INIT)
    state.stage_log.append(alloc)
    state.stage = 1
    state.pending = alloc
    state.case_path.append(INIT)
    return state, alloc


def init_two_stage(config: DesignConfig) -> tuple[DesignState, StageAllocation]:
    """Balanced pilot of round(beta/2*sqrt(T)) per arm."""
    if config.kind != "two_stage":
        raise ValueError("init_two_stage needs a two_stage config")
    _validate_feasible(config)
    state = DesignState(config)
    h1 = config.half_boundary(1)
    alloc = state._emit(1, h1, h1, INIT, final=False)
    state.stage = 1
    state.pending = alloc
    state.case_path.append(INIT)
    return state, alloc


def init_multi_stage(config: DesignConfig) -> tuple[DesignState, StageAllocation]:
    """Balanced first stage of round(beta_1/2*T**(1/M)) per arm."""
    if config.kind != "multi_stage":
        raise ValueError("init_multi_stage needs a multi_stage config")
    _validate_feasible(config)
    state = DesignState(config)
    h1 = config.half_boundary(1)
    alloc = state._emit(1, h1, h1, INIT, final=False)
    state.stage = 1
    state.pending = alloc
    state.case_path.append(INIT)
    return state, alloc


def init_design(config: DesignConfig) -> tuple[DesignState, StageAllocation]:
    return {
        "half_half": init_half_half,
        "two_stage": init_two_stage,
        "multi_stage": init_multi_stage,
    }[config.kind](config)


# -- decisions --------------------------------------------------------------


def _decide_two_stage(state: DesignState, s1: float, s0: float) -> StageAllocation:
    cfg = state.config
    S1, S0 = state._shares(s1, s0)
    h1 = cfg.half_boundary(1)
    if S1 > h1 and S0 > h1:
        label = PLUGIN_2STAGE
        state.case_path.append(label)
        return state._emit(2, S1, S0, label, final=True)
    if S1 <= h1:
        label = ALL_CONTROL
        state.frozen_arm = TREATED
    else:
        label = ALL_TREATED
        state.frozen_arm = CONTROL
    state.case_path.append(label)
    return state._emit(2, state.target1, state.target0, label, final=True)


def _decide_multi_stage(state: DesignState, s1: float, s0: float) -> StageAllocation:
    cfg = state.config
    m = state.stage
    M = cfg.num_stages_M
    S1, S0 = state._shares(s1, s0)

    if m <= M - 2:
        hm = cfg.half_boundary(m)
        hm1 = cfg.half_boundary(m + 1)
        if S0 < hm:
            state.case_path.append(CASE1)
            state.frozen_arm = CONTROL
            state._emit_frozen_tail(m + 1, TREATED, CASE1)
            return state.scheduled.pop(0)
        if hm <= S0 < hm1:
            state.case_path.append(CASE2)
            b_next = cfg.boundary(m + 1)
            alloc = state._emit(m + 1, b_next - S0, S0, CASE2, final=False)
            state.frozen_arm = CONTROL
            if m + 2 <= M:
                state._emit_frozen_tail(m + 2, TREATED, CASE2)
            return alloc
        if S0 >= hm1 and S1 >= hm1:
            state.case_path.append(CASE3)
            return state._emit(m + 1, hm1, hm1, CASE3, final=False)
        if hm <= S1 < hm1:
            state.case_path.append(CASE4)
            b_next = cfg.boundary(m + 1)
            alloc = state._emit(m + 1, S1, b_next - S1, CASE4, final=False)
            state.frozen_arm = TREATED
            if m + 2 <= M:
                state._emit_frozen_tail(m + 2, CONTROL, CASE4)
            return alloc
        state.case_path.append(CASE5)
        state.frozen_arm = TREATED
        state._emit_frozen_tail(m + 1, CONTROL, CASE5)
        return state.scheduled.pop(0)

    # m == M - 1: the final steering decision
    h = cfg.half_boundary(M - 1)
    if S0 < h:
        state.case_path.append(LAST_CASE1)
        state.frozen_arm = CONTROL
        return state._emit(M, state.target1, state.target0, LAST_CASE1, final=True)
    if S1 >= h and S0 >= h:
        state.case_path.append(LAST_CASE2)
        return state._emit(M, S1, S0, LAST_CASE2, final=True)
    state.case_path.append(LAST_CASE3)
    state.frozen_arm = TREATED
    return state._emit(M, state.target1, state.target0, LAST_CASE3, final=True)


def _decide_next(state: DesignState, sigma_override: tuple[float, float] | None) -> StageAllocation:
    if sigma_override is None:
        s1, s0 = state._sigma_hats()
    else:
        s1, s0 = sigma_override
    S1, S0 = state._shares(s1, s0)
    state.sigma_history.append(
        {
            "stage": state.stage,
            "sigma1_hat": s1,
            "sigma0_hat": s0,
            "share1": S1,
            "share0": S0,
        }
    )
    if state.config.kind == "two_stage":
        return _decide_two_stage(state, s1, s0)
    return _decide_multi_stage(state, s1, s0)


def _advance_after_ingest(
    state: DesignState, sigma_override: tuple[float, float] | None = None
) -> StageAllocation | None:
    while True:
        if state.stage >= state.config.num_stages_M:
            state.done = True
            state.pending = None
            return None
        if state.scheduled:
            nxt = state.scheduled.pop(0)
        else:
            # The override stays in force across zero-size stages: they add
            # no data, so a re-estimate would reproduce the same values.
            nxt = _decide_next(state, sigma_override)
        state.stage = nxt.stage_index
        state.pending = nxt
        if nxt.total == 0:
            # Nothing to observe this stage; fall through to the next decision.
            state.pending = None
            continue
        return nxt


def advance(state: DesignState, stage_obs1, stage_obs0) -> StageAllocation | None:
    """Ingest the pending stage's outcomes; return the next stage or None.

    Zero-size stages (possible when rounded boundaries collide) are skipped
    automatically, so the returned allocation always needs data.
    """
    if state.done or state.pending is None:
        raise WrongStage("no stage is awaiting observations")
    alloc = state.pending
    o1 = np.asarray(stage_obs1, dtype=np.float64).ravel()
    o0 = np.asarray(stage_obs0, dtype=np.float64).ravel()
    if o1.size != alloc.t1 or o0.size != alloc.t0:
        raise CountMismatch(
            f"stage {alloc.stage_index} expects ({alloc.t1}, {alloc.t0}) observations, "
            f"got ({o1.size}, {o0.size})"
        )
    state.obs1[state.n1 : state.n1 + o1.size] = o1
    state.obs0[state.n0 : state.n0 + o0.size] = o0
    state.n1 += o1.size
    state.n0 += o0.size
    state.pending = None
    return _advance_after_ingest(state)


def next_two_stage(state: DesignState, stage1_obs1, stage1_obs0) -> StageAllocation:
    """Stage-1 data in, stage-2 allocation out (two-stage design only)."""
    if state.config.kind != "two_stage":
        raise WrongStage("next_two_stage needs a two_stage session")
    if state.stage != 1 or state.pending is None:
        raise WrongStage("two-stage session is not awaiting stage-1 data")
    nxt = advance(state, stage1_obs1, stage1_obs0)
    return nxt if nxt is not None else state.stage_log[-1]


def next_multi_stage(state: DesignState, new_obs1, new_obs0) -> StageAllocation:
    """One stage's data in, the next allocation out (multi-stage design only)."""
    if state.config.kind != "multi_stage":
        raise WrongStage("next_multi_stage needs a multi_stage session")
    if state.done or state.pending is None:
        raise WrongStage("multi-stage session is not awaiting data")
    nxt = advance(state, new_obs1, new_obs0)
    return nxt if nxt is not None else state.stage_log[-1]


def preview_next(
    state: DesignState,
    draft_obs1=None,
    draft_obs0=None,
    sigma_hat: tuple[float, float] | None = None,
) -> dict:
    """What the next decision would be, without mutating the session.

    Either supply the pending stage's draft observations, or a hypothetical
    (sigma1_hat, sigma0_hat) pair that replaces the estimate outright.  The
    decision runs on a deep copy through the same case logic.
    """
    if sigma_hat is None and (draft_obs1 is None or draft_obs0 is None):
        raise ValueError("preview needs either draft observations or a sigma_hat pair")
    clone = copy.deepcopy(state)
    if sigma_hat is not None:
        if clone.pending is not None:
            # Skip the data requirement: the hypothetical estimate stands in.
            alloc = clone.pending
            clone.n1 += alloc.t1
            clone.n0 += alloc.t0
            clone.pending = None
        _advance_after_ingest(clone, sigma_override=sigma_hat)
    else:
        advance(clone, draft_obs1, draft_obs0)
    new_stages = clone.stage_log[len(state.stage_log) :]
    return {
        "case_path": list(clone.case_path[len(state.case_path) :]),
        "stages": [a.to_json_dict() for a in new_stages],
        "frozen_arm": clone.frozen_arm,
        "done": clone.done,
        "sigma_history": clone.sigma_history[len(state.sigma_history) :],
    }


def preview_init(config: DesignConfig) -> dict:
    """Stage-1 allocation a fresh session under `config` would receive."""
    _, alloc = init_design(config)
    return {"stage": alloc.to_json_dict(), "config": config.to_json_dict()}


def randomize_stage(alloc: StageAllocation, rng: np.random.Generator) -> np.ndarray:
    """Uniform random order of t1 ones and t0 zeros (complete randomization)."""
    if alloc.total < 1:
        raise ValueError("cannot randomize an empty stage")
    labels = np.concatenate(
        [np.ones(alloc.t1, dtype=np.int64), np.zeros(alloc.t0, dtype=np.int64)]
    )
    return rng.permutation(labels)


def finalize(state: DesignState) -> tuple[Allocation, float]:
    """Grand totals and the difference-in-means estimate over all data."""
    if not state.done:
        raise IncompleteExperiment(
            f"experiment still has stages pending (stage {state.stage} of "
            f"{state.config.num_stages_M})"
        )
    totals = Allocation(state.n1, state.n0)
    tau_hat = difference_in_means(state.obs1[: state.n1], state.obs0[: state.n0])
    return totals, tau_hat


# -- snapshots ---------------------------------------------------------------


def state_to_snapshot(state: DesignState) -> dict:
    """JSON-safe snapshot sufficient to reconstruct the session."""
    return {
        "config": state.config.to_json_dict(),
        "stage": state.stage,
        "pending": state.pending.to_json_dict() if state.pending else None,
        "scheduled": [a.to_json_dict() for a in state.scheduled],
        "obs1": [float(x) for x in state.obs1[: state.n1]],
        "obs0": [float(x) for x in state.obs0[: state.n0]],
        "assigned1": state.assigned1,
        "assigned0": state.assigned0,
        "target1": state.target1,
        "target0": state.target0,
        "frozen_arm": state.frozen_arm,
        "case_path": list(state.case_path),
        "stage_log": [a.to_json_dict() for a in state.stage_log],
        "sigma_history": [dict(h) for h in state.sigma_history],
        "done": state.done,
    }


def _alloc_from_dict(obj: dict) -> StageAllocation:
    return StageAllocation(
        stage_index=int(obj["stage_index"]),
        t1=int(obj["t1"]),
        t0=int(obj["t0"]),
        case_label=str(obj["case_label"]),
        clamped=bool(obj.get("clamped", False)),
    )


def state_from_snapshot(obj: dict) -> DesignState:
    state = DesignState(DesignConfig.from_json_dict(obj["config"]))
    state.stage = int(obj["stage"])
    state.pending = _alloc_from_dict(obj["pending"]) if obj.get("pending") else None
    state.scheduled = [_alloc_from_dict(a) for a in obj.get("scheduled", [])]
    o1 = np.asarray(obj.get("obs1", []), dtype=np.float64)
    o0 = np.asarray(obj.get("obs0", []), dtype=np.float64)
    state.obs1[: o1.size] = o1
    state.obs0[: o0.size] = o0
    state.n1 = int(o1.size)
    state.n0 = int(o0.size)
    state.assigned1 = int(obj["assigned1"])
    state.assigned0 = int(obj["assigned0"])
    state.target1 = float(obj["target1"])
    state.target0 = float(obj["target0"])
    state.frozen_arm = obj.get("frozen_arm")
    state.case_path = [str(c) for c in obj.get("case_path", [])]
    state.stage_log = [_alloc_from_dict(a) for a in obj.get("stage_log", [])]
    state.sigma_history = [dict(h) for h in obj.get("sigma_history", [])]
    state.done = bool(obj["done"])
    return state
