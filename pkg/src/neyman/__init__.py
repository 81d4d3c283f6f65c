"""Sequential experimental-design toolkit.

Adaptive Neyman allocation designs (two-stage and multi-stage), the
clairvoyant benchmark and competitive-ratio objective, closed-form
performance guarantees with their hard-instance counterpart, and a
deterministic Monte Carlo harness for reproducing the simulation study at
desk scale.
"""

from .core import (
    Allocation,
    ArmMoments,
    RealAllocation,
    clairvoyant_allocation,
    competitive_ratio,
    difference_in_means,
    half_half_ratio,
    integer_clairvoyant,
    optimal_proxy_mse,
    plug_in_allocation,
    proxy_mse,
    sample_variance,
)
from .designs import (
    DesignConfig,
    DesignState,
    StageAllocation,
    advance,
    finalize,
    half_half_config,
    init_design,
    init_multi_stage,
    init_two_stage,
    multi_stage_config,
    next_multi_stage,
    next_two_stage,
    randomize_stage,
    two_stage_config,
)
from .montecarlo import (
    BatchSummary,
    EmpiricalPopulation,
    GaussianPopulation,
    Population,
    ScaledBoundedPopulation,
    ThreePointPopulation,
    TrajectoryResult,
    bound_violation_rate,
    compare_designs,
    run_batch,
    run_trajectory,
)
from .tuning import Schedule, feasibility_check, geometric_schedule

__version__ = "0.1.0"
