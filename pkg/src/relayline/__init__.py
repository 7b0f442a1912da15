"""Optimal as-you-go relay placement along a line.

An exact average-cost solver for the placement problem, a stationary
threshold policy, online learners (fixed and adaptive multipliers), a
Monte-Carlo deployment simulator, and a CLI for experiment reproduction and
interactive deployment advice.
"""

from .acoe import (
    PolicyThresholds,
    RenewalMetrics,
    ValueVector,
    choose_b,
    lambda_surface,
    renewal_metrics,
    solve_acoe,
    thresholds,
)
from .adaptive import Bounds, Constraints, OaygalState, calibrate_bounds, feasibility_report, oaygal_step
from .channel import (
    CostWeights,
    PowerSet,
    PropagationParams,
    ShadowingLaw,
    expect_over_shadowing,
    link_cost,
    outage_probability,
    sample_shadowing,
)
from .learning import OayglState, StepSchedule, oaygl_decide, oaygl_update
from .policy import Decision, MeasuredLink, decide, decide_from_shadowing
from .simulator import (
    DeploymentTrace,
    MeasurementSet,
    MonteCarloResult,
    ThresholdPolicySource,
    measurement_coverage,
    monte_carlo,
    run_path,
)

__version__ = "0.1.0"
