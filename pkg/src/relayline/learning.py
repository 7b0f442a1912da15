"""Online learning of the value vector during deployment, for fixed cost
multipliers.

The value estimate is driven by asynchronous stochastic approximation: at
step k only the coordinates measured in that step's set are updated, each on
its own update count.  Decisions threshold against the current estimate, so
no propagation parameters are needed at any point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CostWeights
from .policy import Decision, MeasuredLink, best_measured_power
from .simulator import MeasurementSet

__all__ = ["StepSchedule", "OayglState", "oaygl_decide", "oaygl_update", "DEFAULT_STEP_CAP"]

# Cap on the effective relaxation coefficient of the value update.  A raw
# a(n) above 1 overshoots the fixed-point target and oscillates divergently
# (the published gain of 120 starts at a(1) = 120); values near 1 track the
# sampled targets so closely that the min-coupling between coordinates drags
# the whole vector below its fixed point for thousands of steps.  0.2 keeps
# the early transient fast without entering that bias regime, and leaves the
# asymptotic schedule untouched once a(n) falls below it.
DEFAULT_STEP_CAP = 0.2


@dataclass(frozen=True)
class StepSchedule:
    """Polynomial step sizes a(n) = gain / n^exponent.

    Exponent in (0.5, 1] guarantees sum a(n) = inf and sum a(n)^2 < inf.
    A zero gain is allowed and freezes the iterates (useful in tests and for
    reducing the adaptive learner to the fixed-multiplier one).
    """

    gain: float
    exponent: float = 1.0

    def __post_init__(self) -> None:
        if self.gain < 0:
            raise ValueError("gain must be non-negative")
        if not 0.5 < self.exponent <= 1.0:
            raise ValueError("exponent must be in (0.5, 1]")

    def __call__(self, n: int) -> float:
        return self.gain / n**self.exponent

    def to_dict(self) -> dict:
        return {"gain": self.gain, "exponent": self.exponent}

    @classmethod
    def from_dict(cls, data: dict) -> "StepSchedule":
        return cls(gain=float(data["gain"]), exponent=float(data["exponent"]))


class OayglState:
    """Learner state: value estimate, per-coordinate update counts, multipliers.

    Updates mutate the state in place; ``update`` returns the state for
    chaining.  One instance per sample path, never shared.
    """

    wants_full_measurements = True
    stationary = False

    def __init__(
        self,
        v0,
        weights: CostWeights,
        schedule: StepSchedule,
        *,
        step_cap: float = DEFAULT_STEP_CAP,
        nu=None,
        k: int = 0,
    ) -> None:
        self.v = np.array(v0, dtype=float)
        if self.v.ndim != 1 or self.v.size == 0:
            raise ValueError("initial estimate must be a non-empty vector")
        if not 0.0 < step_cap <= 1.0:
            raise ValueError("step_cap must be in (0, 1]")
        self.weights = weights
        self.schedule = schedule
        self.step_cap = step_cap
        self.nu = np.zeros(len(self.v), dtype=np.int64) if nu is None else np.array(nu, dtype=np.int64)
        if len(self.nu) != len(self.v):
            raise ValueError("update counts must match the estimate length")
        self.k = k

    @property
    def b(self) -> int:
        return len(self.v)

    def decide(self, link: MeasuredLink) -> Decision:
        return oaygl_decide(self, link)

    def update(self, measurements: MeasurementSet) -> "OayglState":
        return oaygl_update(self, measurements)

    def copy(self) -> "OayglState":
        return OayglState.from_dict(self.to_dict())

    def snapshot(self) -> dict[str, float]:
        return {"v1_estimate": float(self.v[0])}

    def to_dict(self) -> dict:
        return {
            "v": self.v.tolist(),
            "nu": self.nu.tolist(),
            "k": self.k,
            "xi_out": self.weights.xi_out,
            "xi_relay": self.weights.xi_relay,
            "schedule": self.schedule.to_dict(),
            "step_cap": self.step_cap,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OayglState":
        return cls(
            v0=data["v"],
            weights=CostWeights(float(data["xi_out"]), float(data["xi_relay"])),
            schedule=StepSchedule.from_dict(data["schedule"]),
            step_cap=float(data.get("step_cap", DEFAULT_STEP_CAP)),
            nu=data["nu"],
            k=int(data["k"]),
        )


def oaygl_decide(state: OayglState, link: MeasuredLink) -> Decision:
    """Threshold test against the current (pre-update) estimate.

    Place iff the measured best cost is at most V(r+1) - V(1); forced at the
    maximum gap.  The chosen power minimizes gamma + xi_out * outage(gamma)
    over the measured curve, ties to the lowest power.
    """
    b = state.b
    r = link.r_steps
    if not 1 <= r <= b:
        raise ValueError(f"gap {r} outside 1..{b}")
    cost, power, q = best_measured_power(state.weights, link)
    if r == b:
        return Decision.place_relay(power, q)
    if cost + state.weights.xi_relay <= state.v[r] - state.v[0]:
        return Decision.place_relay(power, q)
    return Decision(place=False)


def value_update_targets(
    v: np.ndarray, weights: CostWeights, measurements: MeasurementSet
) -> list[tuple[int, float]]:
    """Fixed-point targets for the measured coordinates, all evaluated at the
    same pre-update vector: min{c(r, w_r), V(r+1) - V(1)} for r < B and
    c(B, w_B) for the last coordinate."""
    b = len(v)
    v1 = v[0]
    targets = []
    for r in sorted(measurements.links):
        link = measurements.links[r]
        cost, _, _ = best_measured_power(weights, link)
        c = cost + weights.xi_relay
        if r < b:
            targets.append((r, min(c, v[r] - v1)))
        else:
            targets.append((r, c))
    return targets


def apply_value_update(
    v: np.ndarray,
    nu: np.ndarray,
    schedule: StepSchedule,
    weights: CostWeights,
    measurements: MeasurementSet,
    step_cap: float = DEFAULT_STEP_CAP,
) -> None:
    """One asynchronous update of ``v`` in place.

    Counts are incremented before the step size is evaluated, so the first
    update of a coordinate uses a(1).  All right-hand sides are computed from
    the pre-update vector; coordinates outside the measurement set are left
    untouched.  The effective relaxation coefficient is min(step_cap, a(n));
    pass step_cap=1.0 to disable the stabilization (see DEFAULT_STEP_CAP).
    """
    for r in measurements.links:
        nu[r - 1] += 1
    targets = value_update_targets(v, weights, measurements)
    steps = [(r, min(step_cap, schedule(int(nu[r - 1]))), target) for r, target in targets]
    for r, a, target in steps:
        v[r - 1] += a * (target - v[r - 1])


def oaygl_update(state: OayglState, measurements: MeasurementSet) -> OayglState:
    """Learning operation for one step, performed after the decision."""
    apply_value_update(
        state.v, state.nu, state.schedule, state.weights, measurements, state.step_cap
    )
    state.k += 1
    return state
