"""Constrained learning: adapt the cost multipliers while deploying.

A two-timescale projected stochastic approximation: the value estimate
follows the fast schedule exactly as in the fixed-multiplier learner, while
the multipliers move on a slow schedule only at placement events, nudged by
the constraint violations of the newly created link and clipped to a box.
Box corners are calibrated so that boundary equilibria cannot hide a
constraint violation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acoe import DEFAULT_LAW_ATOMS, CostWeights, renewal_metrics, solve_acoe
from .channel import PowerSet, PropagationParams, ShadowingLaw
from .errors import InfeasibleConstraintsError
from .learning import DEFAULT_STEP_CAP, StepSchedule, apply_value_update
from .policy import Decision, MeasuredLink, best_measured_power
from .simulator import MeasurementSet

__all__ = [
    "Constraints",
    "Bounds",
    "OaygalState",
    "oaygal_step",
    "calibrate_bounds",
    "feasibility_report",
    "FeasibilityReport",
]


@dataclass(frozen=True)
class Constraints:
    """Targets: mean outage per step at most q_bar, mean relays per step at
    most n_bar.  Feasibility against a concrete environment is checked by
    ``calibrate_bounds`` / ``feasibility_report``."""

    q_bar: float
    n_bar: float

    def __post_init__(self) -> None:
        if self.q_bar <= 0:
            raise ValueError("q_bar must be positive")
        if not 0.0 < self.n_bar <= 1.0:
            raise ValueError("n_bar must be in (0, 1]")


@dataclass(frozen=True)
class Bounds:
    """Projection box for the multipliers: xi_out in [0, a1], xi_relay in [0, a2]."""

    a1: float
    a2: float

    def __post_init__(self) -> None:
        if self.a1 <= 0 or self.a2 <= 0:
            raise ValueError("bounds must be positive")


class OaygalState:
    """Adaptive learner state: value estimate plus boxed multipliers.

    ``decide`` stashes the placement outcome so that the following ``update``
    can run the slow multiplier step; the simulator calls them in that order
    on every step.
    """

    wants_full_measurements = True
    stationary = False

    def __init__(
        self,
        v0,
        constraints: Constraints,
        bounds: Bounds,
        fast: StepSchedule,
        slow_out: StepSchedule,
        slow_relay: StepSchedule,
        xi_out0: float,
        xi_relay0: float,
        *,
        step_cap: float = DEFAULT_STEP_CAP,
        nu=None,
        k: int = 0,
        n_relays: int = 0,
    ) -> None:
        self.v = np.array(v0, dtype=float)
        if self.v.ndim != 1 or self.v.size == 0:
            raise ValueError("initial estimate must be a non-empty vector")
        if not 0.0 < step_cap <= 1.0:
            raise ValueError("step_cap must be in (0, 1]")
        if slow_out.exponent != slow_relay.exponent:
            raise ValueError("both multiplier schedules must share one exponent")
        if (slow_out.gain > 0 or slow_relay.gain > 0) and slow_out.exponent <= fast.exponent:
            raise ValueError(
                "slow exponent must exceed the fast exponent so that "
                "b(floor(n/B))/a(n) -> 0"
            )
        if not 0.0 <= xi_out0 <= bounds.a1 or not 0.0 <= xi_relay0 <= bounds.a2:
            raise ValueError("initial multipliers must lie inside the box")
        self.constraints = constraints
        self.bounds = bounds
        self.fast = fast
        self.step_cap = step_cap
        self.slow_out = slow_out
        self.slow_relay = slow_relay
        self.xi_out = float(xi_out0)
        self.xi_relay = float(xi_relay0)
        self.nu = np.zeros(len(self.v), dtype=np.int64) if nu is None else np.array(nu, dtype=np.int64)
        self.k = k
        self.n_relays = n_relays
        self._pending: tuple[int, float] | None = None

    @property
    def b(self) -> int:
        return len(self.v)

    @property
    def weights(self) -> CostWeights:
        return CostWeights(self.xi_out, self.xi_relay)

    def decide(self, link: MeasuredLink) -> Decision:
        r = link.r_steps
        if not 1 <= r <= self.b:
            raise ValueError(f"gap {r} outside 1..{self.b}")
        cost, power, q = best_measured_power(self.weights, link)
        if r == self.b or cost + self.xi_relay <= self.v[r] - self.v[0]:
            decision = Decision.place_relay(power, q)
            self._pending = (r, q)
        else:
            decision = Decision(place=False)
            self._pending = None
        return decision

    def update(self, measurements: MeasurementSet) -> "OaygalState":
        apply_value_update(self.v, self.nu, self.fast, self.weights, measurements)
        if self._pending is not None:
            u, q_link = self._pending
            self.n_relays += 1
            n = self.n_relays
            self.xi_out = float(
                np.clip(
                    self.xi_out + self.slow_out(n) * (q_link - self.constraints.q_bar * u),
                    0.0,
                    self.bounds.a1,
                )
            )
            self.xi_relay = float(
                np.clip(
                    self.xi_relay + self.slow_relay(n) * (1.0 - self.constraints.n_bar * u),
                    0.0,
                    self.bounds.a2,
                )
            )
            self._pending = None
        self.k += 1
        return self

    def snapshot(self) -> dict[str, float]:
        return {
            "v1_estimate": float(self.v[0]),
            "xi_out": self.xi_out,
            "xi_relay": self.xi_relay,
        }

    def to_dict(self) -> dict:
        return {
            "v": self.v.tolist(),
            "nu": self.nu.tolist(),
            "k": self.k,
            "n_relays": self.n_relays,
            "xi_out": self.xi_out,
            "xi_relay": self.xi_relay,
            "q_bar": self.constraints.q_bar,
            "n_bar": self.constraints.n_bar,
            "a1": self.bounds.a1,
            "a2": self.bounds.a2,
            "fast": self.fast.to_dict(),
            "slow_out": self.slow_out.to_dict(),
            "slow_relay": self.slow_relay.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OaygalState":
        return cls(
            v0=data["v"],
            constraints=Constraints(float(data["q_bar"]), float(data["n_bar"])),
            bounds=Bounds(float(data["a1"]), float(data["a2"])),
            fast=StepSchedule.from_dict(data["fast"]),
            slow_out=StepSchedule.from_dict(data["slow_out"]),
            slow_relay=StepSchedule.from_dict(data["slow_relay"]),
            xi_out0=float(data["xi_out"]),
            xi_relay0=float(data["xi_relay"]),
            nu=data["nu"],
            k=int(data["k"]),
            n_relays=int(data["n_relays"]),
        )


def oaygal_step(state: OaygalState, measurements: MeasurementSet) -> tuple[OaygalState, Decision]:
    """One full adaptive step: decide on the link to the previous node with
    the current iterates, then update the value estimate (fast) and, on a
    placement, the multipliers (slow, projected onto the box)."""
    decision = state.decide(measurements.links[measurements.r_prime])
    state.update(measurements)
    return state, decision


A1_LADDER = tuple(2.0**j for j in range(0, 19))
A2_LADDER = tuple(0.5 * 2.0**j for j in range(0, 16))


def calibrate_bounds(
    params: PropagationParams,
    powers: PowerSet,
    b: int,
    constraints: Constraints,
    kappa: float = 0.05,
    *,
    law: ShadowingLaw | None = None,
    xi_out_sweep: int = 9,
) -> Bounds:
    """Pick the projection box on a power-of-two ladder.

    a1 is the smallest candidate that (i) makes the maximum power the
    shadowing-likely argmin of gamma + a1 * Q_out at every gap (probability
    above 1 - kappa) and (ii) drives the optimal outage per step at
    multipliers (a1, 0) down to q_bar.  When the outage target is already met
    with a zero multiplier the smallest ladder value suffices (the multiplier
    iterate then just decays to 0).  a2 is the smallest candidate whose
    optimal spacing exceeds 1/n_bar across a sweep of xi_out in [0, a1].
    Raises when a ladder is exhausted, naming the violated test.
    """
    if law is None:
        law = ShadowingLaw.stratified(params, min(DEFAULT_LAW_ATOMS, 20_000))
    if constraints.n_bar <= 1.0 / b:
        raise InfeasibleConstraintsError(
            f"n_bar={constraints.n_bar} is at most the forced placement rate 1/B={1.0 / b}; "
            "spacing cannot exceed B"
        )

    levels = powers.as_array()
    q_tables = [
        -np.expm1(-params.outage_scale(u) / (levels[:, None] * law.w[None, :]))
        for u in range(1, b + 1)
    ]

    def outage_per_step_at(weights: CostWeights) -> float:
        v = solve_acoe(params, powers, b, weights, law=law)
        return renewal_metrics(params, powers, weights, v, law=law).outage_per_step

    a1 = None
    if outage_per_step_at(CostWeights(0.0, 0.0)) <= constraints.q_bar:
        a1 = A1_LADDER[0]
    else:
        for cand in A1_LADDER:
            max_power_likely = all(
                float(np.dot(law.p, np.argmin(levels[:, None] + cand * q, axis=0) == len(levels) - 1))
                > 1.0 - kappa
                for q in q_tables
            )
            if not max_power_likely:
                continue
            if outage_per_step_at(CostWeights(cand, 0.0)) <= constraints.q_bar:
                a1 = cand
                break
        if a1 is None:
            raise InfeasibleConstraintsError(
                "outage target unreachable: no ladder value drives the optimal "
                f"outage per step down to q_bar={constraints.q_bar}"
            )

    target_spacing = 1.0 / constraints.n_bar
    a2 = None
    for cand in A2_LADDER:
        ok = True
        for xi_out in np.linspace(0.0, a1, xi_out_sweep):
            weights = CostWeights(float(xi_out), cand)
            v = solve_acoe(params, powers, b, weights, law=law)
            if renewal_metrics(params, powers, weights, v, law=law).u_bar <= target_spacing:
                ok = False
                break
        if ok:
            a2 = cand
            break
    if a2 is None:
        raise InfeasibleConstraintsError(
            "spacing target unreachable: no ladder value keeps the optimal "
            f"spacing above 1/n_bar={target_spacing} across the xi_out sweep"
        )
    return Bounds(a1=a1, a2=a2)


@dataclass(frozen=True)
class FeasibilityReport:
    """Read-only diagnostic of a constraint pair against an environment."""

    feasible: bool
    reason: str
    witness: CostWeights | None
    details: dict


def feasibility_report(
    params: PropagationParams,
    powers: PowerSet,
    b: int,
    constraints: Constraints,
    *,
    law: ShadowingLaw | None = None,
    xi_out_grid=(0.0, 25.0, 50.0, 100.0, 150.0, 250.0, 500.0, 1000.0, 4000.0),
    xi_relay_grid=(0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0),
) -> FeasibilityReport:
    """Check whether any threshold policy can satisfy the targets.

    Handles the two hard geometric cases exactly (relay rate below the forced
    minimum; spacing pinned at B, where the outage floor is
    E_W Q_out(B, P_max, W)/B) and otherwise sweeps solved instances over a
    multiplier grid, reporting the best witness found.
    """
    if law is None:
        law = ShadowingLaw.stratified(params, min(DEFAULT_LAW_ATOMS, 20_000))
    if constraints.n_bar < 1.0 / b:
        return FeasibilityReport(
            feasible=False,
            reason=f"n_bar={constraints.n_bar} below the forced placement rate 1/B={1.0 / b}",
            witness=None,
            details={},
        )
    if constraints.n_bar == 1.0 / b:
        q = -np.expm1(-params.outage_scale(b) / (powers.p_max * law.w))
        outage_floor = float(np.dot(law.p, q)) / b
        feasible = constraints.q_bar >= outage_floor
        reason = (
            "spacing pinned at B: outage floor E_W Q_out(B, P_max, W)/B "
            f"= {outage_floor:.6g} {'<=' if feasible else '>'} q_bar={constraints.q_bar}"
        )
        return FeasibilityReport(
            feasible=feasible,
            reason=reason,
            witness=None,
            details={"outage_floor": outage_floor},
        )

    best = None
    for xi_relay in xi_relay_grid:
        for xi_out in xi_out_grid:
            weights = CostWeights(float(xi_out), float(xi_relay))
            v = solve_acoe(params, powers, b, weights, law=law)
            m = renewal_metrics(params, powers, weights, v, law=law)
            if m.outage_per_step <= constraints.q_bar and m.relays_per_step <= constraints.n_bar:
                if best is None or m.power_per_step < best[1]:
                    best = (weights, m.power_per_step, m)
    if best is not None:
        weights, power, m = best
        return FeasibilityReport(
            feasible=True,
            reason=f"grid witness at (xi_out={weights.xi_out}, xi_relay={weights.xi_relay})",
            witness=weights,
            details={
                "power_per_step": power,
                "outage_per_step": m.outage_per_step,
                "relays_per_step": m.relays_per_step,
            },
        )
    return FeasibilityReport(
        feasible=False,
        reason="no multiplier pair on the diagnostic grid satisfies both targets",
        witness=None,
        details={},
    )
