"""Stationary threshold placement policy driven by measured outage curves.

The per-location decision needs only the measured outage probabilities to the
previous node, never the underlying shadowing gain, so the same code path
serves both simulation and field deployment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

from .acoe import PolicyThresholds
from .channel import CostWeights, PowerSet, PropagationParams, outage_probability

__all__ = ["MeasuredLink", "Decision", "decide", "decide_from_shadowing", "best_measured_power"]


@dataclass(frozen=True)
class MeasuredLink:
    """Measured outage probability per transmit power for one backward link.

    ``outage_by_power`` is stored as (power_mw, outage) pairs in ascending
    power order.  Outage should be non-increasing in power; model-generated
    curves are asserted, user-entered field data only warned (measurement
    noise can invert adjacent levels).
    """

    r_steps: int
    outage_by_power: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if self.r_steps < 1:
            raise ValueError("r_steps must be >= 1")
        if not self.outage_by_power:
            raise ValueError("at least one power level is required")
        pairs = tuple(sorted((float(g), float(q)) for g, q in self.outage_by_power))
        for _, q in pairs:
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"outage {q} outside [0, 1]")
        object.__setattr__(self, "outage_by_power", pairs)

    @classmethod
    def from_mapping(
        cls, r_steps: int, outages: Mapping[float, float], *, model_generated: bool = False
    ) -> "MeasuredLink":
        link = cls(r_steps, tuple(outages.items()))
        qs = [q for _, q in link.outage_by_power]
        if any(b > a + 1e-12 for a, b in zip(qs, qs[1:])):
            if model_generated:
                raise ValueError("model-generated outage curve must be non-increasing in power")
            warnings.warn(
                f"measured outage increases with power at r={r_steps}; "
                "check the field measurements",
                stacklevel=2,
            )
        return link

    @classmethod
    def from_shadowing(
        cls, params: PropagationParams, powers: PowerSet, r_steps: int, w: float
    ) -> "MeasuredLink":
        q = outage_probability(params, r_steps, powers.as_array(), w)
        return cls(r_steps, tuple(zip(powers.levels, q.tolist())))

    @classmethod
    def from_packet_counts(
        cls, r_steps: int, counts: Mapping[float, tuple[int, int]]
    ) -> "MeasuredLink":
        """Build from per-power (sent, received) packet counts.

        The empirical outage is 1 - received/sent.
        """
        outages = {}
        for power, (sent, received) in counts.items():
            if sent <= 0 or received < 0 or received > sent:
                raise ValueError(f"bad packet counts ({sent}, {received}) at power {power}")
            outages[float(power)] = 1.0 - received / sent
        return cls.from_mapping(r_steps, outages)

    def outage_at(self, power: float) -> float:
        for g, q in self.outage_by_power:
            if g == power:
                return q
        raise KeyError(f"power {power} not measured")


@dataclass(frozen=True)
class Decision:
    """Place (with a transmit power and the resulting link outage) or continue."""

    place: bool
    power: float | None = None
    link_outage: float | None = None

    @classmethod
    def place_relay(cls, power: float, link_outage: float) -> "Decision":
        return cls(place=True, power=power, link_outage=link_outage)


CONTINUE = Decision(place=False)


def best_measured_power(weights: CostWeights, link: MeasuredLink) -> tuple[float, float, float]:
    """Minimize gamma + xi_out * outage(gamma) over the measured curve.

    Returns (cost excluding the relay charge, power, outage at that power);
    ties go to the lowest power.
    """
    best_cost = None
    best_power = 0.0
    best_q = 0.0
    for g, q in link.outage_by_power:
        cost = g + weights.xi_out * q
        if best_cost is None or cost < best_cost:
            best_cost, best_power, best_q = cost, g, q
    return best_cost, best_power, best_q


def decide(thresholds: PolicyThresholds, weights: CostWeights, link: MeasuredLink) -> Decision:
    """Threshold decision at gap r: place iff the best single-stage cost is at
    most c_th(r); placement is forced at r = B."""
    b = thresholds.b
    r = link.r_steps
    if not 1 <= r <= b:
        raise ValueError(f"gap {r} outside 1..{b}")
    cost, power, q = best_measured_power(weights, link)
    if r == b:
        return Decision.place_relay(power, q)
    if cost + weights.xi_relay <= thresholds.c_th[r - 1]:
        return Decision.place_relay(power, q)
    return CONTINUE


def decide_from_shadowing(
    thresholds: PolicyThresholds,
    weights: CostWeights,
    params: PropagationParams,
    powers: PowerSet,
    r_steps: int,
    w: float,
) -> Decision:
    """Adapter for model-driven callers: generate the outage curve from the
    shadowing gain, then decide from the measurements."""
    link = MeasuredLink.from_shadowing(params, powers, r_steps, w)
    return decide(thresholds, weights, link)
