"""Exact average-cost solver for the line placement problem.

Computes the differential value vector and optimal cost per step, the
placement thresholds, the horizon-selection rule, and closed-form
renewal-reward metrics of any threshold policy.

The optimality system is V(r) = E_W min{c(r,W), V(r+1) - V(1)} for r < B and
V(B) = E_W c(B,W), where c(r,W) is the best single-stage placement cost.
Fixing a candidate x = V(1) makes V(B) independent of x and the backward
recursion well defined; the induced map x -> V(1) is continuous and
decreasing, so the fixed point is found by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channel import CostWeights, PowerSet, PropagationParams, ShadowingLaw
from .errors import ConfigurationError, InfeasibleEnvironmentError, SolverError

__all__ = [
    "CostWeights",
    "ValueVector",
    "PolicyThresholds",
    "RenewalMetrics",
    "SurfacePoint",
    "solve_acoe",
    "thresholds",
    "choose_b",
    "renewal_metrics",
    "lambda_surface",
    "DEFAULT_LAW_ATOMS",
]

DEFAULT_LAW_ATOMS = 100_000

BISECTION_X_TOL = 1e-12
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class ValueVector:
    """Solved differential values V(1..B); V(1) is the optimal cost per step."""

    v: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.v, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("value vector must be a non-empty 1-d array")
        object.__setattr__(self, "v", arr)

    @property
    def b(self) -> int:
        return len(self.v)

    @property
    def lambda_star(self) -> float:
        return float(self.v[0])

    def value(self, r: int) -> float:
        if not 1 <= r <= self.b:
            raise ValueError(f"r must be in 1..{self.b}")
        return float(self.v[r - 1])

    def validate(self, atol: float = 1e-9) -> None:
        """Check the solved-vector invariants: V non-decreasing in r and
        V(r) >= r*V(1) for r <= B-1."""
        if np.any(np.diff(self.v) < -atol):
            raise ValueError("value vector is not non-decreasing")
        r = np.arange(1, self.b)
        if self.b > 1 and np.any(self.v[:-1] < r * self.v[0] - atol):
            raise ValueError("value vector violates V(r) >= r*V(1)")


@dataclass(frozen=True)
class PolicyThresholds:
    """Placement thresholds c_th(r) = V(r+1) - V(1) for r = 1..B-1."""

    c_th: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "c_th", np.array(self.c_th, dtype=float))

    @property
    def b(self) -> int:
        return len(self.c_th) + 1


@dataclass(frozen=True)
class RenewalMetrics:
    """Closed-form per-link law and per-step averages of a threshold policy.

    ``link_law[u-1, m]`` is the joint probability that a link has length u
    steps and uses the m-th power level.  Per-step ratios follow from the
    renewal-reward theorem: per-link means divided by the mean spacing.
    """

    link_law: np.ndarray
    u_bar: float
    gamma_bar: float
    q_bar_link: float
    power_per_step: float
    outage_per_step: float
    relays_per_step: float

    def law_over_lengths(self) -> np.ndarray:
        return self.link_law.sum(axis=1)


@dataclass(frozen=True)
class SurfacePoint:
    """One solved instance on a multiplier grid."""

    weights: CostWeights
    lambda_star: float
    metrics: RenewalMetrics


class _CostTables:
    """Placement costs and power choices on the atoms of a shadowing law.

    C[r-1, i] is the best single-stage cost at gap r on atom i (including the
    relay charge); gi[r-1, i] the index of the chosen power (ties resolved to
    the lowest level); qsel the outage achieved by that choice.
    """

    def __init__(
        self,
        params: PropagationParams,
        powers: PowerSet,
        weights: CostWeights,
        b: int,
        law: ShadowingLaw,
    ) -> None:
        levels = powers.as_array()
        n = law.w.size
        self.law = law
        self.levels = levels
        self.cost = np.empty((b, n))
        self.power_idx = np.empty((b, n), dtype=np.intp)
        self.outage_sel = np.empty((b, n))
        cols = np.arange(n)
        for r in range(1, b + 1):
            scale = params.outage_scale(r)
            q = -np.expm1(-scale / (levels[:, None] * law.w[None, :]))
            totals = levels[:, None] + weights.xi_out * q
            gi = np.argmin(totals, axis=0)
            self.cost[r - 1] = totals[gi, cols] + weights.xi_relay
            self.power_idx[r - 1] = gi
            self.outage_sel[r - 1] = q[gi, cols]


def _default_law(params: PropagationParams, law: ShadowingLaw | None) -> ShadowingLaw:
    if law is not None:
        return law
    return ShadowingLaw.stratified(params, DEFAULT_LAW_ATOMS)


def _backward(tables: _CostTables, x: float, v_b: float) -> np.ndarray:
    b = tables.cost.shape[0]
    v = np.empty(b)
    v[b - 1] = v_b
    for r in range(b - 2, -1, -1):
        v[r] = tables.law.expect(np.minimum(tables.cost[r], v[r + 1] - x))
    return v


def solve_acoe(
    params: PropagationParams,
    powers: PowerSet,
    b: int,
    weights: CostWeights,
    *,
    law: ShadowingLaw | None = None,
    x_tol: float = BISECTION_X_TOL,
) -> ValueVector:
    """Solve the optimality system for horizon ``b`` and return V(1..B).

    Bisects the candidate x = V(1) on [0, P_max + xi_out + xi_relay]; the
    bracket holds because the cost per step can never exceed the worst
    single-step placement cost.  Every equation residual is checked against
    1e-8 before returning.
    """
    if b < 1:
        raise ConfigurationError("horizon B must be at least 1")
    law = _default_law(params, law)
    tables = _CostTables(params, powers, weights, b, law)
    v_b = tables.law.expect(tables.cost[b - 1])
    if b == 1:
        return ValueVector(np.array([v_b]))

    lo, hi = 0.0, powers.p_max + weights.xi_out + weights.xi_relay
    if _backward(tables, lo, v_b)[0] < lo:
        raise SolverError("bisection bracket failed at x=0")
    for _ in range(200):
        if hi - lo <= x_tol:
            break
        mid = 0.5 * (lo + hi)
        if _backward(tables, mid, v_b)[0] > mid:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    v = _backward(tables, x, v_b)

    residuals = np.empty(b)
    residuals[b - 1] = abs(tables.law.expect(tables.cost[b - 1]) - v[b - 1])
    for r in range(b - 1):
        lhs = tables.law.expect(np.minimum(tables.cost[r], v[r + 1] - v[0]))
        residuals[r] = abs(lhs - v[r])
    if residuals.max() >= RESIDUAL_TOL:
        raise SolverError(f"bisection did not converge; residuals {residuals}")
    return ValueVector(v)


def thresholds(v: ValueVector) -> PolicyThresholds:
    """Placement thresholds c_th(r) = V(r+1) - V(1); empty when B = 1."""
    return PolicyThresholds(v.v[1:] - v.v[0])


def choose_b(
    params: PropagationParams,
    powers: PowerSet,
    workable_outage: float,
    min_prob: float,
    *,
    law: ShadowingLaw | None = None,
    search_cap: int = 64,
) -> int:
    """Largest B such that a length-B*delta link at maximum power is workable
    (outage below ``workable_outage``) with probability above ``min_prob``.

    The probability is taken over shadowing by quadrature.  The scan is
    capped at ``search_cap``: with a vacuous probability floor the cap itself
    is returned.  Raises when even B = 1 fails.
    """
    if not 0.0 < workable_outage < 1.0:
        raise ValueError("workable_outage must be in (0, 1)")
    if not 0.0 < min_prob < 1.0:
        raise ValueError("min_prob must be in (0, 1)")
    law = _default_law(params, law)
    best = 0
    for b in range(1, search_cap + 1):
        q = -np.expm1(-params.outage_scale(b) / (powers.p_max * law.w))
        prob_workable = law.expect(q < workable_outage)
        if prob_workable > min_prob:
            best = b
        else:
            break
    if best == 0:
        raise InfeasibleEnvironmentError(
            f"no horizon qualifies: even a one-step link is workable with "
            f"probability <= {min_prob}"
        )
    return best


def _placement_profile(tables: _CostTables, v: ValueVector):
    """Per-gap placement masks and probabilities under the threshold policy.

    Placement wins ties (the comparison is <=), which matters only for
    discrete test laws; continuous shadowing puts zero mass on the boundary.
    """
    b = v.b
    c_th = v.v[1:] - v.v[0]
    masks = []
    p_place = np.empty(b)
    for r in range(1, b + 1):
        if r < b:
            mask = tables.cost[r - 1] <= c_th[r - 1]
        else:
            mask = np.ones_like(tables.cost[r - 1], dtype=bool)
        masks.append(mask)
        p_place[r - 1] = tables.law.expect(mask)
    return masks, p_place


def renewal_metrics(
    params: PropagationParams,
    powers: PowerSet,
    weights: CostWeights,
    v: ValueVector,
    *,
    law: ShadowingLaw | None = None,
) -> RenewalMetrics:
    """Analytic per-link law and per-step averages of the threshold policy
    defined by ``v`` (which need not be the optimum; a deliberately wrong
    vector evaluates a miscalibrated fixed policy)."""
    law = _default_law(params, law)
    tables = _CostTables(params, powers, weights, v.b, law)
    b = v.b
    masks, p_place = _placement_profile(tables, v)
    survive = np.concatenate([[1.0], np.cumprod(1.0 - p_place[:-1])])

    m = len(powers)
    link_law = np.zeros((b, m))
    q_bar = 0.0
    for r in range(b):
        mask = masks[r]
        wp = law.p * mask
        link_law[r] = survive[r] * np.bincount(tables.power_idx[r], weights=wp, minlength=m)
        q_bar += survive[r] * float(np.dot(wp, tables.outage_sel[r]))

    law_u = link_law.sum(axis=1)
    u_bar = float(np.dot(np.arange(1, b + 1), law_u))
    gamma_bar = float(np.dot(link_law.sum(axis=0), tables.levels))
    return RenewalMetrics(
        link_law=link_law,
        u_bar=u_bar,
        gamma_bar=gamma_bar,
        q_bar_link=q_bar,
        power_per_step=gamma_bar / u_bar,
        outage_per_step=q_bar / u_bar,
        relays_per_step=1.0 / u_bar,
    )


def lambda_surface(
    params: PropagationParams,
    powers: PowerSet,
    b: int,
    weight_grid: Iterable[CostWeights | Sequence[float]],
    *,
    law: ShadowingLaw | None = None,
) -> list[SurfacePoint]:
    """Solve one instance per multiplier pair and tabulate cost and metrics.

    Deterministic; used to exercise the monotonicity and concavity of the
    optimal cost and the per-step metrics across the multiplier plane.
    """
    law = _default_law(params, law)
    points = []
    for entry in weight_grid:
        w = entry if isinstance(entry, CostWeights) else CostWeights(*entry)
        v = solve_acoe(params, powers, b, w, law=law)
        metrics = renewal_metrics(params, powers, w, v, law=law)
        points.append(SurfacePoint(weights=w, lambda_star=v.lambda_star, metrics=metrics))
    return points
