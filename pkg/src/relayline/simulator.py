"""Deployment simulator: walks the agent along the discretized line, builds
measurement sets, samples i.i.d. link shadowing, applies a decision source,
and records traces; plus a seeded Monte-Carlo driver over many sample paths.

At every step k the agent measures the links to all previously placed nodes
(the sink included) within B steps; only the link to the immediately previous
node drives the placement decision, the full set feeds learning sources.
Placement is forced when the gap reaches B.  The line is treated as infinite:
the horizon is a pure simulation cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, runtime_checkable

import numpy as np

from .acoe import PolicyThresholds
from .channel import CostWeights, PowerSet, PropagationParams
from .policy import Decision, MeasuredLink, decide

__all__ = [
    "DecisionSource",
    "ThresholdPolicySource",
    "MeasurementSet",
    "DeploymentTrace",
    "StepMetrics",
    "MonteCarloResult",
    "run_path",
    "monte_carlo",
    "measurement_coverage",
    "METRIC_COLUMNS",
]

METRIC_COLUMNS = (
    "power_per_step",
    "outage_per_step",
    "relays_per_step",
    "mean_placement_distance",
    "v1_estimate",
    "xi_out",
    "xi_relay",
)


@runtime_checkable
class DecisionSource(Protocol):
    """What the simulator needs from a policy or learner."""

    b: int
    wants_full_measurements: bool

    def decide(self, link: MeasuredLink) -> Decision: ...

    def update(self, measurements: "MeasurementSet") -> None: ...

    def snapshot(self) -> dict[str, float]: ...


class ThresholdPolicySource:
    """Fixed stationary threshold policy; no learning, no state."""

    wants_full_measurements = False
    stationary = True

    def __init__(self, thresholds: PolicyThresholds, weights: CostWeights) -> None:
        self.thresholds = thresholds
        self.weights = weights

    @property
    def b(self) -> int:
        return self.thresholds.b

    def decide(self, link: MeasuredLink) -> Decision:
        return decide(self.thresholds, self.weights, link)

    def update(self, measurements: "MeasurementSet") -> None:
        pass

    def snapshot(self) -> dict[str, float]:
        return {}


@dataclass
class MeasurementSet:
    """All links measured at one step: one independent draw per backward
    distance r with a node at position k - r (sink included)."""

    k: int
    r_prime: int
    links: dict[int, MeasuredLink]

    def __post_init__(self) -> None:
        if self.r_prime not in self.links:
            raise ValueError("the decision distance must be part of the measurement set")


@dataclass
class DeploymentTrace:
    """Per-relay tuples and optional per-step learner curves for one path."""

    b: int
    horizon: int
    relay_positions: np.ndarray
    relay_spacings: np.ndarray
    relay_powers: np.ndarray
    relay_outages: np.ndarray
    v1_curve: np.ndarray | None = None
    xi_out_curve: np.ndarray | None = None
    xi_relay_curve: np.ndarray | None = None

    def validate(self) -> None:
        u = self.relay_spacings
        if u.size:
            if u.min() < 1 or u.max() > self.b:
                raise ValueError("relay spacing outside 1..B")
            if int(u.sum()) != int(self.relay_positions[-1]):
                raise ValueError("spacings do not telescope to the last position")
            if np.any(np.diff(self.relay_positions) < 1):
                raise ValueError("relay positions must be strictly increasing")

    def n_relays_by_step(self) -> np.ndarray:
        """N_k for k = 1..horizon."""
        ks = np.arange(1, self.horizon + 1)
        return np.searchsorted(self.relay_positions, ks, side="right")

    def step_metrics(self, *, denominator: str = "steps") -> "StepMetrics":
        """Cumulative per-step averages as functions of k.

        ``denominator="steps"`` divides by k, so the steps of an incomplete
        final link dilute the averages; ``"placed_span"`` divides by the
        position of the last placed relay instead.
        """
        if denominator not in ("steps", "placed_span"):
            raise ValueError("denominator must be 'steps' or 'placed_span'")
        ks = np.arange(1, self.horizon + 1, dtype=float)
        n_k = self.n_relays_by_step().astype(float)
        cum_power = np.concatenate([[0.0], np.cumsum(self.relay_powers)])
        cum_outage = np.concatenate([[0.0], np.cumsum(self.relay_outages)])
        idx = self.n_relays_by_step()
        if denominator == "steps":
            denom = ks
        else:
            span = np.concatenate([[0], self.relay_positions]).astype(float)[idx]
            denom = np.where(span > 0, span, np.nan)
        with np.errstate(invalid="ignore", divide="ignore"):
            metrics = {
                "power_per_step": cum_power[idx] / denom,
                "outage_per_step": cum_outage[idx] / denom,
                "relays_per_step": n_k / denom,
                "mean_placement_distance": np.where(n_k > 0, denom / np.where(n_k > 0, n_k, 1.0), np.nan),
            }
        nan = np.full(self.horizon, np.nan)
        metrics["v1_estimate"] = self.v1_curve if self.v1_curve is not None else nan
        metrics["xi_out"] = self.xi_out_curve if self.xi_out_curve is not None else nan
        metrics["xi_relay"] = self.xi_relay_curve if self.xi_relay_curve is not None else nan
        return StepMetrics(k=np.arange(1, self.horizon + 1), values=metrics)


@dataclass
class StepMetrics:
    """Metric curves over k; columns follow METRIC_COLUMNS."""

    k: np.ndarray
    values: dict[str, np.ndarray]

    def column(self, name: str) -> np.ndarray:
        return self.values[name]


def _outage_scales(params: PropagationParams, b: int) -> np.ndarray:
    return np.array([params.outage_scale(r) for r in range(1, b + 1)])


def _measured_link(levels: tuple[float, ...], scale: float, r: int, w: float) -> MeasuredLink:
    pairs = tuple((g, -math.expm1(-scale / (g * w))) for g in levels)
    return MeasuredLink(r, pairs)


def run_path(
    source,
    params: PropagationParams,
    powers: PowerSet,
    horizon: int,
    seed,
    *,
    record_measurements: bool = False,
) -> DeploymentTrace | tuple[DeploymentTrace, list[MeasurementSet]]:
    """Simulate one deployment path of ``horizon`` steps.

    Per step: build the measurement set for I_k = {r <= B : node at k - r},
    draw one fresh shadowing gain per member (ascending r), let the source
    decide on the link to the previous node, commit, then hand the full set
    to the source's update hook (learning sources only).  The r' draw used
    for the decision is the same draw handed to the learner.

    Stationary threshold sources take a vectorized fast path that is
    decision-equivalent to the general loop.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if getattr(source, "stationary", False) and not record_measurements:
        return _run_path_stationary(source, params, powers, horizon, seed)
    return _run_path_general(
        source, params, powers, horizon, seed, record_measurements=record_measurements
    )


def _run_path_general(
    source,
    params: PropagationParams,
    powers: PowerSet,
    horizon: int,
    seed,
    *,
    record_measurements: bool,
):
    rng = np.random.default_rng(seed)
    b = source.b
    levels = powers.levels
    scales = _outage_scales(params, b)
    y_scale = params.sigma_db / 10.0
    wants_full = source.wants_full_measurements or record_measurements

    positions = [0]
    placed = {0}
    spacings: list[int] = []
    rel_powers: list[float] = []
    rel_outages: list[float] = []
    measurement_log: list[MeasurementSet] = []

    snap_keys = list(source.snapshot().keys())
    curves: dict[str, list[float]] = {key: [] for key in snap_keys}

    for k in range(1, horizon + 1):
        r_prime = k - positions[-1]
        if wants_full:
            i_k = [r for r in range(1, b + 1) if (k - r) in placed]
            draws = rng.standard_normal(len(i_k))
            links = {
                r: _measured_link(levels, scales[r - 1], r, 10.0 ** (draws[j] * y_scale))
                for j, r in enumerate(i_k)
            }
        else:
            w = 10.0 ** (rng.standard_normal() * y_scale)
            links = {r_prime: _measured_link(levels, scales[r_prime - 1], r_prime, w)}

        decision = source.decide(links[r_prime])
        if r_prime == b and not decision.place:
            raise RuntimeError("decision source must place at the maximum gap")
        if decision.place:
            positions.append(k)
            placed.add(k)
            spacings.append(r_prime)
            rel_powers.append(decision.power)
            rel_outages.append(decision.link_outage)

        if wants_full:
            ms = MeasurementSet(k=k, r_prime=r_prime, links=links)
            if source.wants_full_measurements:
                source.update(ms)
            if record_measurements:
                measurement_log.append(ms)
        for key in snap_keys:
            curves[key].append(source.snapshot()[key])

    trace = DeploymentTrace(
        b=b,
        horizon=horizon,
        relay_positions=np.asarray(positions[1:], dtype=np.int64),
        relay_spacings=np.asarray(spacings, dtype=np.int64),
        relay_powers=np.asarray(rel_powers, dtype=float),
        relay_outages=np.asarray(rel_outages, dtype=float),
        v1_curve=np.asarray(curves["v1_estimate"]) if "v1_estimate" in curves else None,
        xi_out_curve=np.asarray(curves["xi_out"]) if "xi_out" in curves else None,
        xi_relay_curve=np.asarray(curves["xi_relay"]) if "xi_relay" in curves else None,
    )
    trace.validate()
    if record_measurements:
        return trace, measurement_log
    return trace


def place_threshold_shadowing(
    params: PropagationParams,
    powers: PowerSet,
    weights: CostWeights,
    thresholds: PolicyThresholds,
) -> np.ndarray:
    """Shadowing gain above which the policy places, per gap r = 1..B-1.

    The single-stage cost is non-increasing in w, so the place region is
    an upper interval [w*, inf); w* is found by bisection in dB.  +inf marks
    a gap where placement never happens, 0.0 one where it always does.
    """
    b = thresholds.b
    levels = powers.as_array()
    out = np.empty(max(b - 1, 0))
    for r in range(1, b):
        c_th = thresholds.c_th[r - 1]
        scale = params.outage_scale(r)

        def cost(y_db: float) -> float:
            w = 10.0 ** (y_db / 10.0)
            totals = levels + weights.xi_out * (-np.expm1(-scale / (levels * w)))
            return float(totals.min()) + weights.xi_relay

        c_best = powers.p_min + weights.xi_relay
        c_worst = powers.p_min + weights.xi_out + weights.xi_relay
        if c_th < c_best or c_th < cost(600.0):
            out[r - 1] = np.inf
            continue
        if c_th >= c_worst or cost(-600.0) <= c_th:
            out[r - 1] = 0.0
            continue
        lo, hi = -600.0, 600.0
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            if cost(mid) <= c_th:
                hi = mid
            else:
                lo = mid
        out[r - 1] = 10.0 ** (hi / 10.0)
    return out


def _run_path_stationary(
    source: ThresholdPolicySource,
    params: PropagationParams,
    powers: PowerSet,
    horizon: int,
    seed,
) -> DeploymentTrace:
    rng = np.random.default_rng(seed)
    b = source.b
    w_star = place_threshold_shadowing(params, powers, source.weights, source.thresholds)
    y_scale = params.sigma_db / 10.0
    ws = 10.0 ** (rng.standard_normal(horizon) * y_scale)

    positions: list[int] = []
    spacings: list[int] = []
    place_w: list[float] = []
    gap = 1
    wl = ws.tolist()
    for k in range(1, horizon + 1):
        w = wl[k - 1]
        if gap == b or w >= w_star[gap - 1]:
            positions.append(k)
            spacings.append(gap)
            place_w.append(w)
            gap = 1
        else:
            gap += 1

    spac_arr = np.asarray(spacings, dtype=np.int64)
    if spac_arr.size:
        levels = powers.as_array()
        scales = _outage_scales(params, b)
        q = -np.expm1(-scales[spac_arr - 1, None] / (levels[None, :] * np.asarray(place_w)[:, None]))
        totals = levels[None, :] + source.weights.xi_out * q
        gi = np.argmin(totals, axis=1)
        rows = np.arange(len(spacings))
        rel_powers = levels[gi]
        rel_outages = q[rows, gi]
    else:
        rel_powers = np.empty(0)
        rel_outages = np.empty(0)

    trace = DeploymentTrace(
        b=b,
        horizon=horizon,
        relay_positions=np.asarray(positions, dtype=np.int64),
        relay_spacings=spac_arr,
        relay_powers=np.asarray(rel_powers, dtype=float),
        relay_outages=np.asarray(rel_outages, dtype=float),
    )
    trace.validate()
    return trace


def measurement_coverage(trace: DeploymentTrace) -> np.ndarray:
    """Update counts nu(r, k): how many steps up to k measured distance r.

    Every placed node (sink included) contributes one measurement at each
    r = 1..B as the agent passes it, so nu(r, k) >= floor((k - B) / B); that
    bound is asserted.
    """
    b = trace.b
    ks = np.arange(1, trace.horizon + 1)
    nodes = np.concatenate([[0], trace.relay_positions])
    nu = np.empty((b, trace.horizon), dtype=np.int64)
    for r in range(1, b + 1):
        nu[r - 1] = np.searchsorted(nodes, ks - r, side="right")
    floor_bound = (ks - b) // b
    if np.any(nu < floor_bound[None, :]):
        raise AssertionError("coverage bound nu(r,k) >= floor((k-B)/B) violated")
    return nu


@dataclass
class MonteCarloResult:
    """Pathwise-averaged metric curves with standard errors."""

    n_paths: int
    horizon: int
    k: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]


def monte_carlo(
    make_source: Callable[[], object],
    params: PropagationParams,
    powers: PowerSet,
    n_paths: int,
    horizon: int,
    master_seed: int = 0,
    *,
    denominator: str = "steps",
) -> MonteCarloResult:
    """Average the step-metric curves of ``n_paths`` independent paths.

    Path i runs on the substream seeded by (master_seed, i), so results are
    reproducible and paths are independent.  Standard errors are the sample
    standard deviation of the per-path curves divided by sqrt(n_paths),
    NaN-aware (mean placement distance is undefined before the first relay).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    total = {name: np.zeros(horizon) for name in METRIC_COLUMNS}
    total_sq = {name: np.zeros(horizon) for name in METRIC_COLUMNS}
    count = {name: np.zeros(horizon, dtype=np.int64) for name in METRIC_COLUMNS}
    for i in range(n_paths):
        source = make_source()
        trace = run_path(source, params, powers, horizon, [master_seed, i])
        metrics = trace.step_metrics(denominator=denominator)
        for name in METRIC_COLUMNS:
            col = metrics.values[name]
            ok = ~np.isnan(col)
            total[name][ok] += col[ok]
            total_sq[name][ok] += col[ok] ** 2
            count[name][ok] += 1

    mean = {}
    stderr = {}
    with np.errstate(invalid="ignore", divide="ignore"):
        for name in METRIC_COLUMNS:
            n = count[name].astype(float)
            m = np.where(n > 0, total[name] / np.where(n > 0, n, 1.0), np.nan)
            var = np.where(
                n > 1,
                (total_sq[name] - n * m**2) / np.where(n > 1, n - 1.0, 1.0),
                np.nan,
            )
            mean[name] = m
            stderr[name] = np.sqrt(np.maximum(var, 0.0) / np.where(n > 0, n, np.nan))
    return MonteCarloResult(
        n_paths=n_paths,
        horizon=horizon,
        k=np.arange(1, horizon + 1),
        mean=mean,
        stderr=stderr,
    )
