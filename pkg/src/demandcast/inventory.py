"""Forecast-driven order-up-to replenishment replay over a test window.

Each review raises the inventory position to the forecast demand over the
protection interval (lead time + review period) plus a safety margin sized
in units of the supplying model's training-residual standard deviation.
Unmet demand is lost, not backordered.  The daily ledger satisfies
closing = opening + received - sold and lost = demand - sold on every day.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReplenishmentPolicy:
    review_period: int = 1
    safety_factor: float = 0.5  # in units of forecast-error std
    lead_time: int = 1
    initial_stock: float = 0.0
    overstock_multiplier: float = 2.0  # x trailing-7-day mean demand
    holding_cost: float = 1.0
    emergency_cost: float = 10.0

    def __post_init__(self) -> None:
        if self.review_period < 1 or self.lead_time < 0:
            raise ValueError("need review_period >= 1 and lead_time >= 0")
        if self.safety_factor < 0.0 or self.initial_stock < 0.0:
            raise ValueError("safety_factor and initial_stock must be >= 0")


@dataclass
class InventoryOutcome:
    opening: np.ndarray
    ordered: np.ndarray
    received: np.ndarray
    demand: np.ndarray
    sold: np.ndarray
    lost_sales: np.ndarray
    closing: np.ndarray
    overstock_rate: float
    stockout_rate: float
    cost_index: float
    forecast_mae: float
    mean_demand: float
    negative_forecast_days: int

    @property
    def days(self) -> int:
        return len(self.demand)

    @property
    def forecast_accuracy(self) -> float:
        """100 * (1 - MAE / mean demand); one operationalisation of accuracy."""
        if self.mean_demand == 0.0:
            return 0.0
        return 100.0 * (1.0 - self.forecast_mae / self.mean_demand)


def simulate(
    demand: np.ndarray,
    forecast: np.ndarray,
    policy: ReplenishmentPolicy = ReplenishmentPolicy(),
    sigma_hat: float = 0.0,
) -> InventoryOutcome:
    """Replay the order-up-to policy day by day.

    Day sequence: arrivals land, a review (every ``review_period`` days,
    starting day 0) places an order up to forecast-over-protection-interval
    plus safety stock, a zero lead time lands that order immediately, then
    demand consumes on-hand stock.  Negative forecast values are clamped to
    zero and counted.
    """
    demand = np.asarray(demand, dtype=np.float64)
    forecast = np.asarray(forecast, dtype=np.float64)
    if len(demand) != len(forecast):
        raise ValueError("demand and forecast must align on the test window")
    n = len(demand)
    negative_days = int((forecast < 0).sum())
    if negative_days:
        logger.warning("clamped %d negative forecast values to zero", negative_days)
    fc = np.maximum(forecast, 0.0)

    opening = np.zeros(n)
    ordered = np.zeros(n)
    received = np.zeros(n)
    sold = np.zeros(n)
    lost = np.zeros(n)
    closing = np.zeros(n)

    on_hand = float(policy.initial_stock)
    pipeline: dict[int, float] = {}
    protection = policy.lead_time + policy.review_period

    for t in range(n):
        opening[t] = on_hand
        arrived = pipeline.pop(t, 0.0)
        if t % policy.review_period == 0:
            target = fc[t : t + protection].sum() + policy.safety_factor * sigma_hat
            position = on_hand + arrived + sum(pipeline.values())
            qty = max(0.0, target - position)
            ordered[t] = qty
            if qty > 0.0:
                if policy.lead_time == 0:
                    arrived += qty
                else:
                    pipeline[t + policy.lead_time] = pipeline.get(t + policy.lead_time, 0.0) + qty
        received[t] = arrived
        on_hand += arrived
        sold[t] = min(demand[t], on_hand)
        lost[t] = demand[t] - sold[t]
        on_hand -= sold[t]
        closing[t] = on_hand

    trailing = np.empty(n)
    for t in range(n):
        lo = max(0, t - 6)
        trailing[t] = demand[lo : t + 1].mean()
    overstock_days = closing > policy.overstock_multiplier * trailing

    return InventoryOutcome(
        opening=opening,
        ordered=ordered,
        received=received,
        demand=demand,
        sold=sold,
        lost_sales=lost,
        closing=closing,
        overstock_rate=float(overstock_days.mean()) if n else 0.0,
        stockout_rate=float((lost > 0).mean()) if n else 0.0,
        cost_index=float(policy.holding_cost * closing.sum() + policy.emergency_cost * lost.sum()),
        forecast_mae=float(np.abs(demand - forecast).mean()) if n else 0.0,
        mean_demand=float(demand.mean()) if n else 0.0,
        negative_forecast_days=negative_days,
    )


def pool_outcomes(outcomes: Sequence[InventoryOutcome]) -> InventoryOutcome:
    """Combine per-series outcomes into portfolio-level rates and costs."""
    if not outcomes:
        raise ValueError("no outcomes to pool")

    def cat(name: str) -> np.ndarray:
        return np.concatenate([getattr(o, name) for o in outcomes])

    demand = cat("demand")
    closing = cat("closing")
    lost = cat("lost_sales")
    total_days = sum(o.days for o in outcomes)
    overstock_days = sum(o.overstock_rate * o.days for o in outcomes)
    mae = float(
        sum(o.forecast_mae * o.days for o in outcomes) / total_days
    )
    return InventoryOutcome(
        opening=cat("opening"),
        ordered=cat("ordered"),
        received=cat("received"),
        demand=demand,
        sold=cat("sold"),
        lost_sales=lost,
        closing=closing,
        overstock_rate=float(overstock_days / total_days),
        stockout_rate=float((lost > 0).mean()),
        cost_index=float(sum(o.cost_index for o in outcomes)),
        forecast_mae=mae,
        mean_demand=float(demand.mean()),
        negative_forecast_days=sum(o.negative_forecast_days for o in outcomes),
    )


@dataclass
class ImpactRow:
    metric: str
    before: float
    after: float
    improvement_pct: float
    direction: str  # "reduction" or "increase"


@dataclass
class ImpactTable:
    baseline_name: str
    rows: dict[str, list[ImpactRow]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        for model, rows in self.rows.items():
            lines.append(f"{model} vs {self.baseline_name}:")
            for r in rows:
                lines.append(
                    f"  {r.metric:>18}: {r.before:10.4f} -> {r.after:10.4f}"
                    f"  ({r.improvement_pct:6.1f}% {r.direction})"
                )
        return "\n".join(lines)


def _pct_change(before: float, after: float, lower_is_better: bool) -> tuple[float, str]:
    if before == 0.0:
        return 0.0, "reduction" if lower_is_better else "increase"
    if lower_is_better:
        return 100.0 * (before - after) / before, "reduction"
    return 100.0 * (after - before) / before, "increase"


def impact_table(
    outcomes: Mapping[str, InventoryOutcome], baseline: InventoryOutcome, baseline_name: str = "naive"
) -> ImpactTable:
    """Before/after rates per model against the reference forecast."""
    table = ImpactTable(baseline_name=baseline_name)
    for model, outcome in outcomes.items():
        rows = []
        for metric, lower_better in (
            ("overstock_rate", True),
            ("stockout_rate", True),
            ("forecast_accuracy", False),
            ("cost_index", True),
        ):
            before = getattr(baseline, metric)
            after = getattr(outcome, metric)
            pct, direction = _pct_change(before, after, lower_better)
            rows.append(
                ImpactRow(
                    metric=metric,
                    before=float(before),
                    after=float(after),
                    improvement_pct=float(pct),
                    direction=direction,
                )
            )
        table.rows[model] = rows
    return table
