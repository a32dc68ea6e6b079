"""Piecewise-linear day-ahead and balancing price curves.

A curve discretizes total market demand onto a uniform grid; each level
carries the marginal price of the supply bracket containing it.  The LSE is
price-making: its own volume moves the system along the curve, which the
procurement model captures with binary bracket selectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .domain import _freeze

_SPACING_TOL = 1e-9


@dataclass(frozen=True)
class PriceCurve:
    """Uniformly spaced demand levels with a price per level."""

    demand_levels: np.ndarray  # MWh, strictly increasing, spacing == delta
    prices: np.ndarray  # currency/MWh
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "demand_levels", _freeze(self.demand_levels))
        object.__setattr__(self, "prices", _freeze(self.prices))
        if self.demand_levels.ndim != 1 or self.demand_levels.size == 0:
            raise ValueError("curve needs at least one demand level")
        if self.prices.shape != self.demand_levels.shape:
            raise ValueError("one price per demand level required")
        if not self.delta > 0:
            raise ValueError("level spacing must be > 0")
        gaps = np.diff(self.demand_levels)
        if np.any(np.abs(gaps - self.delta) > _SPACING_TOL):
            raise ValueError("demand levels must be uniformly spaced by delta")

    @property
    def n_levels(self) -> int:
        return self.demand_levels.size

    @property
    def lo(self) -> float:
        """Lowest demand covered (half a spacing below the first level)."""
        return float(self.demand_levels[0] - self.delta / 2.0)

    @property
    def hi(self) -> float:
        """Highest demand covered (half a spacing above the last level)."""
        return float(self.demand_levels[-1] + self.delta / 2.0)

    def shifted_prices(self, offset: float) -> "PriceCurve":
        return PriceCurve(self.demand_levels, self.prices + offset, self.delta)


def build_curve(bid_ladder, delta: float) -> PriceCurve:
    """Resample a cumulative supply stack onto a uniform grid.

    ``bid_ladder`` is a sequence of ``(volume, price)`` blocks with prices
    non-decreasing in cumulative volume.  Each grid level gets the marginal
    price of the bracket containing it (left-continuous step lookup).
    """
    ladder = [(float(v), float(p)) for v, p in bid_ladder]
    if not ladder:
        raise ValueError("bid ladder is empty")
    if any(v <= 0 for v, _ in ladder):
        raise ValueError("bid volumes must be > 0")
    prices = [p for _, p in ladder]
    if any(b < a for a, b in zip(prices, prices[1:])):
        raise ValueError("bid prices must be non-decreasing in volume (supply stack)")
    cum = np.cumsum([v for v, _ in ladder])
    total = cum[-1]
    n_levels = int(math.floor(total / delta + 1e-12))
    if n_levels < 1:
        raise ValueError(f"spacing {delta} exceeds total ladder volume {total}")
    levels = delta * np.arange(1, n_levels + 1)
    # the top level may overshoot the ladder total by rounding; clamp
    idx = np.minimum(np.searchsorted(cum, levels, side="left"), len(prices) - 1)
    return PriceCurve(levels, np.asarray(prices)[idx], delta)


def bracket_index(curve: PriceCurve, demand: float) -> int:
    """Index of the unique level within half a spacing of ``demand``.

    Exact half-spacing boundaries resolve to the lower index.  Demand
    outside the covered range is an error; the caller must widen the grid.
    """
    r = (demand - curve.demand_levels[0]) / curve.delta
    idx = int(math.ceil(r - 0.5))
    idx = min(max(idx, 0), curve.n_levels - 1)
    if abs(curve.demand_levels[idx] - demand) > curve.delta / 2.0 + _SPACING_TOL:
        raise ValueError(
            f"demand {demand} outside curve range [{curve.lo}, {curve.hi}]"
        )
    return idx


def price_at(curve: PriceCurve, demand: float) -> float:
    """Marginal price at a total-demand level."""
    return float(curve.prices[bracket_index(curve, demand)])


@dataclass(frozen=True)
class SystemExogenous:
    """Demand the rest of the system brings to each market.

    ``d_sys_base[t]`` is total day-ahead system demand excluding the LSE;
    ``d_imb_base[s, t]`` the signed system imbalance per scenario.
    """

    d_sys_base: np.ndarray  # (T,)
    d_imb_base: np.ndarray  # (S, T)

    def __post_init__(self):
        object.__setattr__(self, "d_sys_base", _freeze(self.d_sys_base))
        object.__setattr__(self, "d_imb_base", _freeze(self.d_imb_base))
        if self.d_sys_base.ndim != 1:
            raise ValueError("d_sys_base must be 1-D over periods")
        if self.d_imb_base.ndim != 2 or self.d_imb_base.shape[1] != self.d_sys_base.size:
            raise ValueError("d_imb_base must be (S, T) matching d_sys_base")


def read_ladder_csv(path) -> list[tuple[float, float]]:
    """Read ``volume_mwh,price`` bid blocks."""
    ladder = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ladder.append((float(row["volume_mwh"]), float(row["price"])))
    if not ladder:
        raise ValueError("ladder CSV contains no rows")
    return ladder


def write_curve_csv(curve: PriceCurve, path) -> None:
    """Dump a resampled curve for audit."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["demand_level_mwh", "price"])
        for level, price in zip(curve.demand_levels, curve.prices):
            writer.writerow([repr(float(level)), repr(float(price))])
