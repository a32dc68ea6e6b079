"""Forecast-error scenarios calibrated to a backtest WAPE.

Errors are drawn independently per period from zero-mean Gaussians whose
scale is chosen so the expected absolute error reproduces the backtest
WAPE; probabilities are uniform Monte-Carlo weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .domain import LoadSeries, _freeze
from .metrics import WapeScore


@dataclass(frozen=True)
class ErrorScenarioSet:
    """Sampled forecast-error paths with per-scenario probabilities."""

    errors: np.ndarray  # (S, T) deviations, same unit as the forecast
    probabilities: np.ndarray  # (S,)

    def __post_init__(self):
        object.__setattr__(self, "errors", _freeze(self.errors))
        object.__setattr__(self, "probabilities", _freeze(self.probabilities))
        if self.errors.ndim != 2 or self.errors.shape[0] < 1:
            raise ValueError("errors must be a non-empty (S, T) matrix")
        if self.probabilities.shape != (self.errors.shape[0],):
            raise ValueError("one probability per scenario required")
        if np.any(self.probabilities <= 0):
            raise ValueError("scenario probabilities must be > 0")
        if abs(self.probabilities.sum() - 1.0) > 1e-9:
            raise ValueError("scenario probabilities must sum to 1")

    @property
    def n_scenarios(self) -> int:
        return self.errors.shape[0]

    @property
    def n_periods(self) -> int:
        return self.errors.shape[1]

    def scaled(self, factor: float) -> "ErrorScenarioSet":
        """Unit change (e.g. kWh to MWh); probabilities unchanged."""
        return ErrorScenarioSet(self.errors * factor, self.probabilities)


def calibrate_sigma(wape: WapeScore | float, forecast: LoadSeries | np.ndarray) -> np.ndarray:
    """Per-period error std devs reproducing the backtest WAPE in expectation.

    ``sigma_t = wape * |forecast_t| * sqrt(pi/2)`` so that the half-normal
    mean ``E|N(0, sigma_t)|`` equals ``wape * |forecast_t|``.
    """
    w = wape.value if isinstance(wape, WapeScore) else float(wape)
    if w < 0:
        raise ValueError("WAPE must be >= 0")
    values = np.asarray(forecast.values if isinstance(forecast, LoadSeries) else forecast)
    return w * np.abs(values) * math.sqrt(math.pi / 2.0)


def generate_scenarios(
    forecast: LoadSeries | np.ndarray,
    wape: WapeScore | float,
    n_scenarios: int,
    seed: int,
) -> ErrorScenarioSet:
    """Draw ``n_scenarios`` i.i.d. Gaussian error paths around a forecast."""
    if n_scenarios < 1:
        raise ValueError("need at least one scenario")
    sigma = calibrate_sigma(wape, forecast)
    rng = np.random.default_rng(seed)
    errors = rng.normal(0.0, 1.0, size=(n_scenarios, sigma.size)) * sigma
    probs = np.full(n_scenarios, 1.0 / n_scenarios)
    return ErrorScenarioSet(errors, probs)


def scale_to_system(series: LoadSeries, share: float) -> LoadSeries:
    """Scale an LSE-level series up to system level given its load share."""
    if not 0 < share <= 1:
        raise ValueError("share must lie in (0, 1]")
    return series.replace_values(series.values / share)


def write_scenario_csv(scenarios: ErrorScenarioSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "period_index", "err_kwh", "prob"])
        for s in range(scenarios.n_scenarios):
            p = repr(float(scenarios.probabilities[s]))
            for t in range(scenarios.n_periods):
                writer.writerow([s, t, repr(float(scenarios.errors[s, t])), p])


def read_scenario_csv(path) -> ErrorScenarioSet:
    rows: dict[int, dict[int, float]] = {}
    probs: dict[int, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            s = int(row["scenario"])
            t = int(row["period_index"])
            rows.setdefault(s, {})[t] = float(row["err_kwh"])
            probs[s] = float(row["prob"])
    if not rows:
        raise ValueError("scenario CSV contains no rows")
    n_s = max(rows) + 1
    n_t = max(max(d) for d in rows.values()) + 1
    errors = np.zeros((n_s, n_t))
    for s, d in rows.items():
        if len(d) != n_t:
            raise ValueError(f"scenario {s} does not cover all periods")
        errors[s] = [d[t] for t in range(n_t)]
    prob = np.array([probs[s] for s in range(n_s)])
    return ErrorScenarioSet(errors, prob)
