"""Data-value and forecast-accuracy metrics.

KLD treats each half-hour-of-week slot of a load shape as an independent
Gaussian and sums the divergences (natural log).  WAPE is the sum of
absolute errors over the sum of actuals, chosen for stable behaviour when
net load crosses zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DlcProfile, LoadSeries

SIGMA_FLOOR = 1e-6  # guards zero-variance slots from short panels


@dataclass(frozen=True)
class KldScore:
    """Divergence of a group load shape from the system shape, in nats."""

    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("KLD must be >= 0")


@dataclass(frozen=True)
class WapeScore:
    """Weighted absolute percentage error as a dimensionless ratio."""

    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("WAPE must be >= 0")


def kld_profiles(group: DlcProfile, system: DlcProfile) -> KldScore:
    """Slot-wise Gaussian KLD of the group profile from the system profile.

    Both sigmas are floored at ``SIGMA_FLOOR`` before use.  The result is
    asymmetric: information gained by using group data instead of the
    system shape.
    """
    sig_c = np.maximum(group.sigma, SIGMA_FLOOR)
    sig_s = np.maximum(system.sigma, SIGMA_FLOOR)
    terms = (
        np.log(sig_s / sig_c)
        + (sig_c**2 + (system.mu - group.mu) ** 2) / (2.0 * sig_s**2)
        - 0.5
    )
    total = float(terms.sum())
    # Gibbs' inequality guarantees >= 0; clamp rounding residue
    return KldScore(max(total, 0.0))


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, LoadSeries) else x, dtype=float)


def wape(actual, forecast) -> WapeScore:
    """Sum of absolute errors over the (signed) sum of actuals.

    The denominator uses the signed total; an exactly-zero total is an
    error rather than a fallback.
    """
    a = _values(actual)
    f = _values(forecast)
    if a.shape != f.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {f.shape}")
    denom = a.sum()
    if denom == 0:
        raise ValueError("actuals sum to zero; WAPE undefined")
    return WapeScore(float(np.abs(a - f).sum() / denom))
