"""Shared instance generators for the procurement tests."""

import numpy as np

from dpmeter.market import PriceCurve, SystemExogenous
from dpmeter.procurement import ProcurementInstance
from dpmeter.scenario import ErrorScenarioSet


def uniform_curve(lo: float, hi: float, n_levels: int, prices) -> PriceCurve:
    """Curve whose coverage hull is exactly [lo, hi]."""
    delta = (hi - lo) / n_levels
    levels = lo + delta / 2.0 + delta * np.arange(n_levels)
    return PriceCurve(levels, np.asarray(prices, dtype=float), delta)


def random_instance(rng, T=None, S=None, B=None, F=None, beta=None, alpha=0.9):
    """Small random procurement instance with guaranteed grid coverage."""
    T = T or int(rng.integers(1, 4))
    S = S or int(rng.integers(1, 3))
    B = B or int(rng.integers(1, 4))
    F = F or int(rng.integers(1, 4))
    beta = beta if beta is not None else float(rng.uniform(0, 2))
    d_fore = rng.uniform(5, 20, T)
    errors = rng.normal(0, rng.uniform(0.5, 2.0), (S, T))
    probs = rng.uniform(0.5, 1.5, S)
    probs /= probs.sum()
    scen = ErrorScenarioSet(errors, probs)
    lo = -rng.uniform(2, 8, T)
    hi = rng.uniform(2, 8, T)
    d_sys = rng.uniform(50, 80, T)
    d_imb = rng.normal(0, 3, (S, T))
    k_mat = d_fore[None, :] + errors
    da_lo = float((d_sys + lo).min()) - 1.0
    da_hi = float((d_sys + hi).max()) + 1.0
    da_prices = np.sort(rng.uniform(20, 90, B))
    da_curve = uniform_curve(da_lo, da_hi, B, da_prices)
    imb_lo = float((d_imb + k_mat - hi[None, :]).min()) - 1.0
    imb_hi = float((d_imb + k_mat - lo[None, :]).max()) + 1.0
    base_prices = np.sort(rng.uniform(10, 120, F))
    bal_curves = tuple(
        uniform_curve(imb_lo, imb_hi, F, base_prices + rng.normal(0, 5))
        for _ in range(S)
    )
    return ProcurementInstance(
        d_fore=d_fore,
        scenarios=scen,
        da_curve=da_curve,
        bal_curves=bal_curves,
        exogenous=SystemExogenous(d_sys, d_imb),
        beta=beta,
        alpha=alpha,
        d_da_lower=lo,
        d_da_upper=hi,
    )
