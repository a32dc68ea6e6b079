"""Toolkit for valuing privacy-protected smart meter data.

Privatizes aggregated half-hourly load with a discounted Laplace mechanism,
forecasts load under four settlement schemes, and prices the resulting
forecast error through a two-stage CVaR-constrained procurement problem for
a price-making load-serving entity.
"""

from .domain import (
    DlcProfile,
    LoadSeries,
    MeterPanel,
    SettlementScheme,
    aggregate_panel,
    compute_dlc,
    daily_energy,
    settled_load,
)
from .metrics import KldScore, WapeScore, kld_profiles, wape
from .privacy import (
    NoiseScale,
    PrivacyParams,
    SensitivityProfile,
    gamma_noise_share,
    global_sensitivity,
    noise_scale,
    privatize_aggregate,
)

__version__ = "0.1.0"

__all__ = [
    "DlcProfile",
    "KldScore",
    "LoadSeries",
    "MeterPanel",
    "NoiseScale",
    "PrivacyParams",
    "SensitivityProfile",
    "SettlementScheme",
    "WapeScore",
    "aggregate_panel",
    "compute_dlc",
    "daily_energy",
    "gamma_noise_share",
    "global_sensitivity",
    "kld_profiles",
    "noise_scale",
    "privatize_aggregate",
    "settled_load",
    "wape",
]
