"""Operating-point calibration: Rician factor and noise from target SNR.

The experiment fixes two dB-valued knobs: rho_db = 10 log10(kappa / g_max),
the fading-versus-gain tradeoff, and SNR_min, the smallest pilot SNR across
the grid. Both are inverted here into the physical parameters kappa and
sigma_w^2 used by the channel model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import GainMap, estimation_variance


@dataclass(frozen=True)
class CalibrationParams:
    """Target operating point: minimum SNR (dB), rho (dB), pilot count K."""

    snr_min_db: float
    rho_db: float
    pilots: int

    def __post_init__(self):
        if self.pilots < 1:
            raise ValueError("pilot count must be >= 1")


def kappa_from_rho(rho_db: float, g_max: float) -> float:
    """Invert rho_db = 10 log10(kappa / g_max) for kappa."""
    if g_max <= 0:
        raise ValueError("g_max must be positive")
    return g_max * 10.0 ** (rho_db / 10.0)


def rho_from_kappa(kappa: float, g_max: float) -> float:
    if g_max <= 0 or kappa <= 0:
        raise ValueError("kappa and g_max must be positive")
    return 10.0 * math.log10(kappa / g_max)


def snr_linear(g, kappa: float, sigma_w2: float):
    """Pilot SNR 2 g^2 kappa / (g^2 + sigma_w^2 (1 + kappa)) per position."""
    g = np.asarray(g, dtype=float)
    return 2.0 * g**2 * kappa / (g**2 + sigma_w2 * (1.0 + kappa))


def noise_from_snr_min(snr_min_db: float, kappa: float, gain_map: GainMap) -> float:
    """Noise variance making the worst grid position hit the target SNR.

    The SNR is increasing in g, so the minimum is at g_min; inverting the SNR
    expression there gives sigma_w^2 = g_min^2 (2 kappa / s - 1) / (1 + kappa)
    with s the linear target. The target saturates at 2 kappa as noise
    vanishes; targets at or above that are infeasible.
    """
    if gain_map.g.size == 0:
        raise ValueError("gain map is empty")
    s = 10.0 ** (snr_min_db / 10.0)
    if s >= 2.0 * kappa:
        raise ValueError(
            f"SNR_min {snr_min_db:.2f} dB is infeasible: the pilot SNR saturates at "
            f"2*kappa = {10.0 * math.log10(2.0 * kappa):.2f} dB as noise vanishes"
        )
    g_min = gain_map.g_min
    return g_min**2 * (2.0 * kappa / s - 1.0) / (1.0 + kappa)


def estimation_sigma(g: float, kappa: float, sigma_w2: float, pilots: int) -> float:
    """Std of the pilot-averaged gain estimate at one position."""
    return float(np.sqrt(estimation_variance(g, kappa, sigma_w2, pilots)))
