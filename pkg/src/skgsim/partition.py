"""Isohypse partition: position classes with equal binned expected gain at Eve.

With continuous shadowing no two positions share an exact gain, so "equal
gain at Eve" is realized by binning the expected Eve gains with width
delta_e. Moving inside one class changes Eve's expected observation by at
most delta_e, which the experiments keep far below her estimation noise.
"""
from __future__ import annotations

import math

from dataclasses import dataclass

import numpy as np

from .channel import GainMap, expected_gain_factor, linear_gain


@dataclass(frozen=True)
class IsohypsePartition:
    """Disjoint cover of all grid positions by classes of binned Eve gain.

    classes[l] holds the position indices of class l; class_gains[l] is the
    representative gain (bin center). Classes are sorted by gain ascending.
    """

    classes: tuple
    class_gains: np.ndarray
    delta_e: float
    total_positions: int

    def __post_init__(self):
        if len(self.classes) < 1:
            raise ValueError("partition must have at least one class")
        self.class_gains.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.classes])


# Nominal operating point anchoring the default secrecy margin: minimum SNR
# 10 dB with 10 pilots. Eve's estimation-noise floor there is approximately
# g_min(Bob) / sqrt(SNR_lin * K) in the poor-scattering (large kappa) limit.
REF_SNR_LIN = 10.0
REF_PILOTS = 10.0
NOISE_FRACTION = 0.1


def auto_delta(eve_map: GainMap, bob_map: GainMap | None = None,
               noise_fraction: float = NOISE_FRACTION, bins: int = 256) -> float:
    """Default bin width for "equal gain at Eve".

    Sized as a small fraction of Eve's estimation-noise floor at the nominal
    operating point, so the within-class gain spread stays below what Eve can
    resolve there. The anchor uses the path-loss-only minimum Bob gain and
    the kappa-dependent expected-gain factor: bin edges then depend only on
    scene geometry (not on the shadowing draw, SNR, pilot count, or kappa),
    which keeps capacity trends across those parameters clean. Without a Bob
    map it falls back to the Eve gain range split into `bins`.
    """
    if bob_map is not None:
        factor = expected_gain_factor(bob_map.kappa)
        m_pl_min = factor * float(linear_gain(bob_map.a_pl_db.max()))
        return noise_fraction * m_pl_min / math.sqrt(REF_SNR_LIN * REF_PILOTS)
    spread = float(eve_map.m.max() - eve_map.m.min())
    if spread == 0.0:
        # constant map: any positive width yields the single-class partition
        return max(abs(float(eve_map.m[0])), 1.0)
    return spread / bins


def build_partition(eve_map: GainMap, delta_e: float) -> IsohypsePartition:
    """Group positions by floor(m_eve / delta_e); bin centers represent classes."""
    if delta_e <= 0:
        raise ValueError("delta_e must be positive")
    m = eve_map.m
    bins = np.floor(m / delta_e).astype(np.int64)
    order = np.argsort(bins, kind="stable")
    sorted_bins = bins[order]
    boundaries = np.flatnonzero(np.diff(sorted_bins)) + 1
    groups = np.split(order, boundaries)
    classes = tuple(np.sort(g) for g in groups)
    for c in classes:
        c.setflags(write=False)
    uniq = sorted_bins[np.concatenate([[0], boundaries])] if len(groups) > 1 else sorted_bins[:1]
    gains = (uniq.astype(float) + 0.5) * delta_e
    return IsohypsePartition(
        classes=classes,
        class_gains=gains,
        delta_e=delta_e,
        total_positions=m.size,
    )


def largest_classes(partition: IsohypsePartition, k: int) -> list[int]:
    """Indices of the k largest classes; ties go to the smaller class index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sizes = partition.sizes
    order = sorted(range(partition.num_classes), key=lambda l: (-sizes[l], l))
    return order[: min(k, partition.num_classes)]
