"""End-to-end key generation protocol as a Monte Carlo simulation.

Training maps, position sampling from the optimized distribution, noisy gain
estimation at Bob and Eve, Gray-coded key distillation, and empirical
verification that Eve's observations carry no key information. Information
reconciliation and privacy amplification are intentionally absent: the raw
symbol disagreement rate quantifies the former's burden and the measured
leakage shows the latter is unnecessary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .capacity import CapacityResult, Quantizer, optimize_over_isohypses, PositionDistribution
from .channel import (
    ChannelParams,
    GainMap,
    PathlossParams,
    ShadowingField,
    build_gain_map,
    sample_received_gains,
)
from .config import ExperimentConfig
from .geometry import PositionGrid
from .partition import auto_delta, build_partition
from .scenario import build_scenario
from .seeding import component_rng

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Level-to-bit codebook

def gray_codes(num_levels: int) -> np.ndarray:
    """Binary-reflected Gray code for each level index."""
    idx = np.arange(num_levels)
    return idx ^ (idx >> 1)


def bits_per_level(num_levels: int) -> int:
    if num_levels < 1:
        raise ValueError("need at least one level")
    return (num_levels - 1).bit_length()


def levels_to_bits(levels, num_levels: int) -> np.ndarray:
    """Flat bit array: ceil(log2 Q) Gray-coded bits per level, MSB first."""
    levels = np.asarray(levels, dtype=np.int64)
    b = bits_per_level(num_levels)
    if b == 0:
        return np.zeros(0, dtype=np.uint8)
    codes = gray_codes(num_levels)[levels]
    shifts = np.arange(b - 1, -1, -1)
    return ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


# ---------------------------------------------------------------------------
# Protocol phases

def run_training(
    grid: PositionGrid,
    bob_field: ShadowingField,
    eve_field: ShadowingField,
    pl: PathlossParams,
    ch: ChannelParams,
    training_pilots: int | None = None,
    rng=None,
) -> tuple[GainMap, GainMap]:
    """Training phase: the gain maps Alice learns by visiting every position.

    By default training is treated as exact, matching the quantity the
    capacity optimization uses. With training_pilots set, each map's expected
    gains are replaced by noisy pilot estimates. Eve hears the same training
    pilots, so the returned Eve map is also exactly what Eve knows.
    """
    bob_map = build_gain_map(grid, bob_field.receiver, bob_field, pl, ch)
    eve_map = build_gain_map(grid, eve_field.receiver, eve_field, pl, ch)
    if training_pilots is not None:
        rng = np.random.default_rng(rng)
        bob_map = bob_map.with_estimated_m(
            sample_received_gains(bob_map.g, ch, training_pilots, rng)
        )
        eve_map = eve_map.with_estimated_m(
            sample_received_gains(eve_map.g, ch, training_pilots, rng)
        )
    return bob_map, eve_map


@dataclass(frozen=True)
class TrajectoryPlan:
    """Positions Alice will transmit from, drawn i.i.d. from a distribution."""

    positions: np.ndarray
    distribution: PositionDistribution
    seed: object = None

    def __post_init__(self):
        self.positions.setflags(write=False)
        if self.positions.size and not np.isin(self.positions, self.distribution.support).all():
            raise ValueError("trajectory leaves the distribution support")

    @property
    def num_transmissions(self) -> int:
        return self.positions.size


def sample_trajectory(dist: PositionDistribution, n: int, seed) -> TrajectoryPlan:
    if n < 0:
        raise ValueError("number of transmissions must be >= 0")
    rng = np.random.default_rng(seed)
    if n == 0:
        positions = np.zeros(0, dtype=np.int64)
    else:
        positions = rng.choice(dist.support, size=n, p=dist.probabilities)
    return TrajectoryPlan(positions=positions, distribution=dist, seed=seed)


@dataclass(frozen=True)
class KeyMaterial:
    """Raw correlated sequences observed by the three parties."""

    alice_values: np.ndarray   # expected gains m at Bob, one per transmission
    alice_levels: np.ndarray
    bob_estimates: np.ndarray
    bob_levels: np.ndarray
    eve_values: np.ndarray     # Eve's raw noisy estimates
    alice_bits: np.ndarray
    bob_bits: np.ndarray

    def __post_init__(self):
        n = self.alice_values.size
        for arr in (self.alice_levels, self.bob_estimates, self.bob_levels, self.eve_values):
            if arr.size != n:
                raise ValueError("key material sequences must share one length")


def execute_transmissions(
    plan: TrajectoryPlan,
    bob_map: GainMap,
    eve_map: GainMap,
    kappa: float,
    sigma_w2: float,
    pilots: int,
    quantizer: Quantizer,
    rng_bob,
    rng_eve,
) -> KeyMaterial:
    """Simulate the N transmissions: estimation at Bob and Eve, distillation.

    Bob and Eve observe independent fading and noise; Alice keeps the exact
    expected gains of the positions she visited.
    """
    pos = plan.positions
    ch = ChannelParams(kappa=kappa, sigma_w2=sigma_w2)
    bob_est = sample_received_gains(bob_map.g[pos], ch, pilots, rng_bob)
    eve_est = sample_received_gains(eve_map.g[pos], ch, pilots, rng_eve)
    alice_m = bob_map.m[pos]
    alice_levels = quantizer.quantize(alice_m)
    bob_levels = quantizer.quantize(bob_est)
    q = quantizer.num_levels
    return KeyMaterial(
        alice_values=alice_m,
        alice_levels=alice_levels,
        bob_estimates=bob_est,
        bob_levels=bob_levels,
        eve_values=eve_est,
        alice_bits=levels_to_bits(alice_levels, q),
        bob_bits=levels_to_bits(bob_levels, q),
    )


# ---------------------------------------------------------------------------
# Empirical information measures

def empirical_entropy_bits(values) -> float:
    """Plug-in entropy of a discrete sequence."""
    _, counts = np.unique(np.asarray(values), return_counts=True)
    p = counts / counts.sum()
    return float(-xlogy(p, p).sum() / LN2)


def miller_madow_bias(k_a: int, k_b: int, n: int) -> float:
    """First-order positive bias of plug-in MI over k_a x k_b cells, in bits."""
    return (k_a - 1) * (k_b - 1) / (2.0 * n * LN2)


def _bin_sequence(values: np.ndarray, bins: int) -> tuple[np.ndarray, int]:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.size, dtype=np.int64), 1
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1), bins


def leakage_details(values_a, values_b, bins_b: int):
    """Bias-corrected plug-in MI plus the cell counts behind the correction.

    Returns (leak_bits, k_a, k_b, bias_bits): k_a distinct symbols observed in
    the first sequence, k_b occupied bins of the second.
    """
    a = np.asarray(values_a)
    b = np.asarray(values_b, dtype=float)
    if a.size != b.size:
        raise ValueError("sequences must have equal length")
    if a.size < 100:
        raise ValueError("leakage estimation needs at least 100 samples")
    _, a_idx = np.unique(a, return_inverse=True)
    k_a = int(a_idx.max()) + 1
    b_idx, nb = _bin_sequence(b, bins_b)
    joint = np.bincount(a_idx * nb + b_idx, minlength=k_a * nb).reshape(k_a, nb)
    n = a.size
    p_ab = joint / n
    p_a = p_ab.sum(axis=1)
    p_b = p_ab.sum(axis=0)
    k_b = int(np.count_nonzero(p_b))
    h_a = -xlogy(p_a, p_a).sum()
    h_b = -xlogy(p_b, p_b).sum()
    h_ab = -xlogy(p_ab, p_ab).sum()
    mi = (h_a + h_b - h_ab) / LN2
    bias = miller_madow_bias(k_a, k_b, n)
    return max(mi - bias, 0.0), k_a, k_b, bias


def estimate_leakage(values_a, values_b, bins_b: int) -> float:
    """Miller-Madow-corrected plug-in MI in bits, floored at zero."""
    return leakage_details(values_a, values_b, bins_b)[0]


# ---------------------------------------------------------------------------
# Full protocol run

@dataclass(frozen=True)
class ProtocolReport:
    """One repetition's measurements plus everything needed to reproduce it."""

    config: ExperimentConfig
    repetition: int
    seed: int
    n: int
    capacity: CapacityResult
    delta_e: float
    sym_disagreement: float
    bit_disagreement: float
    leak_q_t_bits: float
    leak_m_t_bits: float
    leak_q_t_threshold: float
    leak_m_t_threshold: float
    effective_key_rate_bits: float
    bob_bits: np.ndarray = None

    @property
    def class_index(self) -> int:
        return self.capacity.best_class_index

    @property
    def capacity_bits(self) -> float:
        return self.capacity.c_key_bits


def run_protocol(config: ExperimentConfig, repetition: int = 0) -> ProtocolReport:
    """Chain training, capacity optimization, trajectory, and transmissions."""
    scen = build_scenario(config, repetition)
    bob_map, eve_map = run_training(
        scen.grid,
        scen.bob_field,
        scen.eve_field,
        scen.pathloss,
        scen.channel,
        training_pilots=config.training_pilots,
        rng=component_rng(config.seed, repetition, "training"),
    )
    delta = config.delta_e
    if delta is None:
        delta = auto_delta(eve_map, bob_map)
    part = build_partition(eve_map, delta)
    result = optimize_over_isohypses(
        part,
        bob_map,
        config.levels,
        scen.calibration(),
        scen.kappa,
        scen.sigma_w2,
        class_limit=config.class_limit,
    )
    plan = sample_trajectory(
        result.distribution,
        config.n_transmissions,
        component_rng(config.seed, repetition, "trajectory"),
    )
    material = execute_transmissions(
        plan,
        bob_map,
        eve_map,
        scen.kappa,
        scen.sigma_w2,
        config.pilots,
        result.quantizer,
        rng_bob=component_rng(config.seed, repetition, "fading_bob"),
        rng_eve=component_rng(config.seed, repetition, "fading_eve"),
    )

    n = plan.num_transmissions
    if n > 0:
        sym = float(np.mean(material.alice_levels != material.bob_levels))
        bit = (
            float(np.mean(material.alice_bits != material.bob_bits))
            if material.bob_bits.size
            else 0.0
        )
        key_rate = empirical_entropy_bits(material.bob_levels)
    else:
        sym = bit = key_rate = math.nan
    if n >= 100:
        leak_q, ka_q, kb_q, bias_q = leakage_details(
            material.bob_levels, material.eve_values, config.levels
        )
        leak_m, ka_m, kb_m, bias_m = leakage_details(
            material.alice_values, material.eve_values, config.levels
        )
        thr_q = bias_q + 3.0 / math.sqrt(n)
        thr_m = bias_m + 3.0 / math.sqrt(n)
    else:
        leak_q = leak_m = thr_q = thr_m = math.nan

    return ProtocolReport(
        config=config,
        repetition=repetition,
        seed=config.seed,
        n=n,
        capacity=result,
        delta_e=delta,
        sym_disagreement=sym,
        bit_disagreement=bit,
        leak_q_t_bits=leak_q,
        leak_m_t_bits=leak_m,
        leak_q_t_threshold=thr_q,
        leak_m_t_threshold=thr_m,
        effective_key_rate_bits=key_rate,
        bob_bits=material.bob_bits,
    )
