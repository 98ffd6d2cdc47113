"""Secret-key capacity per isohypse and its maximization.

Restricting movement to one isohypse makes Eve's observations carry no key
information, so the per-class key rate is the mutual information between the
position (equivalently Bob's expected gain) and Bob's quantized noisy gain.
That inner problem is exactly discrete-memoryless-channel capacity: concave
over the probability simplex, solved here by alternating maximization
(Blahut-Arimoto) with a per-iteration capacity bracket as the stopping rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import ndtr, xlogy

from .calibration import CalibrationParams, estimation_sigma
from .channel import GainMap
from .partition import IsohypsePartition, largest_classes

LN2 = math.log(2.0)

# Bob gains closer than delta / COLLISION_RESOLUTION are treated as the same
# symbol: they violate the position <-> gain uniqueness the conditional
# entropy reduction relies on, so their rows are merged.
COLLISION_RESOLUTION = 1000.0


@dataclass(frozen=True)
class Quantizer:
    """Uniform quantizer: Q levels spaced delta apart, outer bins open-ended."""

    levels: np.ndarray
    delta: float

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or lv.size < 1:
            raise ValueError("quantizer needs at least one level")
        if lv.size > 1:
            steps = np.diff(lv)
            if self.delta <= 0 or not np.allclose(steps, self.delta, rtol=1e-12, atol=0.0):
                raise ValueError("levels must be uniformly spaced by delta")
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @classmethod
    def from_range(cls, lo: float, hi: float, num_levels: int) -> "Quantizer":
        """Levels at the centers of num_levels equal bins tiling [lo, hi]."""
        if num_levels < 1:
            raise ValueError("level count must be >= 1")
        if num_levels == 1:
            return cls(levels=np.array([(lo + hi) / 2.0]), delta=hi - lo)
        if hi <= lo:
            raise ValueError("quantizer range must have positive width")
        delta = (hi - lo) / num_levels
        levels = lo + (np.arange(num_levels) + 0.5) * delta
        return cls(levels=levels, delta=delta)

    @property
    def num_levels(self) -> int:
        return self.levels.size

    @property
    def interior_edges(self) -> np.ndarray:
        return self.levels[:-1] + self.delta / 2.0

    def quantize(self, values) -> np.ndarray:
        """Map values to level indices; the outer bins absorb the tails."""
        values = np.asarray(values, dtype=float)
        if self.num_levels == 1:
            return np.zeros(values.shape, dtype=np.int64)
        lo_edge = self.levels[0] - self.delta / 2.0
        idx = np.floor((values - lo_edge) / self.delta).astype(np.int64)
        return np.clip(idx, 0, self.num_levels - 1)


@dataclass(frozen=True)
class PositionDistribution:
    """Probability distribution over position indices of one isohypse."""

    support: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.int64)
        p = np.asarray(self.probabilities, dtype=float)
        if sup.shape != p.shape or sup.ndim != 1:
            raise ValueError("support and probabilities must be 1-D and equally long")
        if np.any(p < -1e-10) or np.any(p > 1.0 + 1e-10):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError("probabilities must sum to 1")
        sup.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probabilities", p)

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(p) for i, p in zip(self.support, self.probabilities)}


@dataclass(frozen=True)
class ChannelMatrix:
    """Quantized-gain transition matrix: rows are inputs, columns levels.

    When built from an isohypse, position_groups[k] lists the grid positions
    merged into row k (Bob-gain collisions at resolution delta/1000 share a
    row) and collision_count says how many positions were absorbed that way.
    """

    matrix: np.ndarray
    row_sigmas: np.ndarray | None = None
    quantizer: Quantizer | None = None
    position_groups: tuple | None = None
    collision_count: int = 0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError("channel matrix must be 2-D and non-empty")
        if np.any(m < 0) or np.any(m > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if not np.allclose(m.sum(axis=1), 1.0, rtol=0.0, atol=1e-12):
            raise ValueError("every channel matrix row must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_levels(self) -> int:
        return self.matrix.shape[1]

    @property
    def position_support(self) -> np.ndarray:
        """All grid positions covered by this channel, group order."""
        if self.position_groups is None:
            return np.arange(self.num_rows)
        return np.concatenate([np.asarray(g) for g in self.position_groups])

    def row_probabilities(self, dist: PositionDistribution) -> np.ndarray:
        """Aggregate a position distribution to one probability per row."""
        if self.position_groups is None:
            if dist.support.size != self.num_rows or np.any(
                np.sort(dist.support) != np.arange(self.num_rows)
            ):
                raise ValueError("distribution support does not match channel rows")
            r = np.empty(self.num_rows)
            r[dist.support] = dist.probabilities
            return r
        lookup = dist.as_dict()
        covered = 0
        r = np.zeros(self.num_rows)
        for k, group in enumerate(self.position_groups):
            for pos in group:
                if int(pos) in lookup:
                    r[k] += lookup[int(pos)]
                    covered += 1
        if covered != dist.support.size:
            raise ValueError("distribution support does not match channel positions")
        return r

    def expand_row_distribution(self, r: np.ndarray) -> PositionDistribution:
        """Spread row probabilities uniformly over each row's merged positions."""
        if self.position_groups is None:
            return PositionDistribution(np.arange(self.num_rows), np.asarray(r, dtype=float))
        support = []
        probs = []
        for rk, group in zip(r, self.position_groups):
            group = np.asarray(group)
            support.append(group)
            probs.append(np.full(group.size, rk / group.size))
        return PositionDistribution(np.concatenate(support), np.concatenate(probs))


def channel_matrix(
    class_positions,
    bob_map: GainMap,
    quantizer: Quantizer,
    cal: CalibrationParams,
    kappa: float,
    sigma_w2: float,
    merge_collisions: bool = True,
) -> ChannelMatrix:
    """Transition matrix P(level | position) for one isohypse.

    Interior levels integrate the Gaussian estimate density over their bin;
    the first and last bins absorb the tails so each row is a true PMD.
    """
    idx = np.asarray(class_positions, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("isohypse class is empty")
    m_vals = bob_map.m[idx]
    g_vals = bob_map.g[idx]

    groups: list[np.ndarray]
    if merge_collisions and idx.size > 1 and quantizer.delta > 0:
        res = quantizer.delta / COLLISION_RESOLUTION
        keys = np.floor(m_vals / res).astype(np.int64)
        order = np.argsort(keys, kind="stable")
        bounds = np.flatnonzero(np.diff(keys[order])) + 1
        groups = [idx[order[g]] for g in np.split(np.arange(idx.size), bounds)]
        mg = [float(m_vals[order[g]].mean()) for g in np.split(np.arange(idx.size), bounds)]
        gg = [float(g_vals[order[g]].mean()) for g in np.split(np.arange(idx.size), bounds)]
    else:
        groups = [np.array([i]) for i in idx]
        mg = list(map(float, m_vals))
        gg = list(map(float, g_vals))

    m_rows = np.array(mg)
    sigmas = np.array([estimation_sigma(g, kappa, sigma_w2, cal.pilots) for g in gg])

    q = quantizer.num_levels
    rows = np.empty((len(groups), q))
    edges = quantizer.interior_edges
    for k, (mu, sig) in enumerate(zip(m_rows, sigmas)):
        if sig == 0.0:
            rows[k] = 0.0
            rows[k, int(np.argmin(np.abs(quantizer.levels - mu)))] = 1.0
        elif q == 1:
            rows[k, 0] = 1.0
        else:
            cdf = ndtr((edges - mu) / sig)
            rows[k] = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    return ChannelMatrix(
        matrix=rows,
        row_sigmas=sigmas,
        quantizer=quantizer,
        position_groups=tuple(groups),
        collision_count=int(idx.size - len(groups)),
    )


def output_pmd(channel: ChannelMatrix, dist: PositionDistribution) -> np.ndarray:
    """Distribution of quantizer levels induced by a position distribution."""
    r = channel.row_probabilities(dist)
    return r @ channel.matrix


def mutual_information_rows(matrix: np.ndarray, r: np.ndarray) -> float:
    """I(input; level) in bits for row distribution r over `matrix` rows."""
    p_out = r @ matrix
    h_out = -xlogy(p_out, p_out).sum()
    h_cond = -float(r @ xlogy(matrix, matrix).sum(axis=1))
    return (h_out - h_cond) / LN2


def mutual_information(channel: ChannelMatrix, dist: PositionDistribution) -> float:
    """Key bits per position for a given position distribution."""
    r = channel.row_probabilities(dist)
    return mutual_information_rows(channel.matrix, r)


@dataclass(frozen=True)
class OptimizationOutcome:
    distribution: PositionDistribution
    capacity_bits: float
    iterations: int
    converged: bool
    bracket_gap_bits: float


@numba.njit(cache=True, nogil=True)
def _ba_eval(matrix, row_neg_entropy, r, c):
    """Fill c with D(P_x || p_out(r)) in nats; return (lower, upper) bounds."""
    m, q = matrix.shape
    p_out = np.zeros(q)
    for i in range(m):
        ri = r[i]
        if ri > 0.0:
            for j in range(q):
                p_out[j] += ri * matrix[i, j]
    for j in range(q):
        p_out[j] = math.log(max(p_out[j], 1e-320))
    lower = 0.0
    upper = -1e300
    for i in range(m):
        acc = row_neg_entropy[i]
        for j in range(q):
            acc -= matrix[i, j] * p_out[j]
        c[i] = acc
        lower += r[i] * acc
        if acc > upper:
            upper = acc
    return lower, upper


@numba.njit(cache=True, nogil=True)
def _ba_core(matrix, row_neg_entropy, r_init, tol_nats, max_iter):
    """Multiplicative-update loop with safeguarded extrapolation.

    Near degenerate optima the plain step crawls (the bracket decays like
    1/t), so periodically an extrapolated step r * exp(gamma * (c - max c))
    is tried over a gamma ladder and kept only if it improves the MI lower
    bound; the bracket certificate is unaffected by the safeguard.
    """
    m = matrix.shape[0]
    r = r_init.copy()
    c = np.empty(m)
    r_try = np.empty(m)
    c_try = np.empty(m)
    r_best = np.empty(m)
    iterations = 0
    converged = False
    gap = 1e300
    lower = 0.0
    for iterations in range(1, max_iter + 1):
        lower, upper = _ba_eval(matrix, row_neg_entropy, r, c)
        gap = upper - lower
        if gap < tol_nats:
            converged = True
            break
        total = 0.0
        for i in range(m):
            r_try[i] = r[i] * math.exp(c[i] - upper)
            total += r_try[i]
        for i in range(m):
            r_try[i] /= total
        if iterations % 32 == 0 and gap < 1e-2:
            best_lower, _ = _ba_eval(matrix, row_neg_entropy, r_try, c_try)
            for i in range(m):
                r_best[i] = r_try[i]
            gamma = 8.0
            while gamma * gap < 16.0 and gamma < 1e16:
                total = 0.0
                for i in range(m):
                    r_try[i] = r[i] * math.exp(gamma * (c[i] - upper))
                    total += r_try[i]
                if total > 0.0:
                    for i in range(m):
                        r_try[i] /= total
                    l_g, _ = _ba_eval(matrix, row_neg_entropy, r_try, c_try)
                    if l_g > best_lower:
                        best_lower = l_g
                        for i in range(m):
                            r_best[i] = r_try[i]
                gamma *= 8.0
            for i in range(m):
                r[i] = r_best[i]
        else:
            for i in range(m):
                r[i] = r_try[i]
    if not converged:
        lower, _ = _ba_eval(matrix, row_neg_entropy, r, c)
    return r, lower, iterations, converged, gap


def _blahut_arimoto(matrix: np.ndarray, tol_bits: float, max_iter: int):
    """Alternating maximization of channel MI over the input simplex.

    Returns (r, capacity_bits, iterations, converged, gap_bits). At each
    step the current MI lower-bounds capacity and max_x D(P_x || p_out)
    upper-bounds it; the loop stops when the bracket closes below tol.
    Identical rows are interchangeable, so they are collapsed before
    iterating and their mass split evenly afterwards.
    """
    uniq, inverse, counts = np.unique(matrix, axis=0, return_inverse=True, return_counts=True)
    r_init = counts / counts.sum()  # equals the uniform start over original rows
    row_neg_entropy = xlogy(uniq, uniq).sum(axis=1)
    r, lower, iterations, converged, gap = _ba_core(
        np.ascontiguousarray(uniq), row_neg_entropy, r_init, tol_bits * LN2, max_iter
    )
    r_full = (r / counts)[inverse]
    return r_full, max(lower / LN2, 0.0), iterations, converged, gap / LN2


def optimize_distribution(
    channel: ChannelMatrix,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> OptimizationOutcome:
    """Capacity-achieving input distribution for one channel.

    If max_iter is hit before the bracket closes, the best distribution so
    far is returned with converged=False rather than raising.
    """
    if channel.num_rows == 1:
        return OptimizationOutcome(
            distribution=channel.expand_row_distribution(np.array([1.0])),
            capacity_bits=0.0,
            iterations=0,
            converged=True,
            bracket_gap_bits=0.0,
        )
    r, cap, iterations, converged, gap = _blahut_arimoto(channel.matrix, tol, max_iter)
    return OptimizationOutcome(
        distribution=channel.expand_row_distribution(r),
        capacity_bits=cap,
        iterations=iterations,
        converged=converged,
        bracket_gap_bits=gap,
    )


@dataclass(frozen=True)
class ClassCapacity:
    """Per-isohypse optimization record."""

    class_index: int
    size: int
    capacity_bits: float
    iterations: int
    converged: bool
    bracket_gap_bits: float
    collision_count: int


@dataclass(frozen=True)
class CapacityResult:
    """Outcome of the outer maximization over isohypse classes."""

    best_class_index: int
    distribution: PositionDistribution
    c_key_bits: float
    per_class: tuple
    upper_bound_bits: float
    quantizer: Quantizer | None
    channel: ChannelMatrix | None = field(repr=False, default=None)

    def __post_init__(self):
        if not (-1e-12 <= self.c_key_bits <= self.upper_bound_bits + 1e-9):
            raise ValueError("capacity must lie in [0, upper bound]")


def upper_bound(partition: IsohypsePartition) -> float:
    """log2 of the largest class size: the zero-noise, dense-quantizer limit."""
    return float(np.log2(partition.sizes.max()))


def class_capacity(
    partition: IsohypsePartition,
    class_index: int,
    bob_map: GainMap,
    num_levels: int,
    cal: CalibrationParams,
    kappa: float,
    sigma_w2: float,
    tol: float = 1e-9,
    max_iter: int = 100_000,
):
    """Optimize one class; returns (ClassCapacity, outcome, quantizer, channel)."""
    idx = partition.classes[class_index]
    m_vals = bob_map.m[idx]
    lo, hi = float(m_vals.min()), float(m_vals.max())
    degenerate = idx.size == 1 or num_levels == 1 or hi <= lo
    if degenerate:
        quant = Quantizer(levels=np.array([(lo + hi) / 2.0]), delta=hi - lo)
        chan = channel_matrix(idx, bob_map, quant, cal, kappa, sigma_w2)
        dist = PositionDistribution(np.asarray(idx), np.full(idx.size, 1.0 / idx.size))
        outcome = OptimizationOutcome(dist, 0.0, 0, True, 0.0)
    else:
        quant = Quantizer.from_range(lo, hi, num_levels)
        chan = channel_matrix(idx, bob_map, quant, cal, kappa, sigma_w2)
        outcome = optimize_distribution(chan, tol=tol, max_iter=max_iter)
    record = ClassCapacity(
        class_index=class_index,
        size=int(idx.size),
        capacity_bits=outcome.capacity_bits,
        iterations=outcome.iterations,
        converged=outcome.converged,
        bracket_gap_bits=outcome.bracket_gap_bits,
        collision_count=chan.collision_count,
    )
    return record, outcome, quant, chan


def optimize_over_isohypses(
    partition: IsohypsePartition,
    bob_map: GainMap,
    num_levels: int,
    cal: CalibrationParams,
    kappa: float,
    sigma_w2: float,
    class_limit: int | None = None,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> CapacityResult:
    """Maximize the key rate over the class_limit largest isohypses.

    class_limit=None (or >= L) searches every class. The returned upper
    bound is taken over all classes regardless of the search limit.
    """
    limit = partition.num_classes if class_limit is None else class_limit
    candidates = largest_classes(partition, limit)
    best = None
    records = []
    for ci in candidates:
        record, outcome, quant, chan = class_capacity(
            partition, ci, bob_map, num_levels, cal, kappa, sigma_w2, tol, max_iter
        )
        records.append(record)
        if best is None or record.capacity_bits > best[0].capacity_bits:
            best = (record, outcome, quant, chan)
    record, outcome, quant, chan = best
    return CapacityResult(
        best_class_index=record.class_index,
        distribution=outcome.distribution,
        c_key_bits=record.capacity_bits,
        per_class=tuple(records),
        upper_bound_bits=upper_bound(partition),
        quantizer=quant,
        channel=chan,
    )
