"""Free-space path loss, correlated shadowing fields, and gain maps.

The propagation model combines Friis path loss with log-normal shadowing
whose spatial correlation decays exponentially with the distance between
transmitter positions (coherence distance d_ref). Total linear gain and the
expected estimated gain m are derived per grid position for one receiver.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .geometry import PositionGrid, ReceiverConfig

# Dense Cholesky is exact but O(M^3) / O(M^2) memory; beyond this size the
# caller must opt into the approximate neighbor-conditional sampler.
MAX_EXACT_FIELD_SIZE = 5000


class FieldFactorizationError(RuntimeError):
    """Shadowing covariance could not be factorized even after jitter."""


@dataclass(frozen=True)
class PathlossParams:
    """Friis model parameters: carrier frequency in MHz, antenna gains in dB."""

    fc_mhz: float
    a_tx_db: float = 0.0
    a_rx_db: float = 0.0

    def __post_init__(self):
        if self.fc_mhz <= 0:
            raise ValueError("carrier frequency must be positive")


@dataclass(frozen=True)
class ChannelParams:
    """Rician channel parameters.

    kappa is the LOS-to-scattered energy ratio, sigma_w2 the thermal noise
    variance (linear power). Fading power is fixed to 1 by normalization.
    """

    kappa: float
    sigma_w2: float
    sigma_h2: float = 1.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("Rician factor must be >= 0")
        if self.sigma_w2 < 0:
            raise ValueError("noise variance must be >= 0")
        if self.sigma_h2 != 1.0:
            raise ValueError("fading power is normalized to 1")


def expected_gain_factor(kappa: float) -> float:
    """sqrt(kappa / (1 + kappa)), with the kappa -> inf limit handled."""
    if math.isinf(kappa):
        return 1.0
    return math.sqrt(kappa / (1.0 + kappa))


def pathloss_db(p_tx, p_rx, params: PathlossParams) -> float:
    """Friis path loss in dB between two points given in metres.

    32.4 + 20 log10(d_km) + 20 log10(fc_MHz) - A_tx - A_rx. Raises for
    coincident points, where the model is undefined.
    """
    p_tx = np.asarray(p_tx, dtype=float)
    p_rx = np.asarray(p_rx, dtype=float)
    d_km = float(np.linalg.norm(p_tx - p_rx)) / 1000.0
    if d_km == 0.0:
        raise ValueError("coincident transmitter and receiver: path loss undefined")
    return (
        32.4
        + 20.0 * math.log10(d_km)
        + 20.0 * math.log10(params.fc_mhz)
        - params.a_tx_db
        - params.a_rx_db
    )


def pathloss_vector(grid: PositionGrid, receiver: ReceiverConfig, params: PathlossParams) -> np.ndarray:
    """Path loss in dB from every grid position to the receiver, shape (M,)."""
    d_km = np.linalg.norm(grid.positions - receiver.position_array[None, :], axis=1) / 1000.0
    if np.any(d_km == 0.0):
        raise ValueError("receiver coincides with a grid position: path loss undefined")
    return (
        32.4
        + 20.0 * np.log10(d_km)
        + 20.0 * math.log10(params.fc_mhz)
        - params.a_tx_db
        - params.a_rx_db
    )


def shadowing_covariance(grid: PositionGrid, receiver: ReceiverConfig) -> np.ndarray:
    """M x M shadowing covariance (dB^2): sigma^2 * exp(-||p_i - p_j|| / d_ref)."""
    var = receiver.sigma_sh_db**2
    return var * _unit_kernel(grid, receiver.d_ref_m)


def _unit_kernel(grid: PositionGrid, d_ref: float) -> np.ndarray:
    pos = grid.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return np.exp(-dist / d_ref)


# Unit-kernel Cholesky factors are receiver-independent (the correlation only
# involves transmitter positions), so one factor serves Bob and Eve and every
# shadowing-std sweep value. Small LRU keyed by grid geometry and d_ref.
_KERNEL_CACHE: dict = {}
_KERNEL_CACHE_MAX = 3
_KERNEL_LOCK = threading.Lock()


def _factor_kernel(kernel: np.ndarray) -> np.ndarray:
    """Cholesky factor with a diagonal jitter retry; raises naming lambda_min."""
    try:
        return np.linalg.cholesky(kernel)
    except np.linalg.LinAlgError:
        pass
    jittered = kernel + 1e-10 * np.eye(kernel.shape[0])
    try:
        return np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError:
        eig_min = float(np.linalg.eigvalsh(kernel)[0])
        raise FieldFactorizationError(
            f"shadowing covariance not positive definite after jitter; "
            f"smallest eigenvalue estimate {eig_min:.3e}"
        )


def _kernel_cholesky(grid: PositionGrid, d_ref: float) -> np.ndarray:
    key = (grid.nx, grid.ny, grid.spacing, grid.origin, d_ref)
    with _KERNEL_LOCK:
        if key in _KERNEL_CACHE:
            return _KERNEL_CACHE[key]
    factor = _factor_kernel(_unit_kernel(grid, d_ref))
    with _KERNEL_LOCK:
        if len(_KERNEL_CACHE) >= _KERNEL_CACHE_MAX:
            _KERNEL_CACHE.pop(next(iter(_KERNEL_CACHE)))
        _KERNEL_CACHE[key] = factor
    return factor


@dataclass(frozen=True)
class ShadowingField:
    """One realization of the correlated shadowing attenuation, in dB per position."""

    receiver: ReceiverConfig
    values: np.ndarray
    seed: object = None

    def __post_init__(self):
        self.values.setflags(write=False)


def sample_shadowing_field(
    grid: PositionGrid,
    receiver: ReceiverConfig,
    seed,
    method: str = "exact",
) -> ShadowingField:
    """Draw one spatially correlated shadowing field.

    method="exact" uses a dense Cholesky factor of the covariance (grids up
    to MAX_EXACT_FIELD_SIZE positions). method="neighbor" is the approximate
    sequential conditional sampler for larger grids.
    """
    rng = np.random.default_rng(seed)
    if method == "exact":
        if grid.size > MAX_EXACT_FIELD_SIZE:
            raise ValueError(
                f"grid has {grid.size} positions; dense factorization is capped at "
                f"{MAX_EXACT_FIELD_SIZE}. Use method='neighbor' (approximate)."
            )
        factor = _kernel_cholesky(grid, receiver.d_ref_m)
        z = rng.standard_normal(grid.size)
        values = receiver.sigma_sh_db * (factor @ z)
    elif method == "neighbor":
        z = rng.standard_normal(grid.size)
        values = receiver.sigma_sh_db * _neighbor_draw(grid, receiver.d_ref_m, z[None, :])[0]
    else:
        raise ValueError(f"unknown field sampling method {method!r}")
    return ShadowingField(receiver=receiver, values=values, seed=seed)


def _neighbor_draw(
    grid: PositionGrid,
    d_ref: float,
    z: np.ndarray,
    k: int = 30,
    window: int = 4,
) -> np.ndarray:
    """Sequential conditional sampling of a unit-variance exponential field.

    Each position is conditioned on its k nearest already-visited neighbors
    inside a (2*window+1) x (window+1) stencil; row-major visiting order makes
    the interior stencil stationary so its regression weights are cached.
    z has shape (R, M); returns (R, M) approximate field draws.
    """
    nx, ny = grid.nx, grid.ny
    sp = grid.spacing
    offsets = []
    for dy in range(-window, 1):
        for dx in range(-window, window + 1):
            if dy == 0 and dx >= 0:
                continue
            offsets.append((dx, dy, math.hypot(dx, dy)))
    offsets.sort(key=lambda t: (t[2], t[1], t[0]))

    values = np.empty_like(z)
    weight_cache: dict = {}
    for iy in range(ny):
        for ix in range(nx):
            i = iy * nx + ix
            nbr = [
                (dx, dy)
                for dx, dy, _ in offsets
                if 0 <= ix + dx < nx and 0 <= iy + dy < ny
            ][:k]
            if not nbr:
                values[:, i] = z[:, i]
                continue
            key = tuple(nbr)
            if key not in weight_cache:
                pts = np.array(nbr, dtype=float) * sp
                dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
                c_nn = np.exp(-dists / d_ref) + 1e-12 * np.eye(len(nbr))
                c_0n = np.exp(-np.linalg.norm(pts, axis=1) / d_ref)
                w = np.linalg.solve(c_nn, c_0n)
                resid = math.sqrt(max(1.0 - float(w @ c_0n), 0.0))
                weight_cache[key] = (w, resid)
            w, resid = weight_cache[key]
            idx = [i + dy * nx + dx for dx, dy in nbr]
            values[:, i] = values[:, idx] @ w + resid * z[:, i]
    return values


@dataclass(frozen=True)
class GainMap:
    """Per-position channel gains from the whole grid to one receiver.

    g is the total linear gain (path loss + shadowing); m the expected
    estimated gain sqrt(kappa/(1+kappa)) * g. When ``estimated`` is set the
    m values come from noisy training and the m/g tie is not enforced.
    """

    receiver: ReceiverConfig
    grid: PositionGrid
    a_pl_db: np.ndarray
    a_sh_db: np.ndarray
    g: np.ndarray
    m: np.ndarray
    kappa: float
    estimated: bool = False

    def __post_init__(self):
        n = self.grid.size
        for arr in (self.a_pl_db, self.a_sh_db, self.g, self.m):
            if arr.shape != (n,):
                raise ValueError("gain map arrays must have one entry per grid position")
            arr.setflags(write=False)
        if np.any(self.g <= 0):
            raise ValueError("linear gains must be positive")
        if not self.estimated:
            if np.any(self.m <= 0):
                raise ValueError("expected gains must be positive")
            factor = expected_gain_factor(self.kappa)
            if not np.allclose(self.m, factor * self.g, rtol=1e-12, atol=0.0):
                raise ValueError("expected gains do not match sqrt(kappa/(1+kappa)) * g")

    @property
    def g_max(self) -> float:
        return float(self.g.max())

    @property
    def g_min(self) -> float:
        return float(self.g.min())

    def with_estimated_m(self, m_hat: np.ndarray) -> "GainMap":
        """Copy of this map whose m values were estimated from noisy training."""
        return GainMap(
            receiver=self.receiver,
            grid=self.grid,
            a_pl_db=self.a_pl_db,
            a_sh_db=self.a_sh_db,
            g=self.g,
            m=np.asarray(m_hat, dtype=float).copy(),
            kappa=self.kappa,
            estimated=True,
        )


def linear_gain(a_tot_db) -> np.ndarray:
    """Total attenuation in dB to linear amplitude gain: 10^(-a/20)."""
    return 10.0 ** (-np.asarray(a_tot_db, dtype=float) / 20.0)


def build_gain_map(
    grid: PositionGrid,
    receiver: ReceiverConfig,
    field: ShadowingField,
    pl: PathlossParams,
    ch: ChannelParams,
) -> GainMap:
    """Combine path loss and a shadowing realization into a gain map."""
    if field.receiver is not receiver and field.receiver != receiver:
        raise ValueError("shadowing field was generated for a different receiver")
    if field.values.shape != (grid.size,):
        raise ValueError("shadowing field does not match the grid size")
    a_pl = pathloss_vector(grid, receiver, pl)
    g = linear_gain(a_pl + field.values)
    m = expected_gain_factor(ch.kappa) * g
    return GainMap(
        receiver=receiver,
        grid=grid,
        a_pl_db=a_pl,
        a_sh_db=field.values.copy(),
        g=g,
        m=m,
        kappa=ch.kappa,
    )


def estimation_variance(g, kappa: float, sigma_w2: float, pilots: int):
    """Variance of the real-part gain estimate after K-pilot averaging."""
    if pilots < 1:
        raise ValueError("pilot count must be >= 1")
    g = np.asarray(g, dtype=float)
    return (g**2 / (1.0 + kappa) + sigma_w2) / (2.0 * pilots)


def sample_received_gains(
    true_gains,
    ch: ChannelParams,
    pilots: int,
    rng,
) -> np.ndarray:
    """Noisy estimated gains after pilot averaging, one draw per entry.

    Each estimate is m + w with w ~ N(0, (1/(2K)) (g^2/(1+kappa) + sigma_w^2)):
    the exact law of the real part of the K-pilot correlator output.
    """
    g = np.asarray(true_gains, dtype=float)
    var = estimation_variance(g, ch.kappa, ch.sigma_w2, pilots)
    rng = np.random.default_rng(rng)
    m = expected_gain_factor(ch.kappa) * g
    return m + np.sqrt(var) * rng.standard_normal(g.shape)


def sample_received_gain(true_gain: float, ch: ChannelParams, pilots: int, seed) -> float:
    """Single noisy gain estimate; deterministic given the seed."""
    if true_gain <= 0:
        raise ValueError("true gain must be positive")
    return float(sample_received_gains(np.array([true_gain]), ch, pilots, seed)[0])
