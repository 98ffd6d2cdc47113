"""Wires a configuration into a concrete simulated scene.

Builds the grid, draws both shadowing fields from labeled seed streams,
calibrates (kappa, sigma_w^2) against the realized Bob gains, and produces
the Bob and Eve gain maps used by the partition, capacity, and protocol
stages.
"""
from __future__ import annotations

from dataclasses import dataclass

from .calibration import CalibrationParams, kappa_from_rho, noise_from_snr_min
from .channel import (
    ChannelParams,
    GainMap,
    PathlossParams,
    ShadowingField,
    build_gain_map,
    linear_gain,
    pathloss_vector,
    sample_shadowing_field,
)
from .config import ExperimentConfig
from .geometry import PositionGrid, ReceiverConfig
from .seeding import component_seed
from .partition import IsohypsePartition, auto_delta, build_partition


@dataclass(frozen=True)
class Scenario:
    config: ExperimentConfig
    repetition: int
    grid: PositionGrid
    bob: ReceiverConfig
    eve: ReceiverConfig
    pathloss: PathlossParams
    channel: ChannelParams
    bob_field: ShadowingField
    eve_field: ShadowingField
    bob_map: GainMap
    eve_map: GainMap

    @property
    def kappa(self) -> float:
        return self.channel.kappa

    @property
    def sigma_w2(self) -> float:
        return self.channel.sigma_w2

    def calibration(self) -> CalibrationParams:
        return CalibrationParams(
            snr_min_db=self.config.snr_min_db,
            rho_db=self.config.rho_db,
            pilots=self.config.pilots,
        )

    def delta_e(self) -> float:
        if self.config.delta_e is not None:
            return self.config.delta_e
        return auto_delta(self.eve_map, self.bob_map)

    def partition(self) -> IsohypsePartition:
        return build_partition(self.eve_map, self.delta_e())


def build_scenario(config: ExperimentConfig, repetition: int = 0) -> Scenario:
    grid = config.grid()
    bob = config.bob()
    eve = config.eve()
    pl = PathlossParams(fc_mhz=config.fc_mhz, a_tx_db=config.a_tx_db, a_rx_db=config.a_rx_db)
    method = "neighbor" if config.approx_fields else "exact"

    bob_field = sample_shadowing_field(
        grid, bob, component_seed(config.seed, repetition, "field_bob"), method=method
    )
    eve_field = sample_shadowing_field(
        grid, eve, component_seed(config.seed, repetition, "field_eve"), method=method
    )

    # kappa is pinned to the realized peak Bob gain, then the noise floor to
    # the realized worst-case SNR; both must precede map construction.
    g_bob = linear_gain(pathloss_vector(grid, bob, pl) + bob_field.values)
    kappa = kappa_from_rho(config.rho_db, float(g_bob.max()))
    bob_map = build_gain_map(grid, bob, bob_field, pl, ChannelParams(kappa, 0.0))
    sigma_w2 = noise_from_snr_min(config.snr_min_db, kappa, bob_map)
    ch = ChannelParams(kappa=kappa, sigma_w2=sigma_w2)
    eve_map = build_gain_map(grid, eve, eve_field, pl, ch)

    return Scenario(
        config=config,
        repetition=repetition,
        grid=grid,
        bob=bob,
        eve=eve,
        pathloss=pl,
        channel=ch,
        bob_field=bob_field,
        eve_field=eve_field,
        bob_map=bob_map,
        eve_map=eve_map,
    )
