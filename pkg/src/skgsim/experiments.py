"""Experiment engines behind the CLI: sweeps, protocol batches, map dumps.

Tasks are dispatched to a small thread pool (capped by SKG_THREADS) but
results are keyed by (sweep index, repetition) and emitted in that order, so
output is identical no matter how the pool schedules work. Shadowing fields
are drawn per repetition from labeled streams and therefore shared across
sweep values within a repetition: sweeps are paired comparisons.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .capacity import optimize_over_isohypses
from .channel import MAX_EXACT_FIELD_SIZE, _kernel_cholesky
from .config import ExperimentConfig
from .csvio import SweepRow
from .partition import IsohypsePartition
from .protocol import ProtocolReport, run_protocol
from .scenario import Scenario, build_scenario

# canonical sweep axis -> config field; aliases accepted case-sensitively
SWEEP_AXES = {
    "Q": "levels",
    "M": "nx",  # value is the grid side; the grid stays square
    "snr_min_db": "snr_min_db",
    "rho_db": "rho_db",
    "K": "pilots",
    "sigma_sh_a_db": "sigma_sh_a_db",
    "eve_dist_m": "eve_dist_m",
}
AXIS_ALIASES = {
    "levels": "Q",
    "snr": "snr_min_db",
    "SNR_min": "snr_min_db",
    "rho": "rho_db",
    "pilots": "K",
    "sigma_sh_a": "sigma_sh_a_db",
    "d": "eve_dist_m",
}


def canonical_axis(axis: str) -> str:
    axis = AXIS_ALIASES.get(axis, axis)
    if axis not in SWEEP_AXES:
        valid = ", ".join(sorted(SWEEP_AXES))
        raise ValueError(f"unknown sweep axis {axis!r}; valid axes: {valid}")
    return axis


def apply_sweep_value(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    axis = canonical_axis(axis)
    if axis == "Q":
        return config.with_overrides(levels=int(value))
    if axis == "M":
        side = int(value)
        return config.with_overrides(nx=side, ny=side)
    if axis == "K":
        return config.with_overrides(pilots=int(value))
    return config.with_overrides(**{SWEEP_AXES[axis]: float(value)})


def worker_count(num_tasks: int) -> int:
    cap = os.environ.get("SKG_THREADS")
    if cap is not None:
        limit = max(int(cap), 1)
    else:
        limit = min(os.cpu_count() or 1, 4)
    return max(min(limit, num_tasks), 1)


def _run_indexed(tasks):
    """Run (key, fn) pairs on the pool; return results ordered by key."""
    n = len(tasks)
    if n == 0:
        return []
    workers = worker_count(n)
    results = {}
    if workers == 1:
        for key, fn in tasks:
            results[key] = fn()
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(fn) for key, fn in tasks}
            for key, fut in futures.items():
                results[key] = fut.result()
    return [results[key] for key in sorted(results)]


def _warm_kernel_cache(configs) -> None:
    """Factor each distinct grid geometry once, serially, before dispatch."""
    seen = set()
    for cfg in configs:
        grid = cfg.grid()
        key = (grid.nx, grid.ny, grid.spacing, grid.origin, cfg.d_ref_m)
        if key in seen or cfg.approx_fields or grid.size > MAX_EXACT_FIELD_SIZE:
            continue
        seen.add(key)
        _kernel_cholesky(grid, cfg.d_ref_m)


def evaluate_capacity(config: ExperimentConfig, repetition: int = 0):
    """One (config, repetition) capacity optimization: (scenario, partition, result)."""
    scen = build_scenario(config, repetition)
    part = scen.partition()
    result = optimize_over_isohypses(
        part,
        scen.bob_map,
        config.levels,
        scen.calibration(),
        scen.kappa,
        scen.sigma_w2,
        class_limit=config.class_limit,
    )
    return scen, part, result


def run_capacity_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Capacity at every (sweep value, repetition), repetition-paired fields."""
    if config.sweep_axis is None or config.sweep_values is None:
        raise ValueError("capacity sweep requires a sweep axis and values")
    axis = canonical_axis(config.sweep_axis)
    value_configs = [
        apply_sweep_value(config, axis, v) for v in config.sweep_values
    ]
    _warm_kernel_cache(value_configs)

    tasks = []
    for vi, vcfg in enumerate(value_configs):
        for rep in range(config.repetitions):
            def job(vcfg=vcfg, vi=vi, rep=rep):
                _, part, result = evaluate_capacity(vcfg, rep)
                best_size = int(part.sizes[result.best_class_index])
                return SweepRow(
                    axis=axis,
                    value=float(config.sweep_values[vi]),
                    repetition=rep,
                    c_key_bits=result.c_key_bits,
                    upper_bound_bits=result.upper_bound_bits,
                    best_class_index=result.best_class_index,
                    best_class_size=best_size,
                )
            tasks.append(((vi, rep), job))
    return _run_indexed(tasks)


def run_protocol_batch(config: ExperimentConfig) -> list[ProtocolReport]:
    _warm_kernel_cache([config])
    tasks = [
        ((rep,), lambda rep=rep: run_protocol(config, rep))
        for rep in range(config.repetitions)
    ]
    return _run_indexed(tasks)


@dataclass(frozen=True)
class MapBundle:
    scenario: Scenario
    partition: IsohypsePartition


def generate_maps(config: ExperimentConfig) -> MapBundle:
    scen = build_scenario(config, repetition=0)
    return MapBundle(scenario=scen, partition=scen.partition())
