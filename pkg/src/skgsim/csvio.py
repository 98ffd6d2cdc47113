"""CSV serialization for maps, partitions, capacity results, and reports.

Every file starts with a single comment-style manifest line carrying the
fully resolved configuration and seed, so any row can be reproduced from the
file alone. Numeric values are written with 12 significant digits, a fixed
point of parse-then-reformat, so export -> import -> export is byte stable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capacity import CapacityResult, PositionDistribution
from .channel import GainMap, ShadowingField
from .geometry import ReceiverConfig
from .partition import IsohypsePartition

GAIN_MAP_HEADER = "index,x_m,y_m,z_m,a_pl_db,a_sh_db,g_lin,m_lin"
PARTITION_HEADER = "class_index,m_ell_lin,member_count,member_indices"
CAPACITY_HEADER = "class_index,class_size,capacity_bits,upper_bound_bits,iterations,converged"
DISTRIBUTION_HEADER = "position_index,probability"
SWEEP_HEADER = "axis,value,repetition,c_key_bits,upper_bound_bits,best_class_index,best_class_size"
PROTOCOL_HEADER = (
    "seed,N,K,Q,snr_min_db,rho_db,delta_e,class_index,capacity_bits,"
    "sym_disagreement,bit_disagreement,leak_q_t_bits,leak_m_t_bits"
)


def fmt(x) -> str:
    if isinstance(x, bool) or isinstance(x, np.bool_):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def write_gain_map_csv(path, gain_map: GainMap, manifest: str) -> None:
    pos = gain_map.grid.positions
    lines = [manifest, GAIN_MAP_HEADER]
    for i in range(gain_map.grid.size):
        lines.append(
            ",".join(
                fmt(v)
                for v in (
                    i,
                    pos[i, 0],
                    pos[i, 1],
                    pos[i, 2],
                    gain_map.a_pl_db[i],
                    gain_map.a_sh_db[i],
                    gain_map.g[i],
                    gain_map.m[i],
                )
            )
        )
    _write_lines(path, lines)


@dataclass(frozen=True)
class GainMapTable:
    """Parsed gain-map CSV contents."""

    manifest: str
    index: np.ndarray
    positions: np.ndarray
    a_pl_db: np.ndarray
    a_sh_db: np.ndarray
    g: np.ndarray
    m: np.ndarray

    def shadowing_field(self, receiver: ReceiverConfig) -> ShadowingField:
        return ShadowingField(receiver=receiver, values=self.a_sh_db.copy())


def read_gain_map_csv(path) -> GainMapTable:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = fh.readline().rstrip("\n")
        header = fh.readline().rstrip("\n")
        if header != GAIN_MAP_HEADER:
            raise ValueError(f"unexpected gain map header in {path}: {header!r}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float)
    return GainMapTable(
        manifest=manifest,
        index=data[:, 0].astype(np.int64),
        positions=data[:, 1:4],
        a_pl_db=data[:, 4],
        a_sh_db=data[:, 5],
        g=data[:, 6],
        m=data[:, 7],
    )


def write_partition_csv(path, partition: IsohypsePartition, manifest: str) -> None:
    lines = [manifest, PARTITION_HEADER]
    for l, members in enumerate(partition.classes):
        idx = ";".join(str(int(i)) for i in members)
        lines.append(
            f"{l},{fmt(float(partition.class_gains[l]))},{members.size},{idx}"
        )
    _write_lines(path, lines)


def read_partition_csv(path):
    """Returns (manifest, list of member index arrays, class gains)."""
    with open(path, "r", encoding="utf-8") as fh:
        manifest = fh.readline().rstrip("\n")
        header = fh.readline().rstrip("\n")
        if header != PARTITION_HEADER:
            raise ValueError(f"unexpected partition header in {path}: {header!r}")
        classes = []
        gains = []
        for line in fh:
            if not line.strip():
                continue
            _, gain, count, members = line.rstrip("\n").split(",")
            idx = np.array([int(t) for t in members.split(";")], dtype=np.int64)
            if idx.size != int(count):
                raise ValueError("member count column disagrees with member list")
            classes.append(idx)
            gains.append(float(gain))
    return manifest, classes, np.array(gains)


def write_capacity_csv(path, result: CapacityResult, manifest: str) -> None:
    lines = [manifest, CAPACITY_HEADER]
    for rec in result.per_class:
        lines.append(
            ",".join(
                fmt(v)
                for v in (
                    rec.class_index,
                    rec.size,
                    rec.capacity_bits,
                    result.upper_bound_bits,
                    rec.iterations,
                    rec.converged,
                )
            )
        )
    _write_lines(path, lines)


def write_distribution_csv(path, dist: PositionDistribution, manifest: str) -> None:
    lines = [manifest, DISTRIBUTION_HEADER]
    for i, p in zip(dist.support, dist.probabilities):
        lines.append(f"{int(i)},{fmt(float(p))}")
    _write_lines(path, lines)


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    repetition: int
    c_key_bits: float
    upper_bound_bits: float
    best_class_index: int
    best_class_size: int


def write_sweep_csv(path, rows, manifest: str) -> None:
    lines = [manifest, SWEEP_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                fmt(v)
                for v in (
                    r.axis,
                    r.value,
                    r.repetition,
                    r.c_key_bits,
                    r.upper_bound_bits,
                    r.best_class_index,
                    r.best_class_size,
                )
            )
        )
    _write_lines(path, lines)


def _protocol_row_values(report) -> list[float]:
    return [
        report.n,
        report.config.pilots,
        report.config.levels,
        report.config.snr_min_db,
        report.config.rho_db,
        report.delta_e,
        report.class_index,
        report.capacity_bits,
        report.sym_disagreement,
        report.bit_disagreement,
        report.leak_q_t_bits,
        report.leak_m_t_bits,
    ]


def write_protocol_csv(path, reports, manifest: str) -> None:
    """Per-repetition rows plus mean/std summary rows (seed column labels them)."""
    lines = [manifest, PROTOCOL_HEADER]
    table = []
    for rep in reports:
        values = _protocol_row_values(rep)
        table.append(values)
        lines.append(",".join([fmt(rep.seed)] + [fmt(v) for v in values]))
    if table:
        arr = np.array(table, dtype=float)
        lines.append(",".join(["mean"] + [fmt(v) for v in arr.mean(axis=0)]))
        std = arr.std(axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros(arr.shape[1])
        lines.append(",".join(["std"] + [fmt(v) for v in std]))
    _write_lines(path, lines)


def write_key_material_hex(path, bit_arrays, manifest: str) -> None:
    """One hex string per repetition; bits are MSB-first padded to nibbles."""
    lines = [manifest]
    for bits in bit_arrays:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.size == 0:
            lines.append("")
            continue
        pad = (-bits.size) % 4
        padded = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
        nibbles = padded.reshape(-1, 4) @ np.array([8, 4, 2, 1], dtype=np.uint8)
        lines.append("".join(f"{v:x}" for v in nibbles))
    _write_lines(path, lines)
