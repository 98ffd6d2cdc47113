"""Experiment configuration: defaults, config-file loading, CLI overrides.

Defaults follow the reference operating point: 500 m x 500 m area at 10 m
altitude, f_c = 2400 MHz, sigma_sh = 5 dB (Bob) / 3 dB (Eve), Eve 119 m from
Bob, K = 10 pilots, SNR_min = 10 dB, rho = 10 dB, Q = 16 levels. The grid is
50 x 50 by default (dense-Cholesky friendly); larger grids work with
approx_fields. Antenna gains of 60 dB each put the peak linear gain well
above 1 so every rho/SNR_min combination in the experiments is feasible.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .geometry import PositionGrid, ReceiverConfig


@dataclass(frozen=True)
class ExperimentConfig:
    nx: int = 50
    ny: int = 50
    area_m: float = 500.0
    altitude_m: float = 10.0
    fc_mhz: float = 2400.0
    a_tx_db: float = 60.0
    a_rx_db: float = 60.0
    sigma_sh_a_db: float = 5.0
    sigma_sh_e_db: float = 3.0
    d_ref_m: float = 20.0
    eve_dist_m: float = 119.0
    snr_min_db: float = 10.0
    rho_db: float = 10.0
    pilots: int = 10
    levels: int = 16
    delta_e: float | None = None  # None = auto: Eve gain range / 256
    n_transmissions: int = 10000
    class_limit: int = 10
    seed: int = 0
    repetitions: int = 1
    sweep_axis: str | None = None
    sweep_values: tuple | None = None
    approx_fields: bool = False
    training_pilots: int | None = None

    def __post_init__(self):
        for name in ("area_m", "altitude_m", "fc_mhz", "d_ref_m", "eve_dist_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("nx", "ny", "pilots", "levels", "class_limit"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.sigma_sh_a_db < 0 or self.sigma_sh_e_db < 0:
            raise ValueError("shadowing stds must be >= 0")
        if self.n_transmissions < 0 or self.repetitions < 0:
            raise ValueError("counts must be >= 0")
        if self.delta_e is not None and self.delta_e <= 0:
            raise ValueError("delta_e must be positive or auto")
        if self.sweep_values is not None and len(self.sweep_values) == 0:
            raise ValueError("sweep values must be non-empty")

    def grid(self) -> PositionGrid:
        spacing = self.area_m / (self.nx - 1) if self.nx > 1 else self.area_m
        return PositionGrid(
            nx=self.nx, ny=self.ny, spacing=spacing, altitude=self.altitude_m
        )

    def bob(self) -> ReceiverConfig:
        cx, cy, _ = self.grid().center_ground
        return ReceiverConfig(
            role="bob",
            position=(float(cx), float(cy), 0.0),
            sigma_sh_db=self.sigma_sh_a_db,
            d_ref_m=self.d_ref_m,
        )

    def eve(self) -> ReceiverConfig:
        cx, cy, _ = self.grid().center_ground
        return ReceiverConfig(
            role="eve",
            position=(float(cx) + self.eve_dist_m, float(cy), 0.0),
            sigma_sh_db=self.sigma_sh_e_db,
            d_ref_m=self.d_ref_m,
        )

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    def manifest_line(self) -> str:
        """Single comment line with every resolved parameter, for output files."""
        parts = []
        for f in sorted(fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            if v is None:
                v = "auto" if f.name == "delta_e" else "none"
            parts.append(f"{f.name}={_fmt_value(v)}")
        return "# " + " ".join(parts)


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, tuple):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


_INT_KEYS = {
    "nx", "ny", "pilots", "levels", "n_transmissions",
    "class_limit", "seed", "repetitions", "training_pilots",
}
_FLOAT_KEYS = {
    "area_m", "altitude_m", "fc_mhz", "a_tx_db", "a_rx_db", "sigma_sh_a_db",
    "sigma_sh_e_db", "d_ref_m", "eve_dist_m", "snr_min_db", "rho_db", "delta_e",
}
_BOOL_KEYS = {"approx_fields"}


def parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("delta_e", "training_pilots") and raw.lower() in ("auto", "none", ""):
        return None
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for {key}: {raw!r}")
    if key == "sweep_axis":
        return raw
    if key == "sweep_values":
        return tuple(float(x) for x in raw.split(","))
    raise KeyError(key)


def load_config_file(path) -> dict:
    """Flat key = value file; '#' starts a comment; unknown keys rejected."""
    known = {f.name for f in fields(ExperimentConfig)}
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = parse_value(key, raw)
    return out


def config_from_sources(file_path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults <- config file <- explicit overrides (later wins)."""
    values: dict = {}
    if file_path is not None:
        values.update(load_config_file(file_path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)
