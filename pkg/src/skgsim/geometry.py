"""Position grid and receiver placement."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class PositionGrid:
    """Discrete set of transmitter positions on a horizontal grid at fixed altitude.

    Positions are enumerated row-major: index i = iy * nx + ix, with
    x = origin[0] + ix * spacing and y = origin[1] + iy * spacing.
    """

    nx: int
    ny: int
    spacing: float
    altitude: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if self.altitude <= 0:
            raise ValueError("altitude must be positive")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @cached_property
    def positions(self) -> np.ndarray:
        """All grid positions as an (M, 3) array, row-major order."""
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        xs = self.origin[0] + ix * self.spacing
        ys = self.origin[1] + iy * self.spacing
        gx, gy = np.meshgrid(xs, ys)  # rows vary in y
        out = np.column_stack(
            [gx.ravel(), gy.ravel(), np.full(self.size, float(self.altitude))]
        )
        out.setflags(write=False)
        return out

    def position(self, index: int) -> np.ndarray:
        return self.positions[index]

    @property
    def span(self) -> tuple[float, float]:
        """Extent of the grid in metres along x and y."""
        return (self.nx - 1) * self.spacing, (self.ny - 1) * self.spacing

    @property
    def center_ground(self) -> np.ndarray:
        """Grid center projected to the ground plane (z = 0)."""
        sx, sy = self.span
        return np.array([self.origin[0] + sx / 2.0, self.origin[1] + sy / 2.0, 0.0])


@dataclass(frozen=True)
class ReceiverConfig:
    """A fixed ground receiver with its shadowing statistics.

    sigma_sh_db is the shadowing standard deviation in dB; d_ref_m the
    coherence distance of the exponential spatial correlation model.
    """

    role: str
    position: tuple[float, float, float]
    sigma_sh_db: float
    d_ref_m: float

    def __post_init__(self):
        if self.role not in ("bob", "eve"):
            raise ValueError(f"receiver role must be 'bob' or 'eve', got {self.role!r}")
        if self.sigma_sh_db < 0:
            raise ValueError("shadowing std must be >= 0")
        if self.d_ref_m <= 0:
            raise ValueError("coherence distance must be positive")

    @property
    def position_array(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)
