"""Voxel occupancy grid and its binary ``NSOG`` file format."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NSOG_MAGIC = b"NSOG"
NSOG_VERSION = 1
_HEADER = struct.Struct("<4sBIIIddd")


class OccupancyFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Dense boolean voxel volume indexed ``cells[ix, iy, iz]``.

    Voxel ``(i, j, k)`` spans ``origin + [i, i+1) * cell_size`` in x (same for
    y) and ``[k, k+1) * cell_size`` in z, with z measured from 0.
    """

    origin: tuple[float, float]
    cell_size: float
    cells: np.ndarray
    boxes: tuple[tuple[float, ...], ...] = field(default=())

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        cells = np.ascontiguousarray(self.cells, dtype=bool)
        if cells.ndim != 3:
            raise ValueError("cells must be a 3-D array")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, origin, cell_size, dims) -> "OccupancyGrid":
        return cls(tuple(origin), float(cell_size), np.zeros(tuple(dims), dtype=bool))

    @classmethod
    def from_boxes(cls, origin, cell_size, dims, boxes: Sequence[Sequence[float]]) -> "OccupancyGrid":
        """Mark every voxel whose centre lies inside one of the axis-aligned boxes.

        Boxes are ``(x0, y0, z0, x1, y1, z1)`` in meters.
        """
        cells = np.zeros(tuple(dims), dtype=bool)
        ox, oy = origin
        for b in boxes:
            x0, y0, z0, x1, y1, z1 = (float(v) for v in b)
            i0 = max(0, math.ceil((x0 - ox) / cell_size - 0.5))
            i1 = min(dims[0], math.ceil((x1 - ox) / cell_size - 0.5))
            j0 = max(0, math.ceil((y0 - oy) / cell_size - 0.5))
            j1 = min(dims[1], math.ceil((y1 - oy) / cell_size - 0.5))
            k0 = max(0, math.ceil(z0 / cell_size - 0.5))
            k1 = min(dims[2], math.ceil(z1 / cell_size - 0.5))
            if i0 < i1 and j0 < j1 and k0 < k1:
                cells[i0:i1, j0:j1, k0:k1] = True
        return cls((float(ox), float(oy)), float(cell_size), cells,
                   tuple(tuple(float(v) for v in b) for b in boxes))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.cells.shape)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        nx, ny, _ = self.dims
        ox, oy = self.origin
        return (ox, oy, ox + nx * self.cell_size, oy + ny * self.cell_size)

    @property
    def height(self) -> float:
        return self.dims[2] * self.cell_size

    def index_of(self, p: Sequence[float]) -> tuple[int, int, int]:
        """Voxel index containing world point ``p`` (may be out of bounds)."""
        s = self.cell_size
        return (
            math.floor((p[0] - self.origin[0]) / s),
            math.floor((p[1] - self.origin[1]) / s),
            math.floor((p[2] if len(p) > 2 else 0.0) / s),
        )

    def center_of(self, idx: Sequence[int]) -> tuple[float, float, float]:
        s = self.cell_size
        return (
            self.origin[0] + (idx[0] + 0.5) * s,
            self.origin[1] + (idx[1] + 0.5) * s,
            (idx[2] + 0.5) * s,
        )

    def in_bounds(self, idx: Sequence[int]) -> bool:
        nx, ny, nz = self.cells.shape
        return 0 <= idx[0] < nx and 0 <= idx[1] < ny and 0 <= idx[2] < nz

    def is_occupied(self, p: Sequence[float]) -> bool:
        """Occupancy at a world point; anything outside the volume is free."""
        idx = self.index_of(p)
        if not self.in_bounds(idx):
            return False
        return bool(self.cells[idx])

    def ground_height(self, x: float, y: float) -> float:
        """Top of the occupied run that starts at the bottom layer (0 on bare ground)."""
        i, j, _ = self.index_of((x, y, 0.0))
        nx, ny, nz = self.cells.shape
        if not (0 <= i < nx and 0 <= j < ny):
            return 0.0
        column = self.cells[i, j]
        free = np.flatnonzero(~column)
        k = int(free[0]) if len(free) else nz
        return k * self.cell_size

    def layer(self, altitude: float) -> np.ndarray:
        """2-D occupancy mask ``[ix, iy]`` of the layer containing ``altitude``."""
        k = math.floor(altitude / self.cell_size)
        if not 0 <= k < self.dims[2]:
            return np.zeros(self.dims[:2], dtype=bool)
        return self.cells[:, :, k]

    def to_bytes(self) -> bytes:
        nx, ny, nz = self.dims
        header = _HEADER.pack(NSOG_MAGIC, NSOG_VERSION, nx, ny, nz,
                              self.cell_size, self.origin[0], self.origin[1])
        return header + np.packbits(self.cells.ravel(order="C"), bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "OccupancyGrid":
        if len(data) < _HEADER.size:
            raise OccupancyFormatError("truncated NSOG header")
        magic, version, nx, ny, nz, cell, ox, oy = _HEADER.unpack_from(data)
        if magic != NSOG_MAGIC:
            raise OccupancyFormatError(f"bad magic {magic!r}")
        if version != NSOG_VERSION:
            raise OccupancyFormatError(f"unsupported NSOG version {version}")
        n = nx * ny * nz
        payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
        if payload.size != (n + 7) // 8:
            raise OccupancyFormatError("payload size does not match dimensions")
        bits = np.unpackbits(payload, count=n, bitorder="little").astype(bool)
        return cls((ox, oy), cell, bits.reshape((nx, ny, nz)))


def write_nsog(path, grid: OccupancyGrid) -> None:
    with open(path, "wb") as fh:
        fh.write(grid.to_bytes())


def read_nsog(path) -> OccupancyGrid:
    with open(path, "rb") as fh:
        return OccupancyGrid.from_bytes(fh.read())
