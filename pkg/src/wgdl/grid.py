"""Discretized waveguide geometry R^d x T^n and its Fourier dual.

Euclidean axes are truncated to the periodic box [-L, L); torus axes have
period ``torus_period``.  Arrays are laid out row-major with the d Euclidean
axes first, so reducing over the trailing n axes integrates out the torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MIN_POINTS = 4


class GridError(ValueError):
    """Invalid grid geometry."""


@dataclass(frozen=True)
class GridSpec:
    euclid_dims: int
    torus_dims: int
    box_half_length: float
    points_euclid: int
    points_torus: int = 4
    torus_period: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        if self.euclid_dims < 0 or self.torus_dims < 0:
            raise GridError("dimension counts must be nonnegative")
        if self.euclid_dims + self.torus_dims == 0:
            raise GridError("grid needs at least one axis")
        if not (self.box_half_length > 0 and math.isfinite(self.box_half_length)):
            raise GridError(f"box_half_length must be positive, got {self.box_half_length}")
        if not (self.torus_period > 0 and math.isfinite(self.torus_period)):
            raise GridError(f"torus_period must be positive, got {self.torus_period}")
        if self.euclid_dims and self.points_euclid < MIN_POINTS:
            raise GridError(f"points_euclid must be >= {MIN_POINTS}, got {self.points_euclid}")
        if self.torus_dims and self.points_torus < MIN_POINTS:
            raise GridError(f"points_torus must be >= {MIN_POINTS}, got {self.points_torus}")

    @property
    def dims(self) -> int:
        return self.euclid_dims + self.torus_dims

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_euclid,) * self.euclid_dims + (self.points_torus,) * self.torus_dims

    @property
    def euclid_shape(self) -> tuple[int, ...]:
        return (self.points_euclid,) * self.euclid_dims

    @property
    def total_points(self) -> int:
        return math.prod(self.shape)

    @property
    def dx(self) -> float:
        return 2.0 * self.box_half_length / self.points_euclid

    @property
    def dalpha(self) -> float:
        return self.torus_period / self.points_torus

    @property
    def euclid_cell(self) -> float:
        return self.dx**self.euclid_dims

    @property
    def torus_cell(self) -> float:
        return self.dalpha**self.torus_dims

    @property
    def cell_volume(self) -> float:
        return self.euclid_cell * self.torus_cell

    @property
    def torus_volume(self) -> float:
        return self.torus_period**self.torus_dims

    @property
    def volume(self) -> float:
        return (2.0 * self.box_half_length) ** self.euclid_dims * self.torus_volume


@dataclass(frozen=True)
class WaveNumberTable:
    """Per-axis wavenumbers (FFT order) and the |k|^2, |k|^4 symbols."""

    axes: tuple[np.ndarray, ...]
    k2: np.ndarray
    k4: np.ndarray

    def __post_init__(self) -> None:
        for a in self.axes:
            a.setflags(write=False)
        self.k2.setflags(write=False)
        self.k4.setflags(write=False)

    def mesh(self, axis: int) -> np.ndarray:
        """Wavenumber of ``axis`` broadcast against the full grid."""
        shape = [1] * len(self.axes)
        shape[axis] = self.axes[axis].size
        return self.axes[axis].reshape(shape)

    def odd_mesh(self, axis: int) -> np.ndarray:
        """``mesh`` with the unpaired Nyquist entry zeroed.

        Odd-order derivative multipliers use this so that derivatives of
        real fields stay real and d(conj u) = conj(du) holds exactly.
        """
        k = self.axes[axis].copy()
        if k.size % 2 == 0:
            k[k.size // 2] = 0.0
        shape = [1] * len(self.axes)
        shape[axis] = k.size
        return k.reshape(shape)


@dataclass(frozen=True, eq=False)
class Grid:
    """Validated grid: the spec together with coordinates and wavenumbers."""

    spec: GridSpec
    table: WaveNumberTable = field(repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spec.shape

    @property
    def d(self) -> int:
        return self.spec.euclid_dims

    @property
    def n(self) -> int:
        return self.spec.torus_dims

    @cached_property
    def euclid_coords(self) -> np.ndarray:
        s = self.spec
        return -s.box_half_length + s.dx * np.arange(s.points_euclid)

    @cached_property
    def torus_coords(self) -> np.ndarray:
        s = self.spec
        return s.dalpha * np.arange(s.points_torus)

    def coord(self, axis: int) -> np.ndarray:
        """Coordinate of ``axis`` broadcast against the full grid."""
        c = self.euclid_coords if axis < self.d else self.torus_coords
        shape = [1] * self.spec.dims
        shape[axis] = c.size
        return c.reshape(shape)

    def same_as(self, other: "Grid") -> bool:
        return self is other or self.spec == other.spec


def make_grid(spec: GridSpec) -> Grid:
    """Build wavenumber tables for ``spec``.

    Euclidean axes carry 2*pi*m/(2L); torus axes carry integers scaled by
    2*pi/torus_period.
    """
    axes = []
    for _ in range(spec.euclid_dims):
        axes.append(2.0 * np.pi * np.fft.fftfreq(spec.points_euclid, d=spec.dx))
    for _ in range(spec.torus_dims):
        axes.append(2.0 * np.pi * np.fft.fftfreq(spec.points_torus, d=spec.dalpha))
    k2 = np.zeros(spec.shape)
    for i, a in enumerate(axes):
        shape = [1] * spec.dims
        shape[i] = a.size
        k2 = k2 + a.reshape(shape) ** 2
    return Grid(spec, WaveNumberTable(tuple(axes), k2, k2 * k2))


def dispersion_symbol(table: WaveNumberTable, order: int) -> np.ndarray:
    """|k|^2 for order 2, |k|^4 for order 4."""
    if order == 2:
        return table.k2
    if order == 4:
        return table.k4
    raise ValueError(f"order must be 2 or 4, got {order}")
