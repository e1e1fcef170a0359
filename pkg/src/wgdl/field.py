"""Complex fields on a waveguide grid: transforms, norms and constructors.

Spectral coefficients use the normalization c_k = fftn(u) / N, so a plane
wave of unit amplitude has a single coefficient equal to one and Parseval
reads  ||u||_2^2 = V * sum |c_k|^2  with V the grid volume.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Grid, GridSpec, make_grid

CHECKPOINT_MAGIC = b"WGDL1\0"
EDGE_TOLERANCE = 1e-10
SPECTRAL_TOLERANCE = 1e-4

_workers = 1


class ResolutionWarning(UserWarning):
    """Initial data is not well contained in the truncated box."""


def set_fft_workers(n: int) -> None:
    """Threads used by the FFT backend; results do not depend on it."""
    global _workers
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _workers = int(n)


def fft_workers() -> int:
    return _workers


def fftn(a: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    return sfft.fftn(a, axes=axes, workers=_workers)


def ifftn(a: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    return sfft.ifftn(a, axes=axes, workers=_workers)


@dataclass(eq=False)
class ComplexField:
    grid: Grid
    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.shape != self.grid.shape:
            if self.samples.size != self.grid.spec.total_points:
                raise ValueError(
                    f"sample count {self.samples.size} does not match grid ({self.grid.spec.total_points})"
                )
            self.samples = self.samples.reshape(self.grid.shape)
        if not np.all(np.isfinite(self.samples)):
            raise FloatingPointError("field contains NaN or Inf")

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.samples.copy())

    def conj(self) -> "ComplexField":
        return ComplexField(self.grid, np.conj(self.samples))

    def roll(self, shifts: Sequence[int]) -> "ComplexField":
        """Cyclic translation by whole cells along each axis."""
        return ComplexField(self.grid, np.roll(self.samples, tuple(shifts), axis=tuple(range(len(shifts)))))


@dataclass(eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray


def to_spectral(f: ComplexField) -> SpectralField:
    return SpectralField(f.grid, fftn(f.samples) / f.grid.spec.total_points)


def to_physical(F: SpectralField) -> ComplexField:
    return ComplexField(F.grid, ifftn(F.coeffs) * F.grid.spec.total_points)


# -- spectral calculus ------------------------------------------------------

def apply_multiplier(u: np.ndarray, mult: np.ndarray) -> np.ndarray:
    return ifftn(fftn(u) * mult)


def derivative(u: np.ndarray, grid: Grid, axes: Sequence[int]) -> np.ndarray:
    """Spectral mixed partial derivative, one entry of ``axes`` per order."""
    mult = np.ones(grid.shape, dtype=np.complex128)
    for ax in set(axes):
        count = list(axes).count(ax)
        k = grid.table.mesh(ax)
        mult = mult * (1j * k) ** (count - count % 2)
        if count % 2:
            mult = mult * (1j * grid.table.odd_mesh(ax))
    return apply_multiplier(u, mult)


def laplacian(u: np.ndarray, grid: Grid) -> np.ndarray:
    return apply_multiplier(u, -grid.table.k2)


def gradient_hat(uh: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Physical-space derivative along ``axis`` from precomputed fftn(u)."""
    return ifftn(uh * (1j * grid.table.odd_mesh(axis)))


# -- norms ------------------------------------------------------------------

def lq_norm(f: ComplexField, q: float) -> float:
    """Riemann-sum L^q norm; q = inf gives the max modulus."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    a = np.abs(f.samples)
    if math.isinf(q):
        return float(a.max())
    if q == 2:
        s = np.sum(a * a)
    else:
        s = np.sum(a**q)
    return float((s * f.grid.spec.cell_volume) ** (1.0 / q))


def spectral_l2_norm(F: SpectralField) -> float:
    return float(math.sqrt(F.grid.spec.volume * np.sum(np.abs(F.coeffs) ** 2)))


def sobolev_norm(f: ComplexField, s: float) -> float:
    """Inhomogeneous H^s norm with multiplier (1 + |k|^2)^{s/2}."""
    if s < 0:
        raise ValueError("s must be >= 0")
    c = to_spectral(f).coeffs
    w = (1.0 + f.grid.table.k2) ** s
    return float(math.sqrt(f.grid.spec.volume * np.sum(w * np.abs(c) ** 2)))


def _torus_axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(grid.d, grid.d + grid.n))


def torus_fiber_norms(u: np.ndarray, grid: Grid, gamma: float, homogeneous: bool = False) -> np.ndarray:
    """H^gamma (or homogeneous) norm of each fiber alpha -> u(x, alpha)."""
    if grid.n == 0:
        raise ValueError("torus fiber norms need n >= 1")
    taxes = _torus_axes(grid)
    nt = grid.spec.points_torus**grid.n
    c = fftn(u, axes=taxes) / nt
    kt2 = np.zeros((1,) * grid.d + (grid.spec.points_torus,) * grid.n)
    for ax in taxes:
        kt2 = kt2 + _torus_mesh(grid, ax) ** 2
    if homogeneous:
        w = kt2**gamma if gamma > 0 else (kt2 > 0).astype(float)
    else:
        w = (1.0 + kt2) ** gamma
    return np.sqrt(grid.spec.torus_volume * np.sum(w * np.abs(c) ** 2, axis=taxes))


def _torus_mesh(grid: Grid, ax: int) -> np.ndarray:
    shape = [1] * grid.spec.dims
    shape[ax] = grid.spec.points_torus
    return grid.table.axes[ax].reshape(shape)


def mixed_sobolev_torus(f: ComplexField, gamma: float) -> np.ndarray:
    """Per Euclidean node, the H^gamma_alpha norm of the torus fiber."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return torus_fiber_norms(f.samples, f.grid, gamma)


# -- constructors -----------------------------------------------------------

def _edge_ratio(u: np.ndarray, grid: Grid) -> float:
    """Largest modulus on the Euclidean box boundary relative to the peak."""
    peak = np.abs(u).max()
    if peak == 0 or grid.d == 0:
        return 0.0
    edge = 0.0
    for ax in range(grid.d):
        sl = [slice(None)] * grid.spec.dims
        sl[ax] = 0
        edge = max(edge, float(np.abs(u[tuple(sl)]).max()))
    return edge / float(peak)


def _spectral_tail(u: np.ndarray, grid: Grid) -> float:
    """Largest coefficient in the outermost mode shell relative to the peak."""
    c = np.abs(fftn(u))
    peak = c.max()
    if peak == 0:
        return 0.0
    tail = 0.0
    for ax in range(grid.spec.dims):
        npts = grid.shape[ax]
        sl = [slice(None)] * grid.spec.dims
        sl[ax] = npts // 2
        tail = max(tail, float(c[tuple(sl)].max()))
    return tail / float(peak)


def resolution_issues(
    f: ComplexField, edge_tol: float = EDGE_TOLERANCE, spectral_tol: float = SPECTRAL_TOLERANCE
) -> list[str]:
    """Reasons the field is not contained in the box or not resolved."""
    issues = []
    e = _edge_ratio(f.samples, f.grid)
    if e > edge_tol:
        issues.append(f"box-edge modulus {e:.3e} of peak exceeds {edge_tol:g}")
    s = _spectral_tail(f.samples, f.grid)
    if s > spectral_tol:
        issues.append(f"Nyquist-shell coefficient {s:.3e} of peak exceeds {spectral_tol:g}")
    return issues


def make_gaussian(
    grid: Grid,
    width: float,
    center: Sequence[float] | None = None,
    modulation: Sequence[float] | None = None,
    amplitude: float = 1.0,
) -> ComplexField:
    """A exp(-|x-c|^2 / (2 w^2)) exp(i k.z), constant along the torus envelope.

    ``modulation`` is a wavevector over all d+n axes; its torus components
    must be on-grid so the field stays periodic in alpha.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    d, n = grid.d, grid.n
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if center.shape != (d,):
        raise ValueError(f"center must have {d} components")
    k = np.zeros(d + n) if modulation is None else np.asarray(modulation, dtype=float)
    if k.shape != (d + n,):
        raise ValueError(f"modulation must have {d + n} components")
    for ax in range(d, d + n):
        _check_on_grid(grid, ax, k[ax])
    r2 = np.zeros(grid.shape)
    phase = np.zeros(grid.shape)
    for ax in range(d):
        r2 = r2 + (grid.coord(ax) - center[ax]) ** 2
    for ax in range(d + n):
        if k[ax]:
            phase = phase + k[ax] * grid.coord(ax)
    u = amplitude * np.exp(-r2 / (2.0 * width**2))
    if np.any(k):
        u = u * np.exp(1j * phase)
    f = ComplexField(grid, u)
    issues = resolution_issues(f)
    if issues:
        warnings.warn("; ".join(issues), ResolutionWarning, stacklevel=2)
    return f


def _check_on_grid(grid: Grid, ax: int, k: float) -> int:
    step = grid.table.axes[ax][1]
    m = k / step
    mi = round(m)
    if abs(m - mi) > 1e-9 * max(1.0, abs(m)):
        raise ValueError(f"wavenumber {k} is not on the grid of axis {ax} (spacing {step})")
    return mi


def make_plane_wave(grid: Grid, k: Sequence[float], amplitude: complex = 1.0) -> ComplexField:
    """amplitude * exp(i k.z) for an on-grid wavevector k."""
    k = np.asarray(k, dtype=float)
    if k.shape != (grid.spec.dims,):
        raise ValueError(f"wavevector must have {grid.spec.dims} components")
    phase = np.zeros(grid.shape)
    for ax in range(grid.spec.dims):
        _check_on_grid(grid, ax, k[ax])
        phase = phase + k[ax] * grid.coord(ax)
    return ComplexField(grid, amplitude * np.exp(1j * phase))


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(path: str | Path, f: ComplexField) -> None:
    s = f.grid.spec
    counts = [s.points_euclid] * s.euclid_dims + [s.points_torus] * s.torus_dims
    head = CHECKPOINT_MAGIC + struct.pack(f"<II{len(counts)}I", s.euclid_dims, s.torus_dims, *counts)
    head += struct.pack("<dd", s.box_half_length, s.torus_period)
    body = np.ascontiguousarray(f.samples).astype("<c16").tobytes(order="C")
    Path(path).write_bytes(head + body)


def load_checkpoint(path: str | Path) -> ComplexField:
    raw = Path(path).read_bytes()
    if raw[:6] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    off = 6
    d, n = struct.unpack_from("<II", raw, off)
    off += 8
    counts = struct.unpack_from(f"<{d + n}I", raw, off)
    off += 4 * (d + n)
    L, period = struct.unpack_from("<dd", raw, off)
    off += 16
    if len(set(counts[:d])) > 1 or len(set(counts[d:])) > 1:
        raise ValueError(f"{path}: per-axis counts must agree within each axis group")
    spec = GridSpec(
        euclid_dims=d,
        torus_dims=n,
        box_half_length=L,
        points_euclid=counts[0] if d else 4,
        points_torus=counts[d] if n else 4,
        torus_period=period,
    )
    grid = make_grid(spec)
    expected = 16 * spec.total_points
    if len(raw) - off != expected:
        raise ValueError(f"{path}: expected {expected} sample bytes, found {len(raw) - off}")
    samples = np.frombuffer(raw, dtype="<c16", offset=off).reshape(spec.shape).astype(np.complex128)
    return ComplexField(grid, samples)
