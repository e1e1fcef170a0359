"""Strang split-step integration of

    i u_t + sigma (-Delta)^m u + sigma lambda |u|^p u = 0,

with sigma = +1 for m = 2 (the biharmonic equation i u_t + Delta^2 u +
lambda |u|^p u = 0) and sigma = -1 for m = 1 (i u_t + Delta u - lambda
|u|^p u = 0).  With this convention lambda = +1 is defocusing and
lambda = -1 focusing for both orders, and the conserved energy is
(1/2)||(-Delta)^{m/2} u||^2 + lambda/(p+2) ||u||_{p+2}^{p+2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable

import numpy as np

from .field import ComplexField, SpectralField, fftn, ifftn, resolution_issues
from .grid import Grid

BLOWUP_THRESHOLD = 1e8
WRAP_MASS_FRACTION = 0.9999


class BlowupError(RuntimeError):
    """The field exceeded the blowup threshold or became non-finite."""

    def __init__(self, message: str, state: "SolverState"):
        super().__init__(message)
        self.state = state


class ResolutionError(ValueError):
    """Initial data rejected by the box/resolution checks."""


@dataclass(frozen=True)
class SolverConfig:
    order: int = 2
    p: float = 2.0
    lam: int = 1
    dt: float = 1e-3
    dealias: str = "off"
    t_end: float = 1.0
    record_every: int = 1
    coupling: float = 1.0

    def __post_init__(self) -> None:
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if not self.p > 0:
            raise ValueError("p must be positive")
        if self.lam not in (1, -1):
            raise ValueError("lam must be +1 (defocusing) or -1 (focusing)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.dealias not in ("off", "two_thirds"):
            raise ValueError("dealias must be 'off' or 'two_thirds'")

    @property
    def sigma(self) -> int:
        return 1 if self.order == 2 else -1

    @property
    def strength(self) -> float:
        """Signed coefficient lambda * coupling of the power term."""
        return self.lam * self.coupling

    @property
    def steps(self) -> int:
        return max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))

    def global_guarantee(self, d: int) -> bool:
        """False for focusing runs at or above the mass-critical power."""
        if self.lam == 1 or self.coupling == 0:
            return True
        return self.p < (8.0 if self.order == 2 else 4.0) / d


@dataclass
class SolverState:
    field: ComplexField
    t: float = 0.0
    step: int = 0
    t_wrap: float = math.inf

    @property
    def grid(self) -> Grid:
        return self.field.grid

    def snapshot(self) -> "SolverState":
        return SolverState(self.field.copy(), self.t, self.step, self.t_wrap)


def symbol(grid: Grid, order: int) -> np.ndarray:
    """(-Delta)^m symbol: |k|^2 for m = 1, |k|^4 for m = 2."""
    return grid.table.k4 if order == 2 else grid.table.k2


def linear_phase(grid: Grid, config: SolverConfig, tau: float) -> np.ndarray:
    return np.exp(1j * config.sigma * tau * symbol(grid, config.order))


def linear_flow(u: np.ndarray, grid: Grid, config: SolverConfig, tau: float) -> np.ndarray:
    """Exact free evolution of the sample array by time tau."""
    if tau == 0:
        return u.copy()
    return ifftn(fftn(u) * linear_phase(grid, config, tau))


def dealias_mask(grid: Grid) -> np.ndarray:
    """Keep modes with |index| <= N/3 on every axis (2/3 of Nyquist)."""
    mask = np.ones(grid.shape, dtype=bool)
    for ax, npts in enumerate(grid.shape):
        idx = np.abs(np.fft.fftfreq(npts) * npts)
        shape = [1] * len(grid.shape)
        shape[ax] = npts
        mask = mask & (idx <= npts / 3.0).reshape(shape)
    return mask


def dealias(F: SpectralField) -> SpectralField:
    return SpectralField(F.grid, np.where(dealias_mask(F.grid), F.coeffs, 0))


def linear_step(state: SolverState, tau: float, config: SolverConfig) -> SolverState:
    """Apply the free flow for time tau; the clock is left to the caller."""
    u = linear_flow(state.field.samples, state.grid, config, tau)
    return replace(state, field=ComplexField(state.grid, u))


def _potential(u: np.ndarray, config: SolverConfig, mask: np.ndarray | None) -> np.ndarray:
    v = np.abs(u) ** config.p
    if mask is not None:
        # Filtering the real potential keeps the phase rotation unitary.
        v = np.real(ifftn(np.where(mask, fftn(v), 0)))
    return v


def nonlinear_flow(u: np.ndarray, config: SolverConfig, tau: float, mask: np.ndarray | None = None) -> np.ndarray:
    if tau == 0 or config.coupling == 0:
        return u.copy()
    return u * np.exp(1j * config.sigma * config.strength * tau * _potential(u, config, mask))


def nonlinear_step(state: SolverState, tau: float, config: SolverConfig) -> SolverState:
    """Pointwise phase rotation solving the power-term ODE exactly."""
    mask = dealias_mask(state.grid) if config.dealias == "two_thirds" else None
    u = nonlinear_flow(state.field.samples, config, tau, mask)
    return replace(state, field=ComplexField(state.grid, u))


class Stepper:
    """Strang step with the linear phases for +/-dt precomputed."""

    def __init__(self, grid: Grid, config: SolverConfig, dt: float | None = None):
        self.grid = grid
        self.config = config
        self.dt = config.dt if dt is None else dt
        self.phase = linear_phase(grid, config, self.dt)
        self.mask = dealias_mask(grid) if config.dealias == "two_thirds" else None

    def advance(self, u: np.ndarray) -> np.ndarray:
        half = 0.5 * self.dt
        u = nonlinear_flow(u, self.config, half, self.mask)
        u = ifftn(fftn(u) * self.phase)
        return nonlinear_flow(u, self.config, half, self.mask)


def check_blowup(u: np.ndarray) -> str | None:
    peak = np.max(np.abs(u))
    if not np.isfinite(peak):
        return "field became non-finite"
    if peak > BLOWUP_THRESHOLD:
        return f"field max {peak:.3e} exceeds {BLOWUP_THRESHOLD:g}"
    return None


def strang_step(state: SolverState, config: SolverConfig, stepper: Stepper | None = None) -> SolverState:
    """Half nonlinear, full linear, half nonlinear; advances t by dt.

    On blowup the raised error carries the last state that passed the check.
    """
    stepper = stepper or Stepper(state.grid, config)
    with np.errstate(over="ignore", invalid="ignore"):
        u = stepper.advance(state.field.samples)
    reason = check_blowup(u)
    if reason:
        raise BlowupError(f"step {state.step + 1}: {reason}", state)
    return SolverState(ComplexField(state.grid, u), state.t + stepper.dt, state.step + 1, state.t_wrap)


# -- wrap-around time ---------------------------------------------------------

def group_speed(grid: Grid, order: int) -> np.ndarray:
    """Euclidean group speed |grad_{k_x} omega| of every mode."""
    kx2 = np.zeros(grid.shape)
    for ax in range(grid.d):
        kx2 = kx2 + grid.table.mesh(ax) ** 2
    kx = np.sqrt(kx2)
    if order == 2:
        return 4.0 * grid.table.k2 * kx
    return 2.0 * kx


def wrap_time(f: ComplexField, order: int, fraction: float = WRAP_MASS_FRACTION) -> float:
    """L / v_max with v_max the speed below which `fraction` of the spectral mass lies."""
    grid = f.grid
    if grid.d == 0:
        return math.inf
    w = np.abs(fftn(f.samples)).ravel() ** 2
    total = w.sum()
    if total == 0:
        return math.inf
    v = group_speed(grid, order).ravel()
    order_idx = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order_idx])
    i = int(np.searchsorted(cum, fraction * total))
    vmax = float(v[order_idx[min(i, v.size - 1)]])
    return math.inf if vmax == 0 else grid.spec.box_half_length / vmax


# -- driver -------------------------------------------------------------------

@dataclass
class RunResult:
    records: list[Any]
    state: SolverState
    t_wrap: float
    snapshots: list[SolverState] = field(default_factory=list)
    captured: dict[int, SolverState] = field(default_factory=dict)


RecordFn = Callable[[SolverState], Any]
Observer = Callable[[SolverState, Any], None]


def evolve(
    config: SolverConfig,
    initial: ComplexField,
    observers: Iterable[Observer] = (),
    recorder: RecordFn | None = None,
    force: bool = False,
    keep_snapshots: bool = False,
    capture_steps: Iterable[int] = (),
) -> RunResult:
    """Run Strang steps to t_end, recording every ``record_every`` steps.

    ``recorder`` maps a state to a record (defaults to the standard
    diagnostics record); ``observers`` receive (snapshot, record).  With
    ``keep_snapshots`` the recorded states are kept as copies, and states
    at ``capture_steps`` are kept in ``RunResult.captured`` whether or not
    they are recorded.
    """
    grid = initial.grid
    if grid.d < 1:
        raise ValueError("evolution needs at least one Euclidean axis")
    if not force:
        issues = resolution_issues(initial)
        if issues:
            raise ResolutionError("initial data rejected: " + "; ".join(issues) + " (use force to override)")
    if recorder is None:
        from .diagnostics import Recorder as _Default

        recorder = _Default(config)
    observers = list(observers)
    t_wrap = wrap_time(initial, config.order)
    stepper = Stepper(grid, config)
    state = SolverState(initial.copy(), 0.0, 0, t_wrap)
    records, snaps = [], []
    capture = set(int(k) for k in capture_steps)
    captured = {0: state.snapshot()} if 0 in capture else {}

    def emit(st: SolverState) -> None:
        snap = st.snapshot()
        rec = recorder(snap)
        records.append(rec)
        if keep_snapshots:
            snaps.append(snap)
        for obs in observers:
            obs(snap, rec)

    emit(state)
    nsteps = config.steps
    for k in range(1, nsteps + 1):
        state = strang_step(state, config, stepper)
        state.t = k * config.dt
        if k in capture:
            captured[k] = state.snapshot()
        if k % config.record_every == 0 or k == nsteps:
            emit(state)
    return RunResult(records, state, t_wrap, snaps, captured)
