"""Functionals monitored along a run: conserved quantities, localized and
L^q norms, the interaction Morawetz action with its time derivative,
spacetime norms and the scattering residual.

The tensor-product Morawetz action is evaluated for u = v through the
torus marginals

    rho(x) = int_T |u|^2 dalpha,    J(x) = int_T Im(conj(u) grad_x u) dalpha,

as M = 4 int J . (grad a * rho) dx, where * is a zero-padded linear
convolution over the Euclidean box and a(x) = <x>.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
import weakref
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import stats

from . import morawetz_algebra as alg
from .field import ComplexField, fftn, ifftn, sobolev_norm, torus_fiber_norms
from .grid import Grid
from .propagator import SolverConfig, SolverState, linear_flow

BRUTE_FORCE_LIMIT = 10_000


# -- conserved quantities -------------------------------------------------------

def _torus_axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(grid.d, grid.d + grid.n))


def mass(f: ComplexField) -> float:
    a = np.abs(f.samples)
    return float(np.sum(a * a) * f.grid.spec.cell_volume)


def kinetic(f: ComplexField, order: int = 2) -> float:
    """(1/2)||Delta u||^2 for order 2, (1/2)||grad u||^2 for order 1."""
    g = f.grid
    c = fftn(f.samples) / g.spec.total_points
    w = g.table.k4 if order == 2 else g.table.k2
    return float(0.5 * g.spec.volume * np.sum(w * np.abs(c) ** 2))


def potential(f: ComplexField, config: SolverConfig) -> float:
    s = np.sum(np.abs(f.samples) ** (config.p + 2)) * f.grid.spec.cell_volume
    return float(config.strength / (config.p + 2) * s)


def energy(f: ComplexField, config: SolverConfig) -> float:
    return kinetic(f, config.order) + potential(f, config)


# -- localized mass -------------------------------------------------------------

def density(f: ComplexField) -> np.ndarray:
    """rho over the Euclidean grid (torus integrated)."""
    g = f.grid
    a2 = np.abs(f.samples) ** 2
    if g.n:
        a2 = np.sum(a2, axis=_torus_axes(g)) * g.spec.torus_cell
    return a2


def cube_half_cells(grid: Grid, r: float) -> int:
    """Half-width r rounded down to whole cells."""
    return int(math.floor(r / grid.spec.dx + 1e-9))


def _window_sum(a: np.ndarray, h: int) -> np.ndarray:
    """Cyclic sums over windows of 2h+1 cells along every axis."""
    for ax in range(a.ndim):
        npts = a.shape[ax]
        if 2 * h + 1 >= npts:
            a = np.broadcast_to(np.sum(a, axis=ax, keepdims=True), a.shape).copy()
            continue
        ext = np.concatenate([np.take(a, range(npts - h - 1, npts), axis=ax), a, np.take(a, range(0, h), axis=ax)], axis=ax)
        cs = np.cumsum(ext, axis=ax)
        hi = np.take(cs, range(2 * h + 1, 2 * h + 1 + npts), axis=ax)
        lo = np.take(cs, range(0, npts), axis=ax)
        a = hi - lo
    return a


def sup_cube_mass(f: ComplexField, r: float) -> float:
    """max over grid-aligned centers of the mass in x0 + [-r, r]^d (times T^n)."""
    return cube_mass_profile(f, r).max().item()


def cube_mass_profile(f: ComplexField, r: float) -> np.ndarray:
    g = f.grid
    if r < g.spec.dx * (1 - 1e-9):
        raise ValueError(f"r = {r} is below one grid spacing ({g.spec.dx})")
    if r > 2 * g.spec.box_half_length:
        raise ValueError(f"r = {r} exceeds the box length {2 * g.spec.box_half_length}")
    h = cube_half_cells(g, r)
    return _window_sum(density(f) * g.spec.euclid_cell, h)


def effective_r(grid: Grid, r: float) -> float:
    return cube_half_cells(grid, r) * grid.spec.dx


# -- marginals and kernels --------------------------------------------------------

@dataclass
class Marginals:
    rho: np.ndarray
    current: np.ndarray  # shape (d,) + Euclidean grid


def _grad(uh: np.ndarray, grid: Grid, ax: int) -> np.ndarray:
    return ifftn(uh * (1j * grid.table.odd_mesh(ax)))


def _torus_int(a: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.n == 0:
        return a
    return np.sum(a, axis=_torus_axes(grid)) * grid.spec.torus_cell


def marginals(f: ComplexField) -> Marginals:
    g = f.grid
    u = f.samples
    uh = fftn(u)
    cu = np.conj(u)
    cur = np.stack([_torus_int(np.imag(cu * _grad(uh, g, j)), g) for j in range(g.d)])
    return Marginals(density(f), cur)


_kernel_cache: "weakref.WeakKeyDictionary[Grid, dict]" = weakref.WeakKeyDictionary()


def _offsets(grid: Grid) -> list[np.ndarray]:
    """Displacements x_i - x_j on the doubled Euclidean grid, FFT ordered."""
    npts, dx = grid.spec.points_euclid, grid.spec.dx
    m = np.fft.fftfreq(2 * npts) * 2 * npts
    out = []
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = 2 * npts
        out.append((m * dx).reshape(shape))
    return out


def _kernel(grid: Grid, name: str) -> np.ndarray:
    """Real-to-complex transform of a weight derivative on the doubled grid."""
    cache = _kernel_cache.setdefault(grid, {})
    if name in cache:
        return cache[name]
    d = grid.d
    e = _offsets(grid)
    r = np.sqrt(sum(c * c for c in e))
    rho = alg.bracket(r)
    kind, _, idx = name.partition(":")
    if kind == "grad":
        k = e[int(idx)] / rho
    elif kind in ("laplacian", "bilaplacian", "trilaplacian"):
        k = alg.eval_weight_derivative(kind, r, d)
    elif kind in ("hessian", "hessian_laplacian"):
        i, j = (int(t) for t in idx.split(","))
        A, B = alg.eval_weight_derivative(kind, r, d)
        k = B * e[i] * e[j] + (A if i == j else 0.0)
    else:
        raise KeyError(name)
    k = np.broadcast_to(k, (2 * grid.spec.points_euclid,) * d)
    cache[name] = sfft.rfftn(k)
    return cache[name]


def convolve(grid: Grid, name: str, a: np.ndarray) -> np.ndarray:
    """(K * a)(x_i) = sum_j K(x_i - x_j) a(x_j) dx^d with zero padding."""
    npts = grid.spec.points_euclid
    size = (2 * npts,) * grid.d
    ah = sfft.rfftn(a, s=size)
    out = sfft.irfftn(ah * _kernel(grid, name), s=size)
    return out[(slice(0, npts),) * grid.d] * grid.spec.euclid_cell


def _xint(a: np.ndarray, grid: Grid) -> float:
    return float(np.sum(a) * grid.spec.euclid_cell)


# -- Morawetz action ------------------------------------------------------------

def morawetz_action(f: ComplexField) -> float:
    g = f.grid
    if g.d < 1:
        raise ValueError("Morawetz action needs d >= 1")
    mg = marginals(f)
    total = 0.0
    for j in range(g.d):
        total += _xint(mg.current[j] * convolve(g, f"grad:{j}", mg.rho), g)
    return 4.0 * total


def morawetz_action_bruteforce(f: ComplexField) -> float:
    """Definitional pair sum 2 int int grad_{x,y} a . Im(conj(w) grad_{x,y} w), w = u (x) u."""
    g = f.grid
    if g.spec.points_euclid**g.d > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} Euclidean points")
    u = f.samples
    uh = fftn(u)
    dens = (np.abs(u) ** 2).ravel()
    curr = np.stack([np.imag(np.conj(u) * _grad(uh, g, j)).ravel() for j in range(g.d)], axis=1)
    pos = np.stack([np.broadcast_to(g.coord(j), g.shape).ravel() for j in range(g.d)], axis=1)
    dv = g.spec.cell_volume
    total = 0.0
    chunk = max(1, 2_000_000 // max(1, dens.size))
    for s in range(0, dens.size, chunk):
        e = pos[s : s + chunk, None, :] - pos[None, :, :]
        rho = np.sqrt(1.0 + np.sum(e * e, axis=-1))
        grad_a = e / rho[..., None]
        # x-gradient part pairs J(z) with |u(w)|^2; y-gradient part has -grad a.
        term_x = np.einsum("pqj,pj,q->", grad_a, curr[s : s + chunk], dens)
        term_y = -np.einsum("pqj,p,qj->", grad_a, dens[s : s + chunk], curr)
        total += term_x + term_y
    return float(2.0 * total * dv * dv)


# -- time derivative of the Morawetz action ---------------------------------------

@dataclass
class MorawetzTerms:
    """Labeled groups of dM/dt for u = v (biharmonic flow).

    The four Euclidean groups (density, gradient, third_order, hessian)
    together form M1 + M2.  ``cross_flux`` couples the current J with the
    flux K of the density equation rho_t = -2 div K.  ``torus_hessian`` (I)
    and ``torus_bilaplacian`` (II) are the torus-mixed groups; they vanish
    for alpha-independent data.
    """

    density: float
    gradient: float
    third_order: float
    hessian: float
    cross_flux: float
    torus_hessian: float
    torus_bilaplacian: float
    nonlinear: float

    @property
    def M1_plus_M2(self) -> float:
        return self.density + self.gradient + self.third_order + self.hessian

    @property
    def I(self) -> float:  # noqa: E743
        return self.torus_hessian

    @property
    def II(self) -> float:
        return self.torus_bilaplacian

    @property
    def nonlinear_bracket_term(self) -> float:
        return self.nonlinear

    @property
    def total(self) -> float:
        return self.M1_plus_M2 + self.cross_flux + self.torus_hessian + self.torus_bilaplacian + self.nonlinear

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out.update(M1_plus_M2=self.M1_plus_M2, total=self.total)
        return out


def morawetz_rhs_terms(f: ComplexField, config: SolverConfig) -> MorawetzTerms:
    """Evaluate each labeled group of dM/dt; weight derivatives come from
    the closed forms, derivatives of u are spectral."""
    g = f.grid
    if config.order != 2:
        raise ValueError("the labeled decomposition is for the biharmonic flow (order 2)")
    if g.d < 1:
        raise ValueError("needs d >= 1")
    d = g.d
    eu = range(d)
    tor = range(d, d + g.n)
    u = f.samples
    uh = fftn(u)
    cu = np.conj(u)
    du = {j: _grad(uh, g, j) for j in range(d + g.n)}
    ddu = {}
    for i in range(d + g.n):
        for j in eu:
            if i == j:
                ddu[i, j] = ifftn(uh * -(g.table.mesh(i) ** 2))
            else:
                ddu[i, j] = ifftn(uh * (-g.table.odd_mesh(i) * g.table.odd_mesh(j)))
    lap_h = -g.table.k2 * uh
    lap = ifftn(lap_h)

    def tint(a):
        return _torus_int(np.real(a), g)

    rho = density(f)
    GE = tint(sum(np.abs(du[j]) ** 2 for j in eu))
    GT = tint(sum(np.abs(du[a]) ** 2 for a in tor)) if g.n else np.zeros_like(rho)
    cur = [tint(np.imag(cu * du[j])) for j in eu]
    K = [tint(np.imag(cu * _grad(lap_h, g, k) - np.conj(du[k]) * lap)) for k in eu]
    Pi = tint(np.abs(u) ** (config.p + 2))

    dens_t = -2.0 * _xint(convolve(g, "trilaplacian", rho) * rho, g)
    b2 = convolve(g, "bilaplacian", rho)
    grad_t = 4.0 * _xint(b2 * GE, g)
    tor_b = 4.0 * _xint(b2 * GT, g)
    third = hess = tor_h = cross = 0.0
    for j in eu:
        for k in eu:
            T = tint(np.conj(du[j]) * du[k])
            SE = tint(sum(np.conj(ddu[i, j]) * ddu[i, k] for i in eu))
            hk = convolve(g, f"hessian:{j},{k}", rho)
            third += 8.0 * _xint(convolve(g, f"hessian_laplacian:{j},{k}", rho) * T, g)
            hess += -16.0 * _xint(hk * SE, g)
            if g.n:
                ST = tint(sum(np.conj(ddu[a, j]) * ddu[a, k] for a in tor))
                tor_h += -16.0 * _xint(hk * ST, g)
            cross += -8.0 * _xint(cur[j] * convolve(g, f"hessian:{j},{k}", K[k]), g)
    p = config.p
    nonlin = -4.0 * config.strength * p / (p + 2) * _xint(convolve(g, "laplacian", rho) * Pi, g)
    return MorawetzTerms(dens_t, grad_t, third, hess, cross, tor_h, tor_b, nonlin)


def morawetz_rate(f: ComplexField, config: SolverConfig) -> float:
    """dM/dt from the equation of motion, without integrating by parts.

    With u_t = i L, L = sigma((-Delta)^m u + lambda |u|^p u):
    rho_t = -2 int_T Im(conj(u) L) and J_t = int_T Re(conj(u) grad L - conj(L) grad u).
    """
    g = f.grid
    u = f.samples
    uh = fftn(u)
    lin_h = uh * (g.table.k4 if config.order == 2 else g.table.k2)
    L = config.sigma * (ifftn(lin_h) + config.strength * np.abs(u) ** config.p * u)
    Lh = fftn(L)
    cu, cL = np.conj(u), np.conj(L)
    rho = density(f)
    rho_t = -2.0 * _torus_int(np.imag(cu * L), g)
    total = 0.0
    for j in range(g.d):
        J = _torus_int(np.imag(cu * _grad(uh, g, j)), g)
        Jt = _torus_int(np.real(cu * _grad(Lh, g, j) - cL * _grad(uh, g, j)), g)
        total += _xint(Jt * convolve(g, f"grad:{j}", rho), g)
        total += _xint(J * convolve(g, f"grad:{j}", rho_t), g)
    return 4.0 * total


# -- records --------------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    kinetic: float
    potential: float
    lq_norms: dict[float, float]
    sup_cube_mass: dict[float, float]
    morawetz_action: float | None
    morawetz_integrand: dict[float, float]
    h2_norm: float
    post_wrap: bool
    rhs_terms: dict[str, float] | None = None

    def to_json_dict(self) -> dict:
        out = {
            "t": self.t,
            "mass": self.mass,
            "energy": self.energy,
            "kinetic": self.kinetic,
            "potential": self.potential,
            "lq": {_key(q): v for q, v in self.lq_norms.items()},
            "cube_mass": {_key(r): v for r, v in self.sup_cube_mass.items()},
            "morawetz": self.morawetz_action,
            "h2": self.h2_norm,
            "post_wrap": self.post_wrap,
        }
        if self.rhs_terms is not None:
            out["rhs_terms"] = self.rhs_terms
        return out

    def to_ndjson(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":"))


def _key(x: float) -> str:
    return repr(float(x))


CSV_BASE = ("t", "mass", "energy", "kinetic", "potential")


def records_to_csv(records: Sequence[DiagnosticsRecord]) -> str:
    if not records:
        return ""
    first = records[0]
    cols = list(CSV_BASE)
    cols += [f"lq[{_key(q)}]" for q in first.lq_norms]
    cols += [f"cube_mass[{_key(r)}]" for r in first.sup_cube_mass]
    cols += ["morawetz", "h2", "post_wrap"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in records:
        row = [repr(getattr(rec, c)) for c in CSV_BASE]
        row += [repr(v) for v in rec.lq_norms.values()]
        row += [repr(v) for v in rec.sup_cube_mass.values()]
        row += ["" if rec.morawetz_action is None else repr(rec.morawetz_action), repr(rec.h2_norm), str(rec.post_wrap).lower()]
        w.writerow(row)
    return buf.getvalue()


class Recorder:
    """Builds a DiagnosticsRecord from a solver state."""

    def __init__(
        self,
        config: SolverConfig,
        q_list: Sequence[float] = (),
        r_list: Sequence[float] = (),
        morawetz: bool = True,
        rhs_terms: bool = False,
    ):
        if rhs_terms and config.order != 2:
            raise ValueError("Morawetz right-hand-side terms are implemented for order 2 only")
        self.config = config
        self.rhs_terms = rhs_terms
        self.q_list = tuple(q_list)
        self.r_list = tuple(r_list)
        self.morawetz = morawetz

    def __call__(self, state: SolverState) -> DiagnosticsRecord:
        f = state.field
        from .field import lq_norm

        kin = kinetic(f, self.config.order)
        pot = potential(f, self.config)
        cubes = {r: sup_cube_mass(f, r) for r in self.r_list}
        expo = (self.config.p + 4) / 2
        return DiagnosticsRecord(
            t=state.t,
            mass=mass(f),
            energy=kin + pot,
            kinetic=kin,
            potential=pot,
            lq_norms={q: lq_norm(f, q) for q in self.q_list},
            sup_cube_mass=cubes,
            morawetz_action=morawetz_action(f) if self.morawetz and f.grid.d else None,
            morawetz_integrand={r: v**expo for r, v in cubes.items()},
            h2_norm=sobolev_norm(f, 2),
            post_wrap=state.t > state.t_wrap,
            rhs_terms=morawetz_rhs_terms(f, self.config).to_dict() if self.rhs_terms and f.grid.d else None,
        )


# -- accumulators ---------------------------------------------------------------

def _trapezoid(y: np.ndarray, t: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


@dataclass
class MorawetzLHS:
    integral: float
    c_test: float
    r: float


def morawetz_lhs_accumulate(series: Sequence[DiagnosticsRecord], r: float | None = None, p: float | None = None) -> MorawetzLHS:
    """Trapezoidal integral of sup_cube_mass(r)^{(p+4)/2} and its ratio to ||u0||_{H^2}^4."""
    if not series:
        raise ValueError("empty series")
    first = series[0]
    if r is None:
        if not first.sup_cube_mass:
            raise ValueError("records carry no cube masses")
        r = next(iter(first.sup_cube_mass))
    t = np.array([rec.t for rec in series])
    if p is None:
        y = np.array([rec.morawetz_integrand[r] for rec in series])
    else:
        y = np.array([rec.sup_cube_mass[r] ** ((p + 4) / 2) for rec in series])
    integral = _trapezoid(y, t) if len(series) > 1 else 0.0
    h2 = first.h2_norm
    return MorawetzLHS(integral, integral / h2**4 if h2 > 0 else 0.0, r)


def scattering_residual(u1: ComplexField, t1: float, u2: ComplexField, t2: float, config: SolverConfig) -> float:
    """|| e^{-i t1 A} u(t1) - e^{-i t2 A} u(t2) ||_{H^2} with A the dispersion operator."""
    if not u1.grid.same_as(u2.grid):
        raise ValueError("fields live on different grids")
    g = u1.grid
    c1 = fftn(u1.samples) * np.exp(-1j * config.sigma * t1 * _sym(g, config))
    c2 = fftn(u2.samples) * np.exp(-1j * config.sigma * t2 * _sym(g, config))
    diff = (c1 - c2) / g.spec.total_points
    return float(math.sqrt(g.spec.volume * np.sum((1.0 + g.table.k2) ** 2 * np.abs(diff) ** 2)))


def _sym(grid: Grid, config: SolverConfig) -> np.ndarray:
    return grid.table.k4 if config.order == 2 else grid.table.k2


def pullback(u: ComplexField, t: float, config: SolverConfig) -> ComplexField:
    """e^{-itA} u: the free profile matching u at time t."""
    return ComplexField(u.grid, linear_flow(u.samples, u.grid, config, -t))


def _spatial_norm(f: ComplexField, m_exp: float, gamma: float) -> float:
    g = f.grid
    fib = torus_fiber_norms(f.samples, g, gamma) if g.n else np.abs(f.samples)
    if math.isinf(m_exp):
        return float(fib.max())
    return float((np.sum(fib**m_exp) * g.spec.euclid_cell) ** (1.0 / m_exp))


def spacetime_norm_accumulate(series: Sequence[SolverState], l: float, m_exp: float, gamma: float) -> float:
    """L^l_t L^{m_exp}_x H^gamma_alpha over the recorded states (trapezoidal in t)."""
    if not series:
        raise ValueError("empty series")
    if l < 1 or m_exp < 1 or gamma < 0:
        raise ValueError("need l, m_exp >= 1 and gamma >= 0")
    vals = np.array([_spatial_norm(s.field, m_exp, gamma) for s in series])
    if math.isinf(l):
        return float(vals.max())
    t = np.array([s.t for s in series])
    if len(series) == 1:
        return 0.0
    return _trapezoid(vals**l, t) ** (1.0 / l)


@dataclass
class DecayReport:
    times: np.ndarray
    post_wrap: np.ndarray
    norms: dict[float, np.ndarray]
    trend: dict[float, float]
    gn_ratio: np.ndarray
    unit_cube_mass: np.ndarray

    def to_dict(self) -> dict:
        return {
            "t": self.times.tolist(),
            "post_wrap": self.post_wrap.tolist(),
            "norms": {_key(q): v.tolist() for q, v in self.norms.items()},
            "trend": {_key(q): v for q, v in self.trend.items()},
            "gn_ratio": self.gn_ratio.tolist(),
        }


def gn_ratio(f: ComplexField) -> float:
    """||u||_{2+4/D} / (S^{1/(D+2)} ||u||_{H^1}^{D/(D+2)}), D = d+n, S the unit-cube sup mass."""
    from .field import lq_norm

    D = f.grid.spec.dims
    num = lq_norm(f, 2 + 4 / D)
    if num == 0:
        return 0.0
    S = sup_cube_mass(f, max(0.5, f.grid.spec.dx))
    return num / (S ** (1 / (D + 2)) * sobolev_norm(f, 1) ** (D / (D + 2)))


def decay_report(series: Sequence[SolverState], q_list: Iterable[float]) -> DecayReport:
    """Per-q L^q time series, Kendall trend over the pre-wrap window, GN ratio."""
    from .field import lq_norm

    if not series:
        raise ValueError("empty series")
    g = series[0].grid
    D = g.spec.dims
    q_list = list(q_list)
    for q in q_list:
        if not 2 < q <= 2 + 4 / D + 1e-12:
            warnings.warn(f"q = {q} is outside (2, {2 + 4 / D}]", stacklevel=2)
    times = np.array([s.t for s in series])
    post = np.array([s.t > s.t_wrap for s in series])
    norms = {q: np.array([lq_norm(s.field, q) for s in series]) for q in q_list}
    trend = {}
    pre = ~post
    for q, v in norms.items():
        if pre.sum() >= 3 and np.ptp(v[pre]) > 0:
            trend[q] = float(stats.kendalltau(times[pre], v[pre]).statistic)
        else:
            trend[q] = 0.0
    gn = np.array([gn_ratio(s.field) for s in series])
    ucm = np.array([sup_cube_mass(s.field, max(0.5, g.spec.dx)) for s in series])
    return DecayReport(times, post, norms, trend, gn, ucm)
