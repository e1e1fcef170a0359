"""Command line front end: ``wgdl simulate | verify | exponents``.

Run configuration is a sectioned key-value file::

    [grid]
    euclid_dims = 1
    torus_dims = 1
    box_half_length = 12
    points_euclid = 128
    points_torus = 16

    [solver]
    order = 2
    p = 2
    lambda = 1
    dt = 1e-3
    t_end = 0.5

    [diagnostics]
    q_list = 10/3
    r_list = 1
    record_every = 10

    [initial]
    kind = gaussian
    width = 1.5
    modulation = 0, 2

Numbers may be decimals or rationals such as ``8/5``; ``torus_period``
also accepts multiples of pi (``2pi``).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import re
import sys
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import diagnostics as diag
from . import exponents as ex
from . import morawetz_algebra as alg
from .field import (
    ComplexField,
    ResolutionWarning,
    load_checkpoint,
    make_gaussian,
    make_plane_wave,
    save_checkpoint,
    set_fft_workers,
    to_physical,
    SpectralField,
)
from .grid import GridError, GridSpec, make_grid
from .propagator import BlowupError, ResolutionError, SolverConfig, evolve, wrap_time

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BLOWUP = 2

DEFAULT_SEED = 20240601
LADDER_RUNGS = 4


class ConfigError(Exception):
    """A configuration problem, anchored to a file line when possible."""


# -- config parsing -------------------------------------------------------------

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^#;=\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), no)
    return index


class Config:
    """Typed, line-anchored access to a parsed config file."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
        self.lines = _line_index(text)
        self.parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            self.parser.read_string(text, source=self.path)
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from None

    def where(self, section: str, key: str | None = None) -> str:
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"{self.path}:{line}" if line else self.path

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section: str, key: str, default: Any = None, required: bool = False) -> str | None:
        if not self.parser.has_section(section):
            if required:
                raise ConfigError(f"{self.path}: missing section [{section}] (needed for key '{key}')")
            return default
        if not self.parser.has_option(section, key):
            if required:
                raise ConfigError(f"{self.where(section)}: missing key '{key}' in [{section}]")
            return default
        return self.parser.get(section, key).strip()

    def _convert(self, section: str, key: str, conv: Callable[[str], Any], what: str, default, required):
        s = self.raw(section, key, None, required)
        if s is None:
            return default
        try:
            return conv(s)
        except (ValueError, ZeroDivisionError, TypeError):
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key} = {s!r} is not {what}") from None

    def integer(self, section, key, default=None, required=False) -> int:
        return self._convert(section, key, _int, "an integer", default, required)

    def rational(self, section, key, default=None, required=False) -> Fraction:
        return self._convert(section, key, ex.rational, "a decimal or rational number", default, required)

    def real(self, section, key, default=None, required=False) -> float:
        return self._convert(section, key, _real, "a number", default, required)

    def reals(self, section, key, default=(), required=False) -> list[float]:
        return self._convert(section, key, _real_list, "a comma-separated list of numbers", list(default), required)

    def boolean(self, section, key, default=False) -> bool:
        def conv(s):
            v = s.lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return self._convert(section, key, conv, "a boolean", default, False)

    def choice(self, section, key, options, default=None, required=False) -> str:
        def conv(s):
            if s.lower() not in options:
                raise ValueError
            return s.lower()
        return self._convert(section, key, conv, "one of " + ", ".join(options), default, required)

    def fail(self, section: str, key: str | None, message: str) -> ConfigError:
        return ConfigError(f"{self.where(section, key)}: {message}")


def _int(s: str) -> int:
    v = ex.rational(s)
    if v.denominator != 1:
        raise ValueError
    return int(v)


def _real(s: str) -> float:
    s = s.strip()
    m = re.fullmatch(r"(.*?)\*?\s*pi", s)
    if m:
        head = m.group(1).strip()
        return (float(ex.rational(head)) if head else 1.0) * math.pi
    return float(ex.rational(s))


def _real_list(s: str) -> list[float]:
    return [_real(x) for x in s.split(",") if x.strip()]


@dataclass
class RunConfig:
    grid: GridSpec
    solver: SolverConfig
    q_list: list[float]
    r_list: list[float]
    morawetz: bool
    rhs_terms: bool
    out_dir: Path | None
    fmt: str
    records_name: str
    checkpoint_every: int
    initial: dict[str, Any] = field(default_factory=dict)
    seed: int = DEFAULT_SEED


def load_run_config(path: str | Path, seed: int | None = None) -> RunConfig:
    """Parse a run file; ``seed`` overrides ``[initial] seed``."""
    c = Config(path)
    d = c.integer("grid", "euclid_dims", required=True)
    n = c.integer("grid", "torus_dims", required=True)
    try:
        spec = GridSpec(
            euclid_dims=d,
            torus_dims=n,
            box_half_length=c.real("grid", "box_half_length", required=True),
            points_euclid=c.integer("grid", "points_euclid", required=True),
            points_torus=c.integer("grid", "points_torus", 4, required=n > 0),
            torus_period=c.real("grid", "torus_period", 2 * math.pi),
        )
    except GridError as e:
        raise c.fail("grid", None, str(e)) from None
    if d < 1:
        raise c.fail("grid", "euclid_dims", "simulate needs euclid_dims >= 1")

    order = c.integer("solver", "order", required=True)
    lam = c.integer("solver", "lambda", required=True)
    p = c.rational("solver", "p", required=True)
    record_every = c.integer("diagnostics", "record_every", None)
    if record_every is None:
        record_every = c.integer("solver", "record_every", 1)
    try:
        solver = SolverConfig(
            order=order,
            p=float(p),
            lam=lam,
            dt=c.real("solver", "dt", required=True),
            dealias=c.choice("solver", "dealias", ("off", "two_thirds"), "off"),
            t_end=c.real("solver", "t_end", required=True),
            record_every=record_every,
            coupling=c.real("solver", "coupling", 1.0),
        )
    except ValueError as e:
        raise c.fail("solver", None, str(e)) from None

    rhs = c.boolean("diagnostics", "rhs_terms", False)
    if rhs and order != 2:
        raise c.fail("diagnostics", "rhs_terms", "rhs_terms requires order = 2")
    out = c.raw("output", "dir")
    initial = {"kind": c.choice("initial", "kind", ("gaussian", "plane_wave", "checkpoint"), required=True)}
    kind = initial["kind"]
    if kind == "gaussian":
        initial["width"] = c.real("initial", "width", required=True)
        initial["amplitude"] = c.real("initial", "amplitude", 1.0)
        initial["center"] = c.reals("initial", "center", [0.0] * d)
        initial["modulation"] = c.reals("initial", "modulation", [0.0] * (d + n))
        initial["noise"] = c.real("initial", "noise", 0.0)
        if initial["noise"] > 0 and seed is None and not c.has("initial", "seed"):
            raise c.fail("initial", "noise", "missing key 'seed' in [initial] (required when noise > 0 and no --seed)")
    elif kind == "plane_wave":
        initial["k"] = c.reals("initial", "k", required=True)
        initial["amplitude"] = c.real("initial", "amplitude", 1.0)
    else:
        initial["path"] = c.raw("initial", "path", required=True)
    if seed is None:
        seed = c.integer("initial", "seed", DEFAULT_SEED)
    return RunConfig(
        grid=spec,
        solver=solver,
        q_list=c.reals("diagnostics", "q_list", []),
        r_list=c.reals("diagnostics", "r_list", []),
        morawetz=c.boolean("diagnostics", "morawetz", True),
        rhs_terms=rhs,
        out_dir=Path(out) if out else None,
        fmt=c.choice("output", "format", ("ndjson", "csv"), "ndjson"),
        records_name=c.raw("output", "records", "records"),
        checkpoint_every=c.integer("output", "checkpoint_every", 0),
        initial=initial,
        seed=seed,
    )


def _smooth_noise(grid, amplitude: float, seed: int) -> np.ndarray:
    """Random field with Gaussian-decaying spectrum, reproducible from seed."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    c *= np.exp(-grid.table.k2 / 2.0)
    u = to_physical(SpectralField(grid, c)).samples
    peak = np.abs(u).max()
    return amplitude * u / peak if peak else u


def build_initial(rc: RunConfig) -> ComplexField:
    ini = rc.initial
    if ini["kind"] == "checkpoint":
        f = load_checkpoint(ini["path"])
        if f.grid.spec != rc.grid:
            raise ConfigError(f"checkpoint {ini['path']} grid does not match [grid]")
        return f
    grid = make_grid(rc.grid)
    if ini["kind"] == "plane_wave":
        return make_plane_wave(grid, ini["k"], ini["amplitude"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        f = make_gaussian(grid, ini["width"], ini["center"], ini["modulation"], ini["amplitude"])
    if ini["noise"] > 0:
        # Relative to the envelope so the perturbed data stays localized.
        f = ComplexField(grid, f.samples * (1 + _smooth_noise(grid, ini["noise"], rc.seed)))
    return f


# -- output ---------------------------------------------------------------------

class RecordWriter:
    """Single-owner record sink: NDJSON is streamed, CSV written at close."""

    def __init__(self, path: Path, fmt: str):
        self.path = path
        self.fmt = fmt
        self.records: list[diag.DiagnosticsRecord] = []
        self._fh = open(path, "w", encoding="utf-8", newline="\n") if fmt == "ndjson" else None

    def __call__(self, state, record) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(record.to_ndjson() + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
        else:
            self.path.write_text(diag.records_to_csv(self.records), encoding="utf-8")


def ladder_steps(t_top: float, dt: float, rungs: int = LADDER_RUNGS) -> list[tuple[int, int]]:
    """Dyadic step pairs (k, 2k) with 2k*dt <= t_top, longest rung last."""
    top = int(math.floor(t_top / dt + 1e-9))
    pairs = []
    for j in range(rungs):
        hi = top >> j
        lo = hi // 2
        if lo < 1:
            break
        pairs.append((lo, 2 * lo))
    return pairs[::-1]


def _resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("WGDL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"WGDL_THREADS={env!r} is not an integer") from None
    return 1


def _err(msg: str) -> None:
    print(f"wgdl: {msg}", file=sys.stderr)


# -- simulate -------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        if not args.config:
            raise ConfigError("simulate needs --config PATH")
        rc = load_run_config(args.config, args.seed)
        if args.format:
            rc.fmt = args.format
        set_fft_workers(_resolve_threads(args.threads))
        f0 = build_initial(rc)
    except (ConfigError, ValueError, OSError) as e:
        _err(str(e))
        return EXIT_CONFIG

    out = Path(args.out) if args.out else (rc.out_dir or Path("wgdl_out"))
    out.mkdir(parents=True, exist_ok=True)
    cfg = rc.solver
    t_wrap = wrap_time(f0, cfg.order)
    t_top = min(cfg.t_end, t_wrap)
    pairs = ladder_steps(t_top, cfg.dt)
    capture = {k for pair in pairs for k in pair}
    recorder = diag.Recorder(cfg, rc.q_list, rc.r_list, morawetz=rc.morawetz, rhs_terms=rc.rhs_terms)
    writer = RecordWriter(out / f"{rc.records_name}.{rc.fmt}", rc.fmt)
    observers: list = [writer]
    if rc.checkpoint_every > 0:
        def checkpointer(state, record):
            if state.step and state.step % rc.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{state.step:08d}.wgdl", state.field)
        observers.append(checkpointer)

    summary: dict[str, Any] = {"t_wrap": t_wrap, "global_guarantee": cfg.global_guarantee(rc.grid.euclid_dims)}
    code = EXIT_OK
    start = time.perf_counter()
    try:
        result = evolve(cfg, f0, observers, recorder, force=args.force, capture_steps=capture)
    except ResolutionError as e:
        writer.close()
        _err(str(e))
        return EXIT_CONFIG
    except BlowupError as e:
        writer.close()
        save_checkpoint(out / "final.wgdl", e.state.field)
        summary.update(status="blowup", reason=str(e), t=e.state.t, step=e.state.step)
        code = EXIT_BLOWUP
    else:
        writer.close()
        save_checkpoint(out / "final.wgdl", result.state.field)
        summary["status"] = "ok"
        summary["steps"] = result.state.step
        ladder = []
        for lo, hi in pairs:
            a, b = result.captured[lo], result.captured[hi]
            ladder.append({"t1": a.t, "t2": b.t, "residual": diag.scattering_residual(a.field, a.t, b.field, b.t, cfg)})
        summary["scattering_ladder"] = ladder
        summary["ladder_decreasing"] = all(x["residual"] > y["residual"] for x, y in zip(ladder, ladder[1:]))

    recs = writer.records
    if recs:
        m0, e0 = recs[0].mass, recs[0].energy
        summary["mass_drift"] = abs(recs[-1].mass - m0) / m0 if m0 else 0.0
        summary["energy_drift"] = abs(recs[-1].energy - e0) / abs(e0) if e0 else abs(recs[-1].energy)
        pre = [r for r in recs if not r.post_wrap]
        if rc.r_list and len(pre) > 1:
            lhs = diag.morawetz_lhs_accumulate(pre)
            summary["c_test"] = lhs.c_test
            summary["c_test_r"] = lhs.r
        summary["post_wrap_records"] = sum(r.post_wrap for r in recs)
    summary["elapsed_s"] = round(time.perf_counter() - start, 3)
    summary["records"] = str(writer.path)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return code


# -- verify ---------------------------------------------------------------------

def _item(name: str, passed: bool, **info) -> dict:
    return {"name": name, "passed": bool(passed), **info}


def suite_algebra(seed: int) -> list[dict]:
    items = []
    for which in alg.SELECTORS:
        r = alg.fd_verify(which, seed=seed)
        items.append(_item(f"fd:{which}", r.passed, max_rel_error=r.max_rel_error))
    neg = alg.fd_verify("hessian_laplacian", seed=seed, pair_terms=alg.miscoefficient_hessian_laplacian)
    items.append(_item("fd:miscoefficient_control_rejected", not neg.passed, max_rel_error=neg.max_rel_error))
    cert = alg.sign_certificates(seed=seed)
    for c in cert.results:
        if not c.consistent:
            items.append(_item(f"sign:{c.claim}:d={c.d}", False, detail=c.to_dict()))
    items.append(_item("sign_certificates", cert.passed, claims=len(cert.results)))
    hb = alg.hessian_bound_check(seed=seed)
    for chk in hb.checks:
        items.append(_item(f"hessian:{chk.name}", chk.passed))
    return items


def _random_smooth(grid, seed: int) -> ComplexField:
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    c *= np.exp(-grid.table.k2 / 4.0)
    return to_physical(SpectralField(grid, c))


def suite_oracle(seed: int) -> list[dict]:
    items = []
    for spec in (GridSpec(1, 1, 4.0, 16, 4), GridSpec(2, 1, 3.0, 8, 4)):
        f = _random_smooth(make_grid(spec), seed)
        fast = diag.morawetz_action(f)
        brute = diag.morawetz_action_bruteforce(f)
        err = abs(fast - brute) / max(abs(brute), 1e-300)
        items.append(_item(f"morawetz_action:d={spec.euclid_dims}", err <= 1e-10, rel_error=err))
    # Both routes agree only up to aliasing, so the grid must resolve |k|^6 products.
    g = make_grid(GridSpec(1, 1, 12.0, 256, 16))
    f = make_gaussian(g, 1.5, modulation=[0.5, 1.0])
    cfg = SolverConfig(order=2, p=2.0, lam=1)
    terms = diag.morawetz_rhs_terms(f, cfg).total
    rate = diag.morawetz_rate(f, cfg)
    err = abs(terms - rate) / abs(rate)
    items.append(_item("morawetz_rhs_vs_rate", err <= 1e-10, rel_error=err))
    return items


def suite_convergence(seed: int) -> list[dict]:
    from .propagator import SolverState, Stepper, strang_step

    items = []
    g = make_grid(GridSpec(1, 1, math.pi, 64, 64))
    k = (3.0, 2.0)
    lin = SolverConfig(order=2, p=2.0, coupling=0.0, dt=1e-3, t_end=1.0)
    st = SolverState(make_plane_wave(g, k), 0.0, 0)
    stepper = Stepper(g, lin)
    for _ in range(1000):
        st = strang_step(st, lin, stepper)
    exact = np.exp(1j * 1000 * lin.dt * (k[0] ** 2 + k[1] ** 2) ** 2) * make_plane_wave(g, k).samples
    err = float(np.abs(st.field.samples - exact).max())
    items.append(_item("linear_plane_wave_phase", err <= 1e-12, max_error=err))

    g = make_grid(GridSpec(1, 1, 10.0, 64, 8))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        f0 = make_gaussian(g, 1.5, modulation=[0.0, 1.0])
    cfg = SolverConfig(order=2, p=2.0, lam=1, dt=1e-3, t_end=1.0)
    st = SolverState(f0.copy(), 0.0, 0)
    stepper = Stepper(g, cfg)
    for _ in range(1000):
        st = strang_step(st, cfg, stepper)
    m0 = diag.mass(f0)
    drift = abs(diag.mass(st.field) - m0) / m0
    items.append(_item("mass_conservation", drift <= 1e-10, rel_drift=drift))

    drifts = []
    for dt in (4e-3, 2e-3):
        c = SolverConfig(order=2, p=2.0, lam=1, dt=dt, t_end=0.4)
        s = SolverState(f0.copy(), 0.0, 0)
        sp = Stepper(g, c)
        for _ in range(c.steps):
            s = strang_step(s, c, sp)
        drifts.append(abs(diag.energy(s.field, c) - diag.energy(f0, c)))
    ratio = drifts[0] / drifts[1]
    items.append(_item("energy_second_order", abs(ratio - 4) <= 0.5, ratio=ratio))
    return items


EXPONENT_CASES = ((5, 1, "2"), (5, 2, "2"), (5, 3, "9/5"), (6, 1, "3/2"))


def suite_exponents(seed: int) -> list[dict]:
    items = []
    for d, n, p in EXPONENT_CASES:
        for name, solve in (("index1", ex.solve_index1), ("index2", ex.solve_index2)):
            sol = solve(d, n, p)
            items.append(_item(f"{name}:({d},{n},{p})", sol.verified, certificate=sol.to_dict()))
    rep = ex.criticality(5, 4, 2, 2)
    items.append(_item("criticality:n=4_empty", rep.cls == "empty_range", report=rep.to_dict()))
    return items


SUITES = {
    "algebra": suite_algebra,
    "oracle": suite_oracle,
    "convergence": suite_convergence,
    "exponents": suite_exponents,
}


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        set_fft_workers(_resolve_threads(args.threads))
    except (ConfigError, ValueError) as e:
        _err(str(e))
        return EXIT_CONFIG
    seed = DEFAULT_SEED if args.seed is None else args.seed
    names = list(SUITES) if args.suite == "all" else [args.suite]
    report = {"seed": seed, "suites": {}}
    failed = []
    for name in names:
        start = time.perf_counter()
        items = SUITES[name](seed)
        ok = all(i["passed"] for i in items)
        report["suites"][name] = {"passed": ok, "elapsed_s": round(time.perf_counter() - start, 3), "results": items}
        failed += [f"{name}/{i['name']}" for i in items if not i["passed"]]
    report["passed"] = not failed
    text = json.dumps(report, indent=2, default=str)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"verify_{args.suite}.json").write_text(text + "\n")
    print(text)
    for name in failed:
        _err(f"failed: {name}")
    return EXIT_OK if not failed else EXIT_CONFIG


# -- exponents ------------------------------------------------------------------

EQUATIONS = {"4nls": 2, "nls": 1}


def cmd_exponents(args: argparse.Namespace) -> int:
    try:
        m = EQUATIONS[args.equation.lower()]
        d, n = int(args.d), int(args.n)
        p = ex.rational(args.p)
        rep = ex.criticality(d, n, m, p)
    except (KeyError, ValueError, ZeroDivisionError, TypeError) as e:
        _err(f"invalid arguments: {e}")
        return EXIT_CONFIG
    out: dict[str, Any] = {"criticality": rep.to_dict()}
    if m == 2 and rep.cls == "intermediate":
        out["index1"] = ex.solve_index1(d, n, p).to_dict()
        out["index2"] = ex.solve_index2(d, n, p).to_dict()
    print(json.dumps(out, indent=2))
    return EXIT_OK


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--format", choices=("ndjson", "csv"))
    common.add_argument("--threads", type=int, metavar="N")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--force", action="store_true", help="run despite resolution warnings")

    parser = argparse.ArgumentParser(prog="wgdl", description="Fourth-order NLS on waveguide manifolds.")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="run a configured evolution")
    sim.set_defaults(func=cmd_simulate)
    ver = sub.add_parser("verify", parents=[common], help="run verification suites")
    ver.add_argument("suite", choices=(*SUITES, "all"))
    ver.set_defaults(func=cmd_verify)
    exp = sub.add_parser("exponents", parents=[common], help="criticality and Strichartz certificates")
    exp.add_argument("d")
    exp.add_argument("n")
    exp.add_argument("equation", metavar="{4nls,nls}")
    exp.add_argument("p")
    exp.set_defaults(func=cmd_exponents)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        _err("--seed must be an unsigned 64-bit integer")
        return EXIT_CONFIG
    if args.threads is not None and args.threads < 1:
        _err("--threads must be >= 1")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
