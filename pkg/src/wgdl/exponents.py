"""Exact-rational criticality classification and Strichartz index solvers.

Exponents live in [2, inf]; internally every exponent is carried by its
reciprocal, a Fraction in [0, 1/2], with 0 standing for infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

Number = Union[int, float, str, Fraction]

HALF = Fraction(1, 2)
LATTICE_DEN = 64


def rational(x: Number) -> Fraction:
    """Parse ints, Fractions, '8/5' or '1.8' exactly (floats via their decimal repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"not a finite rational: {x}")
        return Fraction(repr(x))
    return Fraction(str(x).strip())


def reciprocal(x) -> Fraction:
    """1/x for an exponent given as a number or infinity."""
    if isinstance(x, float) and math.isinf(x) or (isinstance(x, str) and x.strip().lower() in ("inf", "infinity", "∞")):
        return Fraction(0)
    v = rational(x)
    if v <= 0:
        raise ValueError(f"exponent must be positive, got {x}")
    return 1 / v


def exponent_str(recip: Fraction) -> str:
    return "inf" if recip == 0 else str(1 / recip)


# -- criticality --------------------------------------------------------------

CLASSES = (
    "mass_subcritical",
    "mass_critical",
    "intermediate",
    "energy_critical",
    "energy_supercritical",
    "empty_range",
)


@dataclass(frozen=True)
class CriticalityReport:
    d: int
    n: int
    m: int
    p: Fraction
    mass_critical_p: Fraction
    energy_critical_p: Fraction | None
    cls: str
    window: tuple[Fraction, Fraction | None]

    @property
    def range_empty(self) -> bool:
        lo, hi = self.window
        return hi is not None and hi <= lo

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "equation": "4nls" if self.m == 2 else "nls",
            "p": str(self.p),
            "mass_critical_p": str(self.mass_critical_p),
            "energy_critical_p": None if self.energy_critical_p is None else str(self.energy_critical_p),
            "class": self.cls,
            "window": [str(self.window[0]), "inf" if self.window[1] is None else str(self.window[1])],
            "range_empty": self.range_empty,
        }


def criticality(d: int, n: int, m: int, p: Number) -> CriticalityReport:
    """Classify p for order-m dispersion on R^d x T^n.

    m = 2: thresholds 8/d and 8/(d+n-4), window (8/d, 8/(d+n-4)).
    m = 1: thresholds 4/d and 4/(d-2), window (0, 4/(d-2)) on the
    Euclidean factor.
    """
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    p = rational(p)
    if p <= 0:
        raise ValueError("p must be positive")
    if m == 2:
        mc = Fraction(8, d)
        ec = Fraction(8, d + n - 4) if d + n > 4 else None
        window = (mc, ec)
    elif m == 1:
        mc = Fraction(4, d)
        ec = Fraction(4, d - 2) if d > 2 else None
        window = (Fraction(0), ec)
    else:
        raise ValueError("m must be 1 (NLS) or 2 (4NLS)")
    if m == 2 and ec is not None and ec <= mc:
        cls = "empty_range"
    elif p < mc:
        cls = "mass_subcritical"
    elif p == mc:
        cls = "mass_critical"
    elif ec is None or p < ec:
        cls = "intermediate"
    elif p == ec:
        cls = "energy_critical"
    else:
        cls = "energy_supercritical"
    return CriticalityReport(d, n, m, p, mc, ec, cls, window)


# -- admissibility ----------------------------------------------------------

def _in_range(*recips: Fraction) -> bool:
    return all(0 <= r <= HALF for r in recips)


def is_S_admissible(p_exp, q_exp, d: int) -> bool:
    """2/p + d/q = d/2 with 2 <= p, q <= inf and (p, q, d) != (2, inf, 2)."""
    ip, iq = reciprocal(p_exp), reciprocal(q_exp)
    if not _in_range(ip, iq):
        return False
    if ip == HALF and iq == 0 and d == 2:
        return False
    return 2 * ip + d * iq == Fraction(d, 2)


def is_B_admissible(p_exp, q_exp, d: int, s: Number = 0) -> bool:
    """4/p + d/q = d/2 - s with 2 <= p, q <= inf.

    The endpoint (p, q) = (2, inf), which needs d/2 - s = 2, is excluded by
    analogy with the Schroedinger case.
    """
    ip, iq, s = reciprocal(p_exp), reciprocal(q_exp), rational(s)
    if not _in_range(ip, iq):
        return False
    if ip == HALF and iq == 0:
        return False
    return 4 * ip + d * iq == Fraction(d, 2) - s


def _b_relation(ip: Fraction, iq: Fraction, d: int, s: Fraction) -> Fraction:
    return 4 * ip + d * iq - (Fraction(d, 2) - s)


# -- solutions --------------------------------------------------------------

@dataclass
class Check:
    relation: str
    kind: str  # "eq", "gt" (> 0) or "ge" (>= 0)
    value: Fraction

    @property
    def ok(self) -> bool:
        if self.kind == "eq":
            return self.value == 0
        return self.value > 0 if self.kind == "gt" else self.value >= 0

    def to_dict(self) -> dict:
        key = "residue" if self.kind == "eq" else "slack"
        return {"relation": self.relation, key: str(self.value), "ok": self.ok}


@dataclass
class ExponentSolution:
    lemma: str
    d: int
    n: int
    p: Fraction
    s: Fraction
    delta: Fraction
    recips: dict[str, Fraction]
    theta: Fraction | None = None
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def exponent(self, name: str):
        r = self.recips[name]
        return math.inf if r == 0 else 1 / r

    @property
    def verified(self) -> bool:
        return bool(self.checks) and all(c.ok for c in self.checks)

    def to_dict(self) -> dict:
        out = {
            "lemma": self.lemma,
            "d": self.d,
            "n": self.n,
            "p": str(self.p),
            "s": str(self.s),
            "delta": str(self.delta),
            "exponents": {k: exponent_str(v) for k, v in self.recips.items()},
            "checks": [c.to_dict() for c in self.checks],
            "verified": self.verified,
        }
        if self.theta is not None:
            out["theta"] = str(self.theta)
        if self.notes:
            out["notes"] = self.notes
        return out


@dataclass
class Infeasible:
    lemma: str
    d: int
    n: int
    p: Fraction
    reason: str

    verified = False

    def to_dict(self) -> dict:
        return {"lemma": self.lemma, "d": self.d, "n": self.n, "p": str(self.p), "infeasible": self.reason}


def _lattice(den: int = LATTICE_DEN) -> list[Fraction]:
    """Reciprocals 1/m in [0, 1/2) with denominator <= den, ascending."""
    vals = {Fraction(a, b) for b in range(1, den + 1) for a in range(0, b + 1)}
    return sorted(v for v in vals if v < HALF)


def _dual(recip: Fraction) -> Fraction:
    """Reciprocal of the Hoelder dual exponent."""
    return 1 - recip


def _range_check(lemma: str, d: int, n: int, p: Fraction) -> Infeasible | None:
    rep = criticality(d, n, 2, p)
    if rep.cls != "intermediate":
        return Infeasible(lemma, d, n, p, f"p = {p} is outside the open range ({rep.to_dict()['window'][0]}, {rep.to_dict()['window'][1]}): {rep.cls}")
    if d <= 3:
        return Infeasible(lemma, d, n, p, "the bound 2d/(d-3) needs d > 3")
    return None


def verify_index1(sol: ExponentSolution) -> list[Check]:
    """Re-evaluate every index1 relation from the stored exponents."""
    d, p, s, delta = sol.d, sol.p, sol.s, sol.delta
    R = sol.recips
    il, im, iq, ir, iqt, irt = R["l"], R["m"], R["q"], R["r"], R["q_tilde"], R["r_tilde"]
    mp_ratio = p / (1 - 2 * im)  # mp/(m-2)
    checks = [
        Check("(l,m) B-admissible: 4/l + d/m - d/2", "eq", _b_relation(il, im, d, Fraction(0))),
        Check("(q,r) B-admissible with s: 4/q + d/r - (d/2 - s)", "eq", _b_relation(iq, ir, d, s)),
        Check("(q~,r~) dual with s: 4/q~ + d/r~ - (d/2 + s)", "eq", 4 * iqt + d * irt - (Fraction(d, 2) + s)),
        Check("1/r~' - (p+1)/r", "eq", _dual(irt) - (p + 1) * ir),
        Check("1/q~' - (p+1)/q", "gt", _dual(iqt) - (p + 1) * iq),
        Check("1/m' - 1/m - p/r", "eq", _dual(im) - im - p * ir),
        Check("1/l' - 1/l - p/q", "gt", _dual(il) - il - p * iq),
        Check("mp/(m-2) - 2", "gt", mp_ratio - 2),
        Check("2d/(d-3) - mp/(m-2)", "gt", Fraction(2 * d, d - 3) - mp_ratio),
        Check("s - 1/2", "gt", s - HALF),
        Check("delta", "gt", delta),
        Check("2 - (s + 1/2 + delta)", "ge", 2 - (s + HALF + delta)),
    ]
    for name in ("l", "m", "q", "r", "q_tilde", "r_tilde"):
        checks.append(Check(f"1/2 - 1/{name}", "ge", HALF - R[name]))
        checks.append(Check(f"1/{name}", "ge", R[name]))
    return checks


def solve_index1(d: int, n: int, p: Number, den: int = LATTICE_DEN) -> ExponentSolution | Infeasible:
    """Search s in (1/2, 3/2) on a 1/den grid and 1/m on the Farey lattice.

    The equalities then fix every other index:
      1/r = (1 - 2/m)/p, 1/l = (d/2 - d/m)/4, 1/q = (d/2 - s - d/r)/4,
      1/r~ = 1 - (p+1)/r, 1/q~ = (d/2 + s - d/r~)/4,
    and delta takes its largest value 3/2 - s.  The first candidate in
    lexicographic order (s, 1/m) meeting every constraint is returned.
    """
    p = rational(p)
    bad = _range_check("index1", d, n, p)
    if bad:
        return bad
    lattice = _lattice(den)
    first_failure = None
    for k in range(den // 2 + 1, 3 * den // 2):
        s = Fraction(k, den)
        for im in lattice:
            ir = (1 - 2 * im) / p
            il = (Fraction(d, 2) - d * im) / 4
            iq = (Fraction(d, 2) - s - d * ir) / 4
            irt = 1 - (p + 1) * ir
            iqt = (Fraction(d, 2) + s - d * irt) / 4
            recips = {"l": il, "m": im, "q": iq, "r": ir, "q_tilde": iqt, "r_tilde": irt}
            sol = ExponentSolution("index1", d, n, p, s, Fraction(3, 2) - s, recips)
            checks = verify_index1(sol)
            failed = next((c for c in checks if not c.ok), None)
            if failed is None:
                sol.checks = checks
                return sol
            if first_failure is None:
                first_failure = failed.relation
    return Infeasible("index1", d, n, p, f"no lattice point (den <= {den}); first violated: {first_failure}")


def verify_index2(sol: ExponentSolution) -> list[Check]:
    """Re-evaluate every index2 relation from the stored exponents."""
    d, p, s, delta, th = sol.d, sol.p, sol.s, sol.delta, sol.theta
    R = sol.recips
    il, im, iq, ir, iqt, irt = R["l"], R["m"], R["q_theta"], R["r_theta"], R["q_tilde_theta"], R["r_tilde_theta"]
    checks = [
        Check("4/q + d/r - (d/2 - s)", "eq", _b_relation(iq, ir, d, s)),
        Check("4/q + d/r~ + 4/q~ + d/r - d", "eq", 4 * iq + d * irt + 4 * iqt + d * ir - d),
        Check("1/((p+1) q~') - theta/q", "eq", _dual(iqt) / (p + 1) - th * iq),
        Check("1/((p+1) r~') - theta/r - 2(1-theta)/(pd)", "eq", _dual(irt) / (p + 1) - th * ir - 2 * (1 - th) / (p * d)),
        Check("4/l + d/m - d/2", "eq", _b_relation(il, im, d, Fraction(0))),
        Check("1/m' - 1/m - p/r", "eq", _dual(im) - im - p * ir),
        Check("1/l' - 1/l - p/q", "eq", _dual(il) - il - p * iq),
        Check("theta", "gt", th),
        Check("1 - theta", "ge", 1 - th),
        Check("s", "gt", s),
        Check("delta", "gt", delta),
        Check("2 - (s + 1/2 + delta)", "ge", 2 - (s + HALF + delta)),
    ]
    for name in ("l", "m", "q_theta", "r_theta", "q_tilde_theta", "r_tilde_theta"):
        checks.append(Check(f"1/2 - 1/{name}", "ge", HALF - R[name]))
        checks.append(Check(f"1/{name}", "ge", R[name]))
    return checks


def solve_index2(d: int, n: int, p: Number, den: int = LATTICE_DEN) -> ExponentSolution | Infeasible:
    """Solve the index2 system over the 1/m lattice.

    Given 1/m, the equalities fix 1/r, 1/l, 1/q and then s = d/2 - 4/q - d/r;
    the sum relation is linear in theta and fixes it exactly.  The system
    forces s = d/2 - 4/p, so s > 1/2 cannot hold when
    p <= 8/(d-1); the solver requires 0 < s < 3/2 and records whether
    s > 1/2 held.
    """
    p = rational(p)
    bad = _range_check("index2", d, n, p)
    if bad:
        return bad
    first_failure = None
    A = 4 + d - 2 * (p + 1) / p
    for im in _lattice(den):
        ir = (1 - 2 * im) / p
        il = (Fraction(d, 2) - d * im) / 4
        iq = (1 - 2 * il) / p
        s = Fraction(d, 2) - 4 * iq - d * ir
        B = -(p + 1) * (Fraction(d, 2) - s) + 2 * (p + 1) / p
        if B == 0:
            continue
        th = (Fraction(d, 2) + s - A) / B
        iqt = 1 - (p + 1) * th * iq
        irt = 1 - (p + 1) * (th * ir + 2 * (1 - th) / (p * d))
        recips = {"l": il, "m": im, "q_theta": iq, "r_theta": ir, "q_tilde_theta": iqt, "r_tilde_theta": irt}
        sol = ExponentSolution("index2", d, n, p, s, Fraction(3, 2) - s, recips, theta=th)
        checks = verify_index2(sol)
        failed = next((c for c in checks if not c.ok), None)
        if failed is None:
            sol.checks = checks
            if s <= HALF:
                sol.notes.append(f"s = {s} <= 1/2: the system fixes s = d/2 - 4/p, so s > 1/2 is relaxed to s > 0")
            return sol
        if first_failure is None:
            first_failure = failed.relation
    return Infeasible("index2", d, n, p, f"no lattice point (den <= {den}); first violated: {first_failure}")


# -- delta ratio --------------------------------------------------------------

def lemma_delta_ratio(f, s: float, p: float) -> float:
    """max over fibers of || |u|^p u ||_{H'^s} / (||u||_{H'^s} ||u||_inf^p).

    H'^s is the homogeneous torus Sobolev norm; fibers with a vanishing
    denominator are skipped, and 0 is returned when all are.
    """
    from .field import torus_fiber_norms

    if f.grid.n < 1:
        raise ValueError("lemma_delta_ratio needs n >= 1")
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    u = f.samples
    taxes = tuple(range(f.grid.d, f.grid.d + f.grid.n))
    nonlin = np.abs(u) ** p * u
    lhs = torus_fiber_norms(nonlin, f.grid, s, homogeneous=True)
    rhs = torus_fiber_norms(u, f.grid, s, homogeneous=True) * np.abs(u).max(axis=taxes) ** p
    ok = rhs > 1e-300
    if not np.any(ok):
        return 0.0
    return float(np.max(lhs[ok] / rhs[ok]))
