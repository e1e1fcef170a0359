"""Closed-form derivatives of the Morawetz weight a(x, y) = <x - y> and
machine checks of the sign claims built on them.

Throughout, <r> = (1 + r^2)^{1/2} and e = x - y with r = |e|.  Matrix-valued
derivatives are returned as a coefficient pair (A, B) meaning
A * delta_ij + B * e_i e_j.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import mpmath as mp
import numpy as np

SCALARS = ("a", "laplacian", "bilaplacian", "trilaplacian")
PAIRS = ("hessian", "hessian_laplacian")
SELECTORS = SCALARS + PAIRS


def bracket(r):
    return np.sqrt(1.0 + np.square(r))


# Each closed form is a list of (coefficient(d), power) with term coeff * <r>^-power.
# Pair forms hold one such list for A and one for B.

def _terms(which: str, d: int):
    if which == "a":
        return [(1, -1)]
    if which == "laplacian":
        return [(d - 1, 1), (1, 3)]
    if which == "bilaplacian":
        return [(-(d - 1) * (d - 3), 3), (-6 * (d - 3), 5), (-15, 7)]
    if which == "trilaplacian":
        return [
            (3 * (d - 1) * (d - 3) * (d - 5), 5),
            (45 * (d - 3) * (d - 5), 7),
            (315 * (d - 5), 9),
            (945, 11),
        ]
    raise KeyError(which)


def _pair_terms(which: str, d: int):
    if which == "hessian":
        return [(1, 1)], [(-1, 3)]
    if which == "hessian_laplacian":
        return [(-(d - 1), 3), (-3, 5)], [(3 * (d - 1), 5), (15, 7)]
    raise KeyError(which)


def _miscoefficient_hessian_laplacian_terms(d: int):
    # Negative control: the e_i e_j coefficient carries 3(d-3) instead of 3(d-1).
    return [(-(d - 1), 3), (-3, 5)], [(3 * (d - 3), 5), (15, 7)]


def _eval(terms, rho):
    return sum(c * rho ** (-p) for c, p in terms)


def _scale(terms, rho):
    return sum(abs(c) * rho ** (-p) for c, p in terms)


def eval_weight_derivative(which: str, r, d: int):
    """Evaluate a closed form at distance(s) ``r`` in dimension ``d``.

    Scalar selectors return an array/float; ``hessian`` and
    ``hessian_laplacian`` return the pair (A, B).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    rho = bracket(r)
    if which in SCALARS:
        return _eval(_terms(which, d), rho)
    if which in PAIRS:
        ta, tb = _pair_terms(which, d)
        return _eval(ta, rho), _eval(tb, rho)
    raise ValueError(f"unknown selector {which!r}; expected one of {SELECTORS}")


def exact_at_origin(which: str, d: int) -> Fraction:
    """Exact value at r = 0 (where <r> = 1) of a scalar closed form."""
    return Fraction(sum(c for c, _ in _terms(which, d)))


def dominant_sign_at_infinity(which: str, d: int) -> int:
    """Sign of the slowest-decaying nonzero term as r -> infinity."""
    for c, _ in sorted(_terms(which, d), key=lambda t: t[1]):
        if c != 0:
            return 1 if c > 0 else -1
    return 0


# -- finite-difference verification ---------------------------------------

# 6th-order central stencils on offsets -3..3, applied in extended precision
# so that cancellation between terms at large r does not swamp the check.
_D2 = [(1, 90), (-3, 20), (3, 2), (-49, 18), (3, 2), (-3, 20), (1, 90)]
_OFF = range(-3, 4)
_DPS = 30


def _radial(terms):
    def fun(x):
        rho = mp.sqrt(1 + mp.fsum(t * t for t in x))
        return mp.fsum(c * rho ** (-p) for c, p in terms)

    return fun


def _shift(x, steps):
    out = list(x)
    for vec, o in steps:
        for i, v in enumerate(vec):
            out[i] += o * v
    return out


def _fd_second(fun, x, u, v):
    """Directional second derivative u.H.v for stencil steps u, v.

    Mixed directions go through polarization, 4 u.H.v = D_{u+v} - D_{u-v},
    so only the 7-point second-derivative stencil is needed.
    """
    d2 = [mp.mpf(a) / b for a, b in _D2]

    def along(w):
        return mp.fsum(c * fun(_shift(x, [(w, o)])) for c, o in zip(d2, _OFF))

    if u is v:
        return along(u)
    plus = [a + b for a, b in zip(u, v)]
    minus = [a - b for a, b in zip(u, v)]
    return (along(plus) - along(minus)) / 4


@dataclass
class FDReport:
    which: str
    samples: int
    max_rel_error: float
    worst_r: float
    worst_d: int
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def fd_verify(
    which: str,
    samples: int = 200,
    d_range: tuple[int, int] = (3, 10),
    r_max: float = 20.0,
    seed: int = 0,
    tolerance: float = 1e-6,
    pair_terms: Callable[[int], tuple] | None = None,
) -> FDReport:
    """Compare a closed form with 6th-order central differences.

    Each entry of the table is differenced from the entry one level below
    it (a -> Laplacian and Hessian, Laplacian -> bilaplacian and
    Hessian-of-Laplacian, bilaplacian -> trilaplacian), so the whole chain
    is anchored at a itself.  Laplacians use Cartesian stencils; Hessians
    are probed along the radial direction and two random directions.
    Errors are relative to the sum of absolute term magnitudes, which stays
    meaningful where terms cancel.  ``pair_terms`` overrides the pair
    closed form (used as a negative control).
    """
    if which not in SELECTORS:
        raise ValueError(f"unknown selector {which!r}")
    rng = np.random.default_rng(seed)
    worst = (0.0, 0.0, d_range[0])
    with mp.workdps(_DPS):
        for _ in range(samples):
            d = int(rng.integers(d_range[0], d_range[1] + 1))
            r = float(rng.uniform(0.0, r_max))
            u = rng.normal(size=d)
            xf = r * u / np.linalg.norm(u)
            x = [mp.mpf(float(t)) for t in xf]
            r_mp = mp.sqrt(mp.fsum(t * t for t in x))
            rho = mp.sqrt(1 + r_mp**2)
            h = rho * mp.mpf("1e-4")
            if which == "a":
                err = abs(_radial(_terms("a", d))(x) - mp.sqrt(1 + r_mp**2)) / rho
            elif which in SCALARS:
                below = {"laplacian": "a", "bilaplacian": "laplacian", "trilaplacian": "bilaplacian"}[which]
                terms = _terms(which, d)
                fun = _radial(_terms(below, d))
                axes = [[h if j == i else 0 for j in range(d)] for i in range(d)]
                fd = mp.fsum(_fd_second(fun, x, a, a) for a in axes) / h**2
                exact = mp.fsum(c * rho ** (-p) for c, p in terms)
                err = abs(fd - exact) / mp.fsum(abs(c) * rho ** (-p) for c, p in terms)
            else:
                below = "a" if which == "hessian" else "laplacian"
                ta, tb = (pair_terms or (lambda dd: _pair_terms(which, dd)))(d)
                fun = _radial(_terms(below, d))
                A = mp.fsum(c * rho ** (-p) for c, p in ta)
                B = mp.fsum(c * rho ** (-p) for c, p in tb)
                scale = mp.fsum(abs(c) * rho ** (-p) for c, p in ta) + mp.fsum(abs(c) * rho ** (-p) for c, p in tb) * r_mp**2
                dirs = [xf / r if r > 0 else _unit(rng, d), _unit(rng, d), _unit(rng, d)]
                dirs = [[mp.mpf(float(t)) for t in v] for v in dirs]
                err = mp.mpf(0)
                for i in range(3):
                    for j in range(i, 3):
                        ui, vj = dirs[i], dirs[j]
                        step_u = [h * t for t in ui]
                        step_v = step_u if i == j else [h * t for t in vj]
                        fd = _fd_second(fun, x, step_u, step_v) / h**2
                        uv = mp.fsum(a * b for a, b in zip(ui, vj))
                        xu = mp.fsum(a * b for a, b in zip(x, ui))
                        xv = mp.fsum(a * b for a, b in zip(x, vj))
                        err = max(err, abs(fd - (A * uv + B * xu * xv)) / scale)
            err = float(err)
            if err > worst[0]:
                worst = (err, r, d)
    return FDReport(which, samples, worst[0], worst[1], worst[2], tolerance, bool(worst[0] <= tolerance))


def _unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def miscoefficient_hessian_laplacian(d: int):
    """The Hessian-of-Laplacian pair with a wrong 3(d-3) coefficient."""
    return _miscoefficient_hessian_laplacian_terms(d)


# -- directional split -----------------------------------------------------

def directional_split(g, e) -> tuple[np.ndarray, np.ndarray]:
    """Split g into its component along e and the orthogonal remainder."""
    g = np.asarray(g)
    e = np.asarray(e, dtype=float)
    ee = float(e @ e)
    if ee == 0.0:
        raise ValueError("direction e must be nonzero")
    g_e = np.multiply.outer(g @ e, e) / ee if g.ndim > 1 else (g @ e) * e / ee
    return g_e, g - g_e


# -- sign certificates ------------------------------------------------------

@dataclass
class ClaimResult:
    claim: str
    d: int
    holds: bool
    expected: bool
    detail: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return self.holds == self.expected

    def to_dict(self) -> dict:
        out = asdict(self)
        out["consistent"] = self.consistent
        return out


@dataclass
class CertificateReport:
    results: list[ClaimResult]

    @property
    def passed(self) -> bool:
        return all(c.consistent for c in self.results)

    def failures(self) -> list[ClaimResult]:
        return [c for c in self.results if not c.consistent]

    def find(self, claim: str, d: int) -> ClaimResult:
        for c in self.results:
            if c.claim == claim and c.d == d:
                return c
        raise KeyError((claim, d))

    def to_dict(self) -> dict:
        return {"passed": self.passed, "results": [c.to_dict() for c in self.results]}


def quadratic_margin(d: int) -> int:
    return -d * d - 8 * d + 45


def _sign_claim(claim: str, which: str, d: int, r_grid: np.ndarray, sign: int, expected: bool) -> ClaimResult:
    vals = eval_weight_derivative(which, r_grid, d)
    bad = np.nonzero(sign * vals < 0)[0]
    origin = exact_at_origin(which, d)
    tail = dominant_sign_at_infinity(which, d)
    holds = bad.size == 0 and sign * origin >= 0 and sign * tail >= 0
    detail = {"value_at_0": str(origin), "sign_at_infinity": tail}
    if bad.size:
        detail["counterexample_r"] = float(r_grid[bad[0]])
        detail["counterexample_value"] = float(vals[bad[0]])
    elif sign * tail < 0:
        detail["counterexample_r"] = "infinity"
    return ClaimResult(claim, d, bool(holds), expected, detail)


def torus_form_check(d: int, samples: int, rng: np.random.Generator) -> tuple[bool, float]:
    """Pointwise torus-Hessian form and its rewritten negative version.

    For G = grad_x d_alpha u, the contraction -a_jk G_j conj(G_k) equals
    -|G|^2/<r>^3 - r^2 |G_perp|^2/<r>^3, which is <= 0.
    """
    worst_identity = 0.0
    ok = True
    for _ in range(samples):
        e = rng.normal(size=d) * rng.uniform(0.0, 10.0)
        r = float(np.linalg.norm(e))
        rho = float(bracket(r))
        G = rng.normal(size=d) + 1j * rng.normal(size=d)
        A, B = eval_weight_derivative("hessian", r, d)
        M = A * np.eye(d) + B * np.outer(e, e)
        form = -float(np.real(np.conj(G) @ M @ G))
        if r > 0:
            _, gp = directional_split(G, e)
        else:
            gp = np.zeros_like(G)
        rewritten = -np.vdot(G, G).real / rho**3 - r * r * np.vdot(gp, gp).real / rho**3
        worst_identity = max(worst_identity, abs(form - rewritten) / max(1.0, abs(form)))
        if form > 1e-12 * np.vdot(G, G).real:
            ok = False
    return bool(ok and worst_identity < 1e-10), float(worst_identity)


def sign_certificates(
    d_range=range(1, 101),
    r_points: int = 1000,
    r_max: float = 100.0,
    form_samples: int = 200,
    seed: int = 0,
) -> CertificateReport:
    """Check each sign claim for every d and compare with the stated d range."""
    rng = np.random.default_rng(seed)
    r_grid = np.linspace(0.0, r_max, r_points)
    out: list[ClaimResult] = []
    for d in d_range:
        q = quadratic_margin(d)
        out.append(ClaimResult("quadratic", d, q <= 0, d >= 4, {"value": q}))
        out.append(_sign_claim("trilaplacian_nonneg", "trilaplacian", d, r_grid, +1, d >= 5))
        out.append(_sign_claim("bilaplacian_nonpos", "bilaplacian", d, r_grid, -1, d >= 3))
        ok, ident = torus_form_check(d, form_samples, rng)
        out.append(ClaimResult("torus_hessian_form", d, ok, True, {"identity_error": ident}))
    return CertificateReport(out)


# -- Hessian chain checks ---------------------------------------------------

@dataclass
class BoundCheck:
    name: str
    samples: int
    violations: int
    max_excess: float
    passed: bool


@dataclass
class HessianReport:
    d: int
    checks: list[BoundCheck]
    open_items: list[str]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "open_items": self.open_items,
        }


def _random_hessian(d, rng):
    H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (H + H.T)


def hessian_bound_check(samples: int = 10_000, d: int = 5, seed: int = 0) -> HessianReport:
    """Sample the pointwise inequalities of the Hessian chain.

    With H the (complex symmetric) Hessian of u, g its gradient, e = x - y
    and unit vector e^ = e/r:
      hessian_contraction  -a_jk conj(H_ij) H_ik <= -(|H|^2 - |H e^|^2)/<r>
      hessian_identity_I   H = I gives -d/<r> + r^2/<r>^3
      origin_equality      r = 0 gives exactly -|H|^2
      bilaplacian_gradient Delta^2 a |g|^2 <= -(d+5)(d-3)|g_e|^2/<r>^5 (d >= 3)
    """
    rng = np.random.default_rng(seed)
    tol = 1e-12
    stats = {k: [0, 0.0, 0] for k in ("hessian_contraction", "hessian_identity_I", "origin_equality", "bilaplacian_gradient")}

    def note(key, excess):
        s = stats[key]
        s[2] += 1
        if excess > tol:
            s[0] += 1
        s[1] = max(s[1], excess)

    for i in range(samples):
        e = rng.normal(size=d)
        e *= rng.uniform(0.0, 20.0) / np.linalg.norm(e)
        r = float(np.linalg.norm(e))
        rho = float(bracket(r))
        A, B = eval_weight_derivative("hessian", r, d)
        M = A * np.eye(d) + B * np.outer(e, e)
        H = _random_hessian(d, rng)
        lhs = -float(np.real(np.einsum("jk,ij,ik->", M, np.conj(H), H)))
        He = H @ (e / r)
        H2 = float(np.sum(np.abs(H) ** 2))
        rhs = -(H2 - float(np.vdot(He, He).real)) / rho
        note("hessian_contraction", (lhs - rhs) / max(1.0, abs(rhs)))

        closed = -d / rho + r * r / rho**3
        lhs_i = -float(np.real(np.einsum("jk,ij,ik->", M, np.eye(d), np.eye(d))))
        note("hessian_identity_I", abs(lhs_i - closed) / max(1.0, abs(closed)))

        if i % 10 == 0:
            M0 = np.eye(d)
            lhs0 = -float(np.real(np.einsum("jk,ij,ik->", M0, np.conj(H), H)))
            note("origin_equality", abs(lhs0 + H2) / max(1.0, H2))

        if d >= 3:
            g = rng.normal(size=d) + 1j * rng.normal(size=d)
            ge, _ = directional_split(g, e)
            b2 = float(eval_weight_derivative("bilaplacian", r, d))
            left = b2 * float(np.vdot(g, g).real)
            right = -(d + 5) * (d - 3) * float(np.vdot(ge, ge).real) / rho**5
            note("bilaplacian_gradient", (left - right) / max(1.0, abs(right)))

    checks = [BoundCheck(k, v[2], v[0], v[1], v[0] == 0) for k, v in stats.items() if v[2]]
    open_items = [
        "second-derivative inequality relating |grad d_i u|^2 - |grad_e d_i u|^2 to "
        "(d-1)|grad_e u|^2/|x-y|^2 is not pointwise in independent (H, g); not sampled"
    ]
    return HessianReport(d, checks, open_items)
