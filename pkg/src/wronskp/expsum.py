"""Exact calculus over finite sums of complex exponentials of affine phases.

Every tau function, Wronskian minor and transformed potential in this
package is a finite sum  sum_k c_k * exp(cx_k*x + cy_k*y + ct_k*t + c0_k).
This module provides the canonical container for such sums together with
arithmetic, analytic differentiation, overflow-safe evaluation and the
recursive quotient-rule engine used for derivatives of ratios like
(ln tau)_xx.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Iterable, Sequence

import numpy as np

# Componentwise absolute tolerance for deciding that two phases coincide.
# Phases are built from small-integer combinations of the input spectral
# parameters, so collisions are either exact (up to roundoff) or far apart.
MERGE_TOL = 1e-12

# Highest total derivative order the engines are asked for: the KP residual
# needs d^5 of (tau_x / tau).
DEFAULT_DERIVATIVE_CAP = 5


class OverflowAfterScaling(ArithmeticError):
    """Even the max-phase-scaled evaluation is not representable."""


class DivisionByZeroDenominator(ZeroDivisionError):
    """Quotient-rule denominator evaluates to (numerically) zero."""


def check_sigma(sigma: complex) -> complex:
    """Validate a dispersion sign: +-1 selects KPII, +-i selects KPI."""
    sigma = complex(sigma)
    for allowed in (1.0, -1.0, 1j, -1j):
        if abs(sigma - allowed) < 1e-14:
            return complex(allowed)
    raise ValueError(f"sigma must be one of +-1 (KPII) or +-i (KPI), got {sigma}")


@dataclass(frozen=True)
class LinearPhase:
    """Affine phase cx*x + cy*y + ct*t + c0 with complex coefficients."""

    cx: complex = 0j
    cy: complex = 0j
    ct: complex = 0j
    c0: complex = 0j

    def __call__(self, x, y, t):
        return self.cx * x + self.cy * y + self.ct * t + self.c0

    def __add__(self, other: "LinearPhase") -> "LinearPhase":
        return LinearPhase(self.cx + other.cx, self.cy + other.cy,
                           self.ct + other.ct, self.c0 + other.c0)

    def __neg__(self) -> "LinearPhase":
        return LinearPhase(-self.cx, -self.cy, -self.ct, -self.c0)

    def __sub__(self, other: "LinearPhase") -> "LinearPhase":
        return self + (-other)

    def scaled(self, c: complex) -> "LinearPhase":
        return LinearPhase(c * self.cx, c * self.cy, c * self.ct, c * self.c0)

    def conjugate(self) -> "LinearPhase":
        # Conjugate of the phase function on real (x, y, t).
        return LinearPhase(np.conj(self.cx), np.conj(self.cy),
                           np.conj(self.ct), np.conj(self.c0))

    def close_to(self, other: "LinearPhase", tol: float = MERGE_TOL) -> bool:
        return (abs(self.cx - other.cx) <= tol and abs(self.cy - other.cy) <= tol
                and abs(self.ct - other.ct) <= tol and abs(self.c0 - other.c0) <= tol)

    def sort_key(self):
        return (self.cx.real, self.cx.imag, self.cy.real, self.cy.imag,
                self.ct.real, self.ct.imag, self.c0.real, self.c0.imag)


ZERO_PHASE = LinearPhase()


@dataclass(frozen=True)
class MultiIndex:
    """Mixed partial-derivative order (ox in x, oy in y, ot in t)."""

    ox: int = 0
    oy: int = 0
    ot: int = 0

    def __post_init__(self):
        if self.ox < 0 or self.oy < 0 or self.ot < 0:
            raise ValueError(f"derivative orders must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.ox + self.oy + self.ot

    def check_cap(self, cap: int = DEFAULT_DERIVATIVE_CAP) -> "MultiIndex":
        if self.total > cap:
            raise ValueError(f"total derivative order {self.total} exceeds cap {cap}")
        return self

    @staticmethod
    def of(idx) -> "MultiIndex":
        if isinstance(idx, MultiIndex):
            return idx
        return MultiIndex(*idx)


def _as_multi(idx) -> MultiIndex:
    return MultiIndex.of(idx)


def _lattice_below(idx: MultiIndex):
    """All multi-indices beta <= idx, in graded (total-order ascending) order."""
    betas = [MultiIndex(i, j, k)
             for i in range(idx.ox + 1)
             for j in range(idx.oy + 1)
             for k in range(idx.ot + 1)]
    betas.sort(key=lambda b: (b.total, b.ox, b.oy, b.ot))
    return betas


def _multi_binom(alpha: MultiIndex, beta: MultiIndex) -> int:
    return comb(alpha.ox, beta.ox) * comb(alpha.oy, beta.oy) * comb(alpha.ot, beta.ot)


class ExpSum:
    """Canonical finite sum of terms coeff * exp(phase).

    Canonical form: terms sorted by phase, no two terms with phases equal
    within MERGE_TOL, no exactly-zero coefficients.  Instances are
    immutable; all arithmetic returns new canonical sums.
    """

    __slots__ = ("terms", "__dict__")

    def __init__(self, terms: Iterable[tuple[complex, LinearPhase]] = (),
                 *, _canonical: bool = False):
        if _canonical:
            self.terms = tuple(terms)
        else:
            self.terms = _canonicalize(terms)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero() -> "ExpSum":
        return ExpSum((), _canonical=True)

    @staticmethod
    def constant(c: complex) -> "ExpSum":
        return ExpSum([(complex(c), ZERO_PHASE)])

    @staticmethod
    def single(coeff: complex, phase: LinearPhase) -> "ExpSum":
        return ExpSum([(complex(coeff), phase)])

    # -- basic protocol ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "ExpSum(0)"
        bits = [f"({c:.6g})*exp[{p.cx:.6g}x+{p.cy:.6g}y+{p.ct:.6g}t+{p.c0:.6g}]"
                for c, p in self.terms[:4]]
        more = f" ... ({len(self.terms)} terms)" if len(self.terms) > 4 else ""
        return "ExpSum(" + " + ".join(bits) + more + ")"

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def max_coeff(self) -> float:
        return max((abs(c) for c, _ in self.terms), default=0.0)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: "ExpSum") -> "ExpSum":
        return ExpSum(self.terms + other.terms)

    def __sub__(self, other: "ExpSum") -> "ExpSum":
        return self + (-other)

    def __neg__(self) -> "ExpSum":
        return ExpSum(tuple((-c, p) for c, p in self.terms), _canonical=True)

    def __mul__(self, other):
        if isinstance(other, ExpSum):
            prods = [(ca * cb, pa + pb) for ca, pa in self.terms for cb, pb in other.terms]
            return ExpSum(prods)
        c = complex(other)
        if c == 0:
            return ExpSum.zero()
        return ExpSum(tuple((c * ca, pa) for ca, pa in self.terms), _canonical=True)

    __rmul__ = __mul__

    def conjugate(self) -> "ExpSum":
        return ExpSum(tuple((np.conj(c), p.conjugate()) for c, p in self.terms))

    def shifted(self, phase: LinearPhase) -> "ExpSum":
        """Multiply by exp(phase): adds the phase to every term."""
        return ExpSum(tuple((c, p + phase) for c, p in self.terms), _canonical=True)

    def pruned(self, rel_tol: float) -> "ExpSum":
        """Drop terms with |coeff| below rel_tol times the largest |coeff|."""
        floor = rel_tol * self.max_coeff()
        return ExpSum(tuple((c, p) for c, p in self.terms if abs(c) > floor),
                      _canonical=True)

    # -- calculus ------------------------------------------------------------

    def derivative(self, idx, cap: int = DEFAULT_DERIVATIVE_CAP) -> "ExpSum":
        """Analytic mixed partial d^idx: scales each coeff by cx^ox cy^oy ct^ot."""
        m = _as_multi(idx).check_cap(cap)
        out = []
        for c, p in self.terms:
            c2 = c * p.cx ** m.ox * p.cy ** m.oy * p.ct ** m.ot
            if c2 != 0:
                out.append((c2, p))
        return ExpSum(tuple(out), _canonical=True)

    # -- evaluation ----------------------------------------------------------

    @cached_property
    def _arrays(self):
        n = len(self.terms)
        coeffs = np.array([c for c, _ in self.terms], dtype=complex).reshape(n)
        phases = np.array([[p.cx, p.cy, p.ct, p.c0] for _, p in self.terms],
                          dtype=complex).reshape(n, 4)
        return coeffs, phases

    def phase_values(self, x, y, t) -> np.ndarray:
        """Phase of every term at the point(s); shape broadcast(x,y,t) + (nterms,)."""
        _, ph = self._arrays
        x, y, t = np.asarray(x), np.asarray(y), np.asarray(t)
        return (x[..., None] * ph[:, 0] + y[..., None] * ph[:, 1]
                + t[..., None] * ph[:, 2] + ph[:, 3])

    def eval_scaled(self, x, y, t):
        """Return (scaled, log_scale) with value = scaled * exp(log_scale).

        log_scale is the maximum real part over all term phases, so every
        exponential in the scaled sum has modulus <= 1.
        """
        x, y, t = np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)
        shape = np.broadcast_shapes(x.shape, y.shape, t.shape)
        if not self.terms:
            return np.zeros(shape, complex), np.zeros(shape)
        coeffs, _ = self._arrays
        ph = self.phase_values(x, y, t)
        log_scale = np.max(ph.real, axis=-1)
        scaled = np.exp(ph - log_scale[..., None]) @ coeffs
        if not np.all(np.isfinite(scaled)):
            raise OverflowAfterScaling("scaled exponential sum is not representable")
        return scaled, log_scale

    def eval(self, point) -> complex:
        """Value at a single point (x, y, t); may return inf if exp(scale) overflows."""
        x, y, t = point
        scaled, s = self.eval_scaled(x, y, t)
        with np.errstate(over="ignore", under="ignore"):
            return complex(scaled * np.exp(s))

    def eval_log(self, point):
        """Overflow-safe channel: (log magnitude, unit direction) of the value."""
        x, y, t = point
        scaled, s = self.eval_scaled(x, y, t)
        mag = abs(complex(scaled))
        if mag == 0.0:
            return -np.inf, 1.0 + 0j
        return float(s + np.log(mag)), complex(scaled / mag)

    # -- comparison ----------------------------------------------------------

    def allclose(self, other: "ExpSum", rtol: float = 1e-10) -> bool:
        """Termwise equality after canonicalization, relative to the largest coeff."""
        scale = max(self.max_coeff(), other.max_coeff())
        if scale == 0.0:
            return True
        resid = self - other
        return resid.max_coeff() <= rtol * scale


def _canonicalize(terms) -> tuple:
    """Sort by phase, merge phases equal within MERGE_TOL, drop zero coeffs."""
    items = [(complex(c), p) for c, p in terms if c != 0]
    items.sort(key=lambda cp: cp[1].sort_key())
    merged: list[list] = []
    for c, p in items:
        if merged and merged[-1][1].close_to(p):
            merged[-1][0] += c
        else:
            merged.append([c, p])
    return tuple((c, p) for c, p in merged if c != 0)


def phase_of(lam: complex, sigma: complex) -> LinearPhase:
    """Seed phase of the spectral problem for spectral parameter lam.

    theta = 2*lam*x - (4/sigma)*lam^2*y + 8*lam^3*t.  For sigma = +-1 the
    y-coefficient equals -4*sigma*lam^2; for sigma = +-i the 1/sigma form is
    the one the zero-potential eigenfunctions actually satisfy.
    """
    sigma = check_sigma(sigma)
    lam = complex(lam)
    return LinearPhase(cx=2 * lam, cy=-(4 / sigma) * lam * lam, ct=8 * lam ** 3)


def phase_of_kappa(kappa: float, sigma: complex) -> LinearPhase:
    """Soliton-literature phase -k*x - sigma*k^2*y - k^3*t (kappa = -2*lam)."""
    sigma = check_sigma(sigma)
    k = complex(kappa)
    return LinearPhase(cx=-k, cy=-sigma * k * k, ct=-k ** 3)


class ScaledFamily:
    """Evaluations of one ExpSum and all its derivatives at fixed point(s).

    All derivatives of an ExpSum share its phase set, so a single log-scale
    (max real phase of the base sum) keeps the whole family overflow-free.
    """

    def __init__(self, base: ExpSum, x, y, t):
        self.base = base
        x, y, t = np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)
        self.shape = np.broadcast_shapes(x.shape, y.shape, t.shape)
        if base.is_zero:
            self.log_scale = np.zeros(self.shape)
            self._expph = None
        else:
            ph = base.phase_values(x, y, t)
            self.log_scale = np.max(ph.real, axis=-1)
            self._expph = np.exp(ph - self.log_scale[..., None])
        self._cache: dict[MultiIndex, np.ndarray] = {}

    def deriv(self, idx: MultiIndex) -> np.ndarray:
        """Scaled value of d^idx(base): true value = deriv * exp(log_scale)."""
        if idx in self._cache:
            return self._cache[idx]
        if self._expph is None:
            val = np.zeros(self.shape, complex)
        else:
            coeffs, ph = self.base._arrays
            mult = ph[:, 0] ** idx.ox * ph[:, 1] ** idx.oy * ph[:, 2] ** idx.ot
            val = self._expph @ (coeffs * mult)
        self._cache[idx] = val
        return val


def quotient_derivs(num: ExpSum, den: ExpSum, targets, x, y, t,
                    cap: int = DEFAULT_DERIVATIVE_CAP, min_rel_den: float = 1e-12):
    """Mixed partials d^a(num/den) for every target index a, at the point(s).

    Uses the Leibniz recursion n_a = sum_{b<=a} C(a,b) d_b h_{a-b} solved for
    h_a over the union of the targets' down-sets, with num- and den-families
    evaluated under their own max-phase scales.  Returns (values, mask,
    log_offset): the true derivative is values[a] * exp(log_offset) with
    log_offset = sN - sD.  Points where |den| falls below min_rel_den
    relative to its largest term are flagged in mask (values nan there).
    """
    if isinstance(targets, (MultiIndex, tuple)) and not isinstance(targets, list):
        targets = [targets]
    tops = [_as_multi(i).check_cap(cap) for i in targets]
    need: set[MultiIndex] = set()
    for top in tops:
        need.update(_lattice_below(top))
    order = sorted(need, key=lambda b: (b.total, b.ox, b.oy, b.ot))

    fam_n = ScaledFamily(num, x, y, t)
    fam_d = ScaledFamily(den, x, y, t)
    d0 = fam_d.deriv(MultiIndex())
    den_floor = min_rel_den * max(den.max_coeff(), 1e-300)
    singular = np.abs(d0) <= den_floor
    safe_d0 = np.where(singular, 1.0, d0)

    h: dict[MultiIndex, np.ndarray] = {}
    for a in order:
        acc = fam_n.deriv(a).astype(complex).copy()
        for b in _lattice_below(a):
            if b.total == 0:
                continue
            rem = MultiIndex(a.ox - b.ox, a.oy - b.oy, a.ot - b.ot)
            acc -= _multi_binom(a, b) * fam_d.deriv(b) * h[rem]
        h[a] = acc / safe_d0
    if np.any(singular):
        nanfill = np.where(singular, np.nan + 0j, 1.0)
        h = {a: v * nanfill for a, v in h.items()}
    return h, singular, fam_n.log_scale - fam_d.log_scale


def quotient_derivative(num: ExpSum, den: ExpSum, idx, point,
                        cap: int = DEFAULT_DERIVATIVE_CAP,
                        min_rel_den: float = 1e-12) -> complex:
    """Single mixed partial d^idx(num/den) at one point.

    Raises DivisionByZeroDenominator when den vanishes there (relative to
    its own coefficient scale).
    """
    x, y, t = point
    top = _as_multi(idx)
    h, singular, log_off = quotient_derivs(num, den, top, x, y, t,
                                           cap=cap, min_rel_den=min_rel_den)
    if bool(singular):
        raise DivisionByZeroDenominator(f"denominator vanishes at {point}")
    with np.errstate(over="ignore", under="ignore"):
        return complex(h[top] * np.exp(log_off))
