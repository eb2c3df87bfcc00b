"""Asymptotic line solitons: prediction, classification and far-field checks.

For the fully-resonant family the tau function reduces (after a scaling
transformation that u = 2(ln tau)_xx cannot see) to a positive combination
of all M-phase exponential subsets; the asymptotic soliton of a transition
line is read off from the two dominant terms there.  Phase offsets are
extracted by ranking tau's terms rather than re-deriving product formulas,
and the closed-form products are kept alongside as a cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import log, sqrt
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .expsum import (ExpSum, LinearPhase, ZERO_PHASE, check_sigma, phase_of,
                     phase_of_kappa)
from .kpfield import u_derivatives, MultiIndex
from .wronskian import ScenarioConfig, SpectralDatum, tau_symbolic


class LengthNotEven(ValueError):
    """Coefficient sequences must have even length 2N."""


class PeakNotIsolated(RuntimeError):
    """Neighboring solitons overlap the probe window."""


class RankDeficient(ValueError):
    """Single-Wronskian coefficient matrix is not of full rank."""


# -- nonsingularity classification (conditions on the 2N coefficient pairs) --

@dataclass(frozen=True)
class ClassifyReport:
    L: int
    M: int
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def classify_coefficients(a: Sequence[float], b: Sequence[float]) -> ClassifyReport:
    """Count L, M from the zero pattern and check the three sign conditions."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) != len(b) or len(a) % 2:
        raise LengthNotEven(f"need equal even-length sequences, got {len(a)}, {len(b)}")
    N = len(a) // 2
    L = sum(1 for v in a if v != 0) - N
    M = sum(1 for v in b if v != 0) - N
    violations = []
    for k in range(2 * N):
        if a[k] == 0 and b[k] == 0:
            violations.append(f"(i): a_{k + 1} = b_{k + 1} = 0")
    if not 1 <= L <= N:
        violations.append(f"(ii): L = {L} outside 1..{N}")
    if not 1 <= M <= N:
        violations.append(f"(ii): M = {M} outside 1..{N}")
    for k in range(2 * N - 1):
        if a[k] * a[k + 1] * b[k] * b[k + 1] > 0:
            violations.append(f"(iii): sign rule fails at k = {k + 1}")
    return ClassifyReport(L, M, tuple(violations))


# -- fully-resonant KPII family ----------------------------------------------

@dataclass(frozen=True)
class ResonantParams:
    """Fully-resonant configuration: L + M phases, positive weights b'."""

    L: int
    M: int
    kappa: tuple[float, ...]
    bprime: tuple[float, ...]
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        object.__setattr__(self, "bprime", tuple(float(b) for b in self.bprime))
        if self.L < 1 or self.M < 1:
            raise ValueError("L and M must be positive")
        n = self.M + self.L
        if len(self.kappa) != n or len(self.bprime) != n:
            raise ValueError(f"need {n} kappas and b' weights")
        if any(k2 <= k1 for k1, k2 in zip(self.kappa, self.kappa[1:])):
            raise ValueError("kappa values must be strictly increasing")
        if any(b == 0 for b in self.bprime):
            raise ValueError("b' weights must be nonzero")
        if float(self.sigma) not in (1.0, -1.0):
            raise ValueError("resonant family is a KPII object: sigma must be +-1")

    @property
    def warnings(self) -> tuple[str, ...]:
        if any(b < 0 for b in self.bprime):
            return ("mixed-sign b' weights make tau sign-indefinite",)
        return ()


def _vandermonde(kappas: Sequence[float]) -> float:
    out = 1.0
    for p in range(len(kappas)):
        for q in range(p + 1, len(kappas)):
            out *= kappas[q] - kappas[p]
    return out


def resonant_tau(params: ResonantParams) -> ExpSum:
    """tau' = sum over M-subsets I of b'_J * V(I) * V(J) * exp(sum_I theta).

    Index sets are ascending, so both Vandermonde factors are positive and
    tau' is sign definite whenever all b' weights share one sign.
    """
    n = params.M + params.L
    phases = [phase_of_kappa(k, params.sigma) for k in params.kappa]
    terms = []
    for I in itertools.combinations(range(n), params.M):
        J = tuple(i for i in range(n) if i not in I)
        coeff = _vandermonde([params.kappa[i] for i in I])
        coeff *= _vandermonde([params.kappa[j] for j in J])
        for j in J:
            coeff *= params.bprime[j]
        phase = ZERO_PHASE
        for i in I:
            phase = phase + phases[i]
        terms.append((coeff, phase))
    return ExpSum(terms)


def resonant_scenario(params: ResonantParams) -> ScenarioConfig:
    """Lift (L, M, b') to a full m=1 spectral scenario with 2N = 2 max(L, M) rows.

    The extra rows carry a zero a- or b-coefficient; the raw b_k alternate in
    sign so the adjacent-product condition holds while b_k / a_k reproduces
    the resonant weights up to the overall sign convention of the expansion.
    """
    N = max(params.L, params.M)
    n_live = params.M + params.L
    kappas = list(params.kappa)
    gap = 0.45
    while len(kappas) < 2 * N:
        kappas.append(kappas[-1] + gap)
    a = [1.0] * (2 * N)
    b = [0.0] * (2 * N)
    for k in range(n_live):
        b[k] = params.bprime[k] if k % 2 == 0 else -params.bprime[k]
    idx = n_live
    for _ in range(N - params.L):       # a-zeros: keep b alive there
        a[idx] = 0.0
        b[idx] = 1.0
        idx += 1
    for _ in range(N - params.M):       # b-zeros: keep a alive there
        b[idx] = 0.0
        idx += 1
    spectra = [SpectralDatum(lam=-kappas[k] / 2.0, a=a[k], b=(b[k],))
               for k in range(2 * N)]
    return ScenarioConfig.kpii(params.sigma, 1, N, spectra)


@dataclass(frozen=True)
class AsymptoticSoliton:
    """One far-field line soliton: indices, sech^2 data and its half-plane."""

    pair: tuple[int, int]
    amplitude: float
    wavevector: tuple[float, float]
    frequency: float
    phase_offset: float
    side: int                                   # +1: y -> +inf, -1: y -> -inf
    closed_form_offset: Optional[float] = None

    @property
    def side_label(self) -> str:
        return "y->+inf" if self.side > 0 else "y->-inf"


def _lookup_coeff(tau: ExpSum, phase: LinearPhase, tol: float = 1e-9) -> complex:
    for c, p in tau.terms:
        if p.close_to(phase, tol):
            return c
    raise KeyError(f"no tau term with phase {phase}")


def _offset_from_pair(zeta: complex, eta: complex) -> float:
    """ln sqrt(zeta/eta) for the two dominant coefficients (same-sign expected)."""
    return 0.5 * log(abs(zeta) / abs(eta))


def _closed_form_products(params: ResonantParams, i: int, j: int, up: bool):
    """|C_i|, |C_j| transition products for the [i, j] line (1-based indices)."""
    k = params.kappa
    b = params.bprime
    n_all = range(1, params.M + params.L + 1)
    ci = abs(b[j - 1])
    cj = abs(b[i - 1])
    for n in n_all:
        if i < n < j:
            ci *= abs(k[i - 1] - k[n - 1]) if up else abs(k[n - 1] - k[j - 1])
            cj *= abs(k[n - 1] - k[j - 1]) if up else abs(k[i - 1] - k[n - 1])
        elif n < i:
            ci *= abs(k[n - 1] - k[j - 1]) if up else abs(k[n - 1] - k[i - 1])
            cj *= abs(k[n - 1] - k[i - 1]) if up else abs(k[n - 1] - k[j - 1])
        elif n > j:
            ci *= abs(k[j - 1] - k[n - 1]) if up else abs(k[i - 1] - k[n - 1])
            cj *= abs(k[i - 1] - k[n - 1]) if up else abs(k[j - 1] - k[n - 1])
    return ci, cj


def predict_kpii_asymptotics(params: ResonantParams,
                             tau: Optional[ExpSum] = None) -> list[AsymptoticSoliton]:
    """All asymptotic solitons of the resonant configuration, both half-planes.

    As sigma*y -> +inf the transitions pair [i, i+M] across M-1 consecutive
    common phases; as sigma*y -> -inf they pair [i, i+L] with the common
    phases split around the pair.  Amplitude, wavevector and frequency come
    from the kappa differences; offsets from the two dominant coefficients.
    """
    if tau is None:
        tau = resonant_tau(params)
    kap = params.kappa
    sig = float(params.sigma)
    phases = [phase_of_kappa(k, sig) for k in kap]

    def soliton(i: int, j: int, common: tuple[int, ...], side: int) -> AsymptoticSoliton:
        base = ZERO_PHASE
        for n in common:
            base = base + phases[n - 1]
        zeta = _lookup_coeff(tau, base + phases[i - 1])
        eta = _lookup_coeff(tau, base + phases[j - 1])
        ki, kj = kap[i - 1], kap[j - 1]
        amp = 0.5 * (kj - ki) ** 2
        wave = (0.5 * (kj - ki), (kj * kj - ki * ki) / (2.0 * sig))
        freq = 0.5 * (kj ** 3 - ki ** 3)
        ci, cj = _closed_form_products(params, i, j, up=(side * sig > 0))
        return AsymptoticSoliton((i, j), amp, wave, freq,
                                 _offset_from_pair(zeta, eta), side,
                                 closed_form_offset=0.5 * log(ci / cj))

    out = []
    up_side = 1 if sig > 0 else -1
    for i in range(1, params.L + 1):            # sigma*y -> +inf family
        j = i + params.M
        common = tuple(range(i + 1, j))
        out.append(soliton(i, j, common, up_side))
    for i in range(1, params.M + 1):            # sigma*y -> -inf family
        j = i + params.L
        common = tuple(range(1, i)) + tuple(range(j + 1, params.M + params.L + 1))
        out.append(soliton(i, j, common, -up_side))
    return out


# -- KPI N-soliton family ------------------------------------------------------

@dataclass(frozen=True)
class KpiSpectralDatum:
    """KPI spectral datum: lam = (mu + sigma*nu)/4 with unit a and free b."""

    mu: float
    nu: float
    b: complex = 1.0 + 0j

    def lam(self, sigma: complex) -> complex:
        return 0.25 * (self.mu + check_sigma(sigma) * self.nu)

    def to_spectral(self, sigma: complex) -> SpectralDatum:
        return SpectralDatum(lam=self.lam(sigma), a=1.0 + 0j, b=(complex(self.b),),
                             mu=self.mu, nu=self.nu)


def kpi_scenario(spectra: Sequence[KpiSpectralDatum], sigma: complex = 1j,
                 epsilon: int = -1) -> ScenarioConfig:
    data = [d.to_spectral(sigma) for d in spectra]
    return ScenarioConfig.kpi(sigma, 1, len(spectra), data, epsilon)


def predict_kpi_asymptotics(spectra: Sequence[KpiSpectralDatum],
                            sigma: complex = 1j, epsilon: int = -1,
                            tau: Optional[ExpSum] = None) -> list[AsymptoticSoliton]:
    """Both-side asymptotic solitons [n, nbar] of the reduced N-soliton tau.

    Each soliton keeps amplitude mu_n^2 / 2 and velocity across the collision;
    only the offsets differ, read from the dominant-coefficient pair selected
    by the mu-sign index sets.
    """
    spectra = list(spectra)
    if any(s2.nu < s1.nu for s1, s2 in zip(spectra, spectra[1:])):
        raise ValueError("nu values must be non-decreasing")
    if any(d.mu == 0 for d in spectra):
        raise ValueError("mu values must be nonzero")
    if any(d.b == 0 for d in spectra):
        raise ValueError("b coefficients must be nonzero")
    if tau is None:
        tau = tau_symbolic(kpi_scenario(spectra, sigma, epsilon))
    sigma = check_sigma(sigma)
    N = len(spectra)
    thetas = [phase_of(d.lam(sigma), sigma) for d in spectra]

    out = []
    for n in range(1, N + 1):
        mu, nu = spectra[n - 1].mu, spectra[n - 1].nu
        amp = 0.5 * mu * mu
        wave = (0.5 * mu, -0.5 * mu * nu)
        freq = 0.125 * mu * (mu * mu - 3.0 * nu * nu)
        for side in (+1, -1):
            base = ZERO_PHASE
            for k in range(1, N + 1):
                if k == n:
                    continue
                mu_k = spectra[k - 1].mu
                before = k < n
                # side -1: eps = -1 on {mu>0, k<n} u {mu<0, k>n}; side +1 flips
                eps = -1.0 if (mu_k > 0) == before else 1.0
                eps *= -side
                th = thetas[k - 1]
                base = base + (th + th.conjugate()).scaled(0.5 * eps)
            tn = thetas[n - 1]
            real_n = (tn + tn.conjugate()).scaled(0.5)
            zeta = _lookup_coeff(tau, base + real_n)
            eta = _lookup_coeff(tau, base + (-real_n))
            out.append(AsymptoticSoliton((n, n), amp, wave, freq,
                                         _offset_from_pair(zeta, eta), side))
    return out


def parallel_pairs(solitons: Sequence[AsymptoticSoliton], tol: float = 1e-12):
    """Index pairs whose wavevectors are parallel (cross product vanishes)."""
    out = []
    for a, b in itertools.combinations(range(len(solitons)), 2):
        (kx1, ky1), (kx2, ky2) = solitons[a].wavevector, solitons[b].wavevector
        if abs(kx1 * ky2 - kx2 * ky1) <= tol:
            out.append((a, b))
    return out


# -- far-field measurement ------------------------------------------------------

@dataclass(frozen=True)
class MeasuredSoliton:
    amplitude: float
    phase_offset: float
    center_x: float
    fit_residual: float


def measure_far_field(tau: ExpSum, soliton: AsymptoticSoliton, y_probe: float,
                      t: float = 0.0, widths: float = 8.0,
                      n_samples: int = 1201) -> MeasuredSoliton:
    """Scan u across the transition line at fixed y, t and fit a sech^2 peak.

    The window spans the given number of soliton widths around the predicted
    crest; if the profile has not decayed at the window edges the soliton is
    not isolated at this probe distance.
    """
    kx, ky = soliton.wavevector
    if kx == 0:
        raise ValueError("soliton wavevector has no x component")
    center = -(ky * y_probe + soliton.frequency * t + soliton.phase_offset) / kx
    half = widths / abs(kx)
    xs = np.linspace(center - half, center + half, n_samples)
    vals, singular = u_derivatives(tau, xs, np.full_like(xs, y_probe),
                                   np.full_like(xs, t))
    if np.any(singular):
        raise PeakNotIsolated(f"tau vanishes on the probe line y = {y_probe}")
    u = np.real(vals[MultiIndex(0, 0, 0)])
    peak = float(np.max(u))
    if peak <= 0:
        raise PeakNotIsolated(f"no crest found near x = {center:.3f}, y = {y_probe}")
    edge = max(abs(float(u[0])), abs(float(u[-1])))
    if edge > 0.05 * peak:
        raise PeakNotIsolated(
            f"profile not decayed at window edge (edge/peak = {edge / peak:.3g})")

    def model(xv, amp, rate, xc):
        return amp / np.cosh(rate * (xv - xc)) ** 2

    x0 = float(xs[int(np.argmax(u))])
    popt, _ = curve_fit(model, xs, u, p0=(peak, abs(kx), x0), maxfev=20000)
    amp, rate, xc = float(popt[0]), float(popt[1]), float(popt[2])
    resid = float(np.max(np.abs(u - model(xs, *popt)))) / peak
    if resid > 0.02:
        raise PeakNotIsolated(f"sech^2 fit residual {resid:.3g} too large")
    offset = -(kx * xc + ky * y_probe + soliton.frequency * t)
    return MeasuredSoliton(amp, offset, xc, resid)


# -- classical single-Wronskian oracle ------------------------------------------

def single_wronskian_oracle(A: np.ndarray, kappa: Sequence[float],
                            sigma: float = 1.0) -> ExpSum:
    """Classical Wronskian tau over seeds f_h = sum_l A_hl exp(eta_l).

    Expanded by Binet-Cauchy into sum over column subsets of minor times
    Vandermonde times exp(sum eta); used as an independent oracle for the
    asymptotic data of matched resonant configurations.
    """
    A = np.asarray(A, dtype=float)
    N, M = A.shape
    if np.linalg.matrix_rank(A) < N:
        raise RankDeficient(f"coefficient matrix of shape {N}x{M} has rank < {N}")
    kappa = [float(k) for k in kappa]
    if len(kappa) != M:
        raise ValueError(f"need {M} kappa values")
    etas = [-phase_of_kappa(k, sigma) for k in kappa]
    terms = []
    for cols in itertools.combinations(range(M), N):
        minor = float(np.linalg.det(A[:, cols])) if N else 1.0
        if minor == 0:
            continue
        coeff = minor * _vandermonde([kappa[c] for c in cols])
        phase = ZERO_PHASE
        for c in cols:
            phase = phase + etas[c]
        terms.append((coeff, phase))
    return ExpSum(terms)


def single_wronskian_asymptotics(A: np.ndarray, kappa: Sequence[float],
                                 sigma: float = 1.0) -> list[AsymptoticSoliton]:
    """Asymptotic soliton data of the oracle tau, via the complement mapping.

    Dropping the common factor exp(sum of all etas), the oracle tau carries
    the coefficient of exp(sum_I theta) at the complement subset, so the
    resonant pairing rules apply with L = N and M = (columns - N).
    """
    tau = single_wronskian_oracle(A, kappa, sigma)
    N, Mcols = np.asarray(A).shape
    params = ResonantParams(L=N, M=Mcols - N, kappa=tuple(kappa),
                            bprime=(1.0,) * Mcols, sigma=sigma)
    kap = params.kappa
    etas = [-phase_of_kappa(k, sigma) for k in kap]

    def coeff_of(I: tuple[int, ...]) -> complex:
        comp = tuple(c for c in range(Mcols) if c + 1 not in I)
        phase = ZERO_PHASE
        for c in comp:
            phase = phase + etas[c]
        return _lookup_coeff(tau, phase)

    out = []
    up_side = 1 if sigma > 0 else -1
    for i in range(1, params.L + 1):
        j = i + params.M
        common = tuple(range(i + 1, j))
        zeta, eta = coeff_of(common + (i,)), coeff_of(common + (j,))
        out.append(_soliton_from_kappas(kap, sigma, i, j, zeta, eta, up_side))
    for i in range(1, params.M + 1):
        j = i + params.L
        common = tuple(range(1, i)) + tuple(range(j + 1, Mcols + 1))
        zeta, eta = coeff_of(common + (i,)), coeff_of(common + (j,))
        out.append(_soliton_from_kappas(kap, sigma, i, j, zeta, eta, -up_side))
    return out


def _soliton_from_kappas(kap, sigma, i, j, zeta, eta, side) -> AsymptoticSoliton:
    ki, kj = kap[i - 1], kap[j - 1]
    return AsymptoticSoliton((i, j), 0.5 * (kj - ki) ** 2,
                             (0.5 * (kj - ki), (kj * kj - ki * ki) / (2.0 * sigma)),
                             0.5 * (kj ** 3 - ki ** 3),
                             _offset_from_pair(zeta, eta), side)
