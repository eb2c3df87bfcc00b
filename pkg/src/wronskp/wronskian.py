"""Block matrices and multi-component Wronskian tau functions.

Builds the K x K determinant whose column blocks are spectral-power columns
of the seed eigenfunction components, and expands tau, chi1_j and chi2_i
either exactly (as ExpSums, via generalized Laplace expansion over row
partitions) or pointwise (complex LU determinant with per-row max-phase
scaling).  Both the unreduced (KPII) and the conjugate-reduced (KPI)
layouts are driven by one uniform row description, which keeps the Cramer
relations between the determinants exact in both modes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial
from typing import Optional, Sequence

import numpy as np

from .expsum import ExpSum, LinearPhase, ZERO_PHASE, check_sigma, phase_of

DEFAULT_SYMBOLIC_CAP = 12


class DuplicateSpectralPoint(ValueError):
    """Two spectral parameters coincide."""


class DimensionMismatch(ValueError):
    """Column-block widths do not add up to the matrix size."""


class SymbolicCapExceeded(ValueError):
    """Row-partition expansion refused: K above the symbolic cap."""


@dataclass(frozen=True)
class SpectralDatum:
    """One seed eigenfunction: spectral parameter plus coefficients a, b^(j)."""

    lam: complex
    a: complex
    b: tuple[complex, ...]
    mu: Optional[float] = None  # KPI parametrization lam = (mu + sigma*nu)/4
    nu: Optional[float] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one construction: model, sizes and spectral data.

    KPII: spectra has length K = (m+1)N, all parameters real.
    KPI:  spectra has length N (the conjugate partners are implied),
          sigma = +-i and epsilon = -1 for the nonsingular reduction.
    """

    model: str                       # "KPII" | "KPI"
    sigma: complex
    m: int
    N: int
    spectra: tuple[SpectralDatum, ...]
    epsilon: int = -1

    def __post_init__(self):
        if self.model not in ("KPII", "KPI"):
            raise ValueError(f"model must be KPII or KPI, got {self.model!r}")
        sigma = check_sigma(self.sigma)
        object.__setattr__(self, "sigma", sigma)
        if self.model == "KPII" and sigma.imag != 0:
            raise ValueError("KPII requires sigma = +-1")
        if self.model == "KPI" and sigma.real != 0:
            raise ValueError("KPI requires sigma = +-i")
        if self.epsilon not in (1, -1):
            raise ValueError("epsilon must be +-1")
        if self.m < 1 or self.N < 1:
            raise ValueError("m and N must be positive")
        expect = self.K if self.model == "KPII" else self.N
        if len(self.spectra) != expect:
            raise DimensionMismatch(
                f"{self.model} scenario needs {expect} spectral data, got {len(self.spectra)}")
        for d in self.spectra:
            if len(d.b) != self.m:
                raise DimensionMismatch(f"each spectral datum needs m={self.m} b-coefficients")
        lams = [d.lam for d in self.spectra]
        for i in range(len(lams)):
            for j in range(i + 1, len(lams)):
                if abs(lams[i] - lams[j]) < 1e-12:
                    raise DuplicateSpectralPoint(
                        f"spectral parameters {i + 1} and {j + 1} coincide: {lams[i]}")
        if self.model == "KPII":
            for k, d in enumerate(self.spectra):
                vals = (d.lam, d.a) + tuple(d.b)
                if any(abs(complex(v).imag) > 1e-12 for v in vals):
                    raise ValueError(f"KPII spectral datum {k + 1} must be real")

    @property
    def K(self) -> int:
        return (self.m + 1) * self.N

    @staticmethod
    def kpii(sigma: float, m: int, N: int,
             spectra: Sequence[SpectralDatum]) -> "ScenarioConfig":
        return ScenarioConfig("KPII", complex(sigma), m, N, tuple(spectra))

    @staticmethod
    def kpi(sigma: complex, m: int, N: int, spectra: Sequence[SpectralDatum],
            epsilon: int = -1) -> "ScenarioConfig":
        return ScenarioConfig("KPI", complex(sigma), m, N, tuple(spectra), epsilon)


@dataclass(frozen=True)
class DetRow:
    """One determinant row: spectral parameter and m+1 single-term components.

    Column-block entries are derived as comp0 * lam^n (first block) and
    -comp_j * (-lam)^n (block j >= 1), which matches the unreduced layout
    (F, -G1, ..., -Gm) directly.
    """

    lam: complex
    comps: tuple[tuple[complex, LinearPhase], ...]


def scenario_rows(cfg: ScenarioConfig) -> list[DetRow]:
    """Uniform row list for both models, ordered as the paper displays them."""
    rows = []
    for d in cfg.spectra:
        half = phase_of(d.lam, cfg.sigma).scaled(0.5)
        comps = [(complex(d.a), half)]
        comps += [(complex(bj), -half) for bj in d.b]
        rows.append(DetRow(complex(d.lam), tuple(comps)))
    if cfg.model == "KPII":
        return rows
    # KPI: append the conjugate partner rows, grouped by component index j.
    # Partner eigenvectors live at lam = -conj(lam_k); rows are rescaled by -1
    # so the assembled matrix reproduces the conjugate-block layout
    # [[F, eps*G], [conj(G), conj(F)]] that the reduced tau uses.
    eps = cfg.epsilon
    zero = (0j, ZERO_PHASE)
    for j in range(1, cfg.m + 1):
        for d in cfg.spectra:
            half = phase_of(d.lam, cfg.sigma).scaled(0.5)
            comps = [zero] * (cfg.m + 1)
            comps[0] = (-eps * np.conj(d.b[j - 1]), (-half).conjugate())
            comps[j] = (-np.conj(d.a), half.conjugate())
            rows.append(DetRow(-np.conj(complex(d.lam)), tuple(comps)))
    return rows


def block_widths(cfg: ScenarioConfig, family: int = 0, j: int = 0) -> tuple[int, ...]:
    """Column-block widths for tau (family 0) or chi^(family)_j (family 1 or 2)."""
    w = [cfg.N] * (cfg.m + 1)
    if family == 1:
        w[0] += 1
        w[j] -= 1
    elif family == 2:
        w[0] -= 1
        w[j] += 1
    elif family != 0:
        raise ValueError("family must be 0 (tau), 1 or 2")
    if family and not 1 <= j <= cfg.m:
        raise ValueError(f"component index j must be in 1..{cfg.m}")
    if any(width < 0 for width in w):
        raise DimensionMismatch(f"negative block width in {w} (N={cfg.N})")
    if sum(w) != cfg.K:
        raise DimensionMismatch(f"block widths {w} do not sum to K={cfg.K}")
    return tuple(w)


def _entry(row: DetRow, block: int, n: int) -> ExpSum:
    c, phase = row.comps[block]
    if block == 0:
        return ExpSum.single(c * row.lam ** n, phase)
    return ExpSum.single(-c * (-row.lam) ** n, phase)


@dataclass(frozen=True)
class BlockMatrix:
    """K x K matrix of single-term ExpSums with recorded column-block widths."""

    entries: tuple[tuple[ExpSum, ...], ...]
    widths: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.entries)

    def evaluate(self, point) -> np.ndarray:
        return np.array([[e.eval(point) for e in row] for row in self.entries],
                        dtype=complex)


def build_blocks(cfg: ScenarioConfig, family: int = 0, j: int = 0) -> BlockMatrix:
    """Assemble the block matrix [F, -G1, ..., -Gm] (widths per family)."""
    widths = block_widths(cfg, family, j)
    rows = scenario_rows(cfg)
    out = []
    for r in rows:
        row_entries = []
        for b, w in enumerate(widths):
            row_entries.extend(_entry(r, b, n) for n in range(w))
        out.append(tuple(row_entries))
    return BlockMatrix(tuple(out), widths)


def _row_partitions(indices: tuple[int, ...], widths: Sequence[int]):
    """Ordered partitions of row indices into groups of the given sizes."""
    if len(widths) == 1:
        yield (indices,)
        return
    w = widths[0]
    for combo in itertools.combinations(indices, w):
        chosen = set(combo)
        rest = tuple(i for i in indices if i not in chosen)
        for tail in _row_partitions(rest, widths[1:]):
            yield (combo,) + tail


def _laplace_sign(groups) -> int:
    seq = [r for g in groups for r in g]
    inv = 0
    for i in range(len(seq)):
        for k in range(i + 1, len(seq)):
            if seq[i] > seq[k]:
                inv += 1
    return -1 if inv % 2 else 1


def symbolic_det(rows: Sequence[DetRow], widths: Sequence[int],
                 cap: int = DEFAULT_SYMBOLIC_CAP) -> ExpSum:
    """Exact determinant of the block layout as a canonical ExpSum.

    Expands over ordered row partitions; each block contributes a
    Vandermonde factor in (+-lam), a product of component coefficients and
    the summed component phases, so every partition yields one term.
    """
    K = len(rows)
    if K > cap:
        raise SymbolicCapExceeded(f"K={K} exceeds symbolic cap {cap}")
    if sum(widths) != K:
        raise DimensionMismatch(f"block widths {tuple(widths)} do not sum to K={K}")
    terms = []
    for groups in _row_partitions(tuple(range(K)), widths):
        coeff = complex(_laplace_sign(groups))
        phase = ZERO_PHASE
        dead = False
        for b, group in enumerate(groups):
            s = 1.0 if b == 0 else -1.0
            if b != 0 and len(group) % 2:
                coeff = -coeff  # the -G column sign, once per column of the block
            for r in group:
                c, ph = rows[r].comps[b]
                if c == 0:
                    dead = True
                    break
                coeff *= c
                phase = phase + ph
            if dead:
                break
            lams = [s * rows[r].lam for r in group]
            for p in range(len(lams)):
                for q in range(p + 1, len(lams)):
                    coeff *= lams[q] - lams[p]
        if not dead and coeff != 0:
            terms.append((coeff, phase))
    return ExpSum(terms)


def tau_symbolic(cfg: ScenarioConfig, cap: int = DEFAULT_SYMBOLIC_CAP) -> ExpSum:
    """tau as an exact ExpSum."""
    return symbolic_det(scenario_rows(cfg), block_widths(cfg), cap)


def chi_symbolic(cfg: ScenarioConfig, family: int, j: int,
                 cap: int = DEFAULT_SYMBOLIC_CAP) -> ExpSum:
    """chi^(1)_j (F widened, G_j narrowed) or chi^(2)_j (mirrored) as an ExpSum."""
    if family not in (1, 2):
        raise ValueError("family must be 1 or 2")
    return symbolic_det(scenario_rows(cfg), block_widths(cfg, family, j), cap)


@dataclass(frozen=True)
class NumericDet:
    """Pointwise determinant in overflow-safe form: value = unit * exp(log_magnitude)."""

    value: complex
    log_magnitude: float
    unit: complex


def _numeric_matrix(rows: Sequence[DetRow], widths: Sequence[int], point):
    """Row-scaled complex matrix at a point; returns (matrix, per-row log-scales)."""
    x, y, t = point
    K = len(rows)
    mat = np.zeros((K, K), dtype=complex)
    row_scales = np.zeros(K)
    for r_idx, r in enumerate(rows):
        phases = [ph(x, y, t) if c != 0 else None for c, ph in r.comps]
        scale = max((p.real for p in phases if p is not None), default=0.0)
        row_scales[r_idx] = scale
        col = 0
        for b, w in enumerate(widths):
            c, _ = r.comps[b]
            if c != 0:
                base = c * np.exp(phases[b] - scale)
                s = r.lam if b == 0 else -r.lam
                sign = 1.0 if b == 0 else -1.0
                for n in range(w):
                    mat[r_idx, col + n] = sign * base * s ** n
            col += w
    return mat, row_scales


def tau_numeric(cfg: ScenarioConfig, point) -> NumericDet:
    """LU determinant of the entry-evaluated block matrix with row scaling."""
    rows = scenario_rows(cfg)
    mat, row_scales = _numeric_matrix(rows, block_widths(cfg), point)
    log_rows = float(np.sum(row_scales))
    sign, logabs = np.linalg.slogdet(mat)
    if sign == 0:
        return NumericDet(0j, -np.inf, 1 + 0j)
    log_mag = float(logabs + log_rows)
    with np.errstate(over="ignore"):
        value = complex(sign * np.exp(log_mag))
    return NumericDet(value, log_mag, complex(sign))


def tau_numeric_x_derivative(cfg: ScenarioConfig, point, order: int = 1) -> NumericDet:
    """d^order/dx^order of tau, by Leibniz differentiation of determinant rows.

    Differentiating row r in x multiplies its block-b entries by the
    x-rate of that component's phase, so each assignment of derivative
    counts to rows contributes one rescaled determinant.
    """
    rows = scenario_rows(cfg)
    widths = block_widths(cfg)
    base, row_scales = _numeric_matrix(rows, widths, point)
    log_rows = float(np.sum(row_scales))
    K = len(rows)
    rates = np.zeros((K, K), dtype=complex)
    for r_idx, r in enumerate(rows):
        col = 0
        for b, w in enumerate(widths):
            rates[r_idx, col:col + w] = r.comps[b][1].cx
            col += w

    total = 0j
    log_ref = None
    for combo in itertools.combinations_with_replacement(range(K), order):
        counts = np.zeros(K, dtype=int)
        for r in combo:
            counts[r] += 1
        mult = factorial(order)
        for c in counts:
            mult //= factorial(int(c))
        mat = base * rates ** counts[:, None]
        sign, logabs = np.linalg.slogdet(mat)
        if sign == 0:
            continue
        if log_ref is None:
            log_ref = logabs
        total += mult * sign * np.exp(logabs - log_ref)
    if log_ref is None or total == 0:
        return NumericDet(0j, -np.inf, 1 + 0j)
    log_mag = float(log_ref + log_rows + np.log(abs(total)))
    unit = complex(total / abs(total))
    with np.errstate(over="ignore"):
        value = complex(unit * np.exp(log_mag))
    return NumericDet(value, log_mag, unit)


def coefficient_warnings(cfg: ScenarioConfig) -> list[str]:
    """Non-fatal checks of the nonsingularity conditions for m=1 KPII data.

    Condition (iii) (adjacent sign rule a_k a_{k+1} b_k b_{k+1} <= 0) is
    sufficient, not necessary, so violations warn rather than fail.
    """
    warnings = []
    if cfg.model != "KPII" or cfg.m != 1:
        return warnings
    if cfg.K % 2:
        return warnings
    a = [complex(d.a).real for d in cfg.spectra]
    b = [complex(d.b[0]).real for d in cfg.spectra]
    twoN = cfg.K
    N = twoN // 2
    for k in range(twoN):
        if a[k] == 0 and b[k] == 0:
            warnings.append(f"condition (i): a_{k + 1} and b_{k + 1} both vanish")
    L = sum(1 for v in a if v != 0) - N
    M = sum(1 for v in b if v != 0) - N
    if not 1 <= L <= N:
        warnings.append(f"condition (ii): L = {L} outside 1..{N}")
    if not 1 <= M <= N:
        warnings.append(f"condition (ii): M = {M} outside 1..{N}")
    for k in range(twoN - 1):
        if a[k] * a[k + 1] * b[k] * b[k + 1] > 0:
            warnings.append(
                f"condition (iii): a_k a_k+1 b_k b_k+1 > 0 at k = {k + 1}")
    return warnings
