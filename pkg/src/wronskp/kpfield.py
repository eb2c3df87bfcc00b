"""The field u = 2 (ln tau)_xx, its derivatives, and the PDE residuals.

u and its mixed derivatives are produced analytically through the quotient
engine applied to f = tau_x / tau (so u^(a) = 2 f^(a + x)), which keeps the
recursion depth minimal for the fourth-x-order terms in the dispersive
residual.  Everything is vectorized over point arrays; grids are sampled
row by row with deterministic ordering.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .expsum import ExpSum, MultiIndex, quotient_derivs
from .darboux import PotentialField


class TauZero(ArithmeticError):
    """tau vanishes (numerically) at a requested sample point."""


# Points closer than this (relative to the largest tau term) count as zeros.
TAU_ZERO_REL = 1e-8


def _f_targets(u_orders: Iterable[MultiIndex]):
    """u^(a) = 2 f^(a+x) with f = tau_x/tau; shift every requested order."""
    return [MultiIndex(a.ox + 1, a.oy, a.ot) for a in u_orders]


def u_derivatives(tau: ExpSum, x, y, t, orders: Sequence = ((0, 0, 0),)):
    """Arrays of u^(a) for each requested order a, plus a singular-point mask."""
    u_orders = [MultiIndex.of(a) for a in orders]
    tau_x = tau.derivative((1, 0, 0))
    h, singular, log_off = quotient_derivs(tau_x, tau, _f_targets(u_orders),
                                           x, y, t, min_rel_den=TAU_ZERO_REL)
    scale = np.exp(log_off)  # <= 1: tau_x phases are a subset of tau's
    out = {}
    for a in u_orders:
        fa = MultiIndex(a.ox + 1, a.oy, a.ot)
        out[a] = 2.0 * h[fa] * scale
    return out, singular


KP_ORDERS = (MultiIndex(0, 0, 0), MultiIndex(1, 0, 0), MultiIndex(2, 0, 0),
             MultiIndex(4, 0, 0), MultiIndex(1, 0, 1), MultiIndex(0, 2, 0))


def kp_residual_terms(tau: ExpSum, sigma_sq: float, x, y, t):
    """The five residual pieces -4u_tx, 6u_x^2, 6uu_xx, u_xxxx, 3s^2 u_yy."""
    d, singular = u_derivatives(tau, x, y, t, KP_ORDERS)
    u = d[MultiIndex(0, 0, 0)]
    terms = (
        -4.0 * d[MultiIndex(1, 0, 1)],
        6.0 * d[MultiIndex(1, 0, 0)] ** 2,
        6.0 * u * d[MultiIndex(2, 0, 0)],
        d[MultiIndex(4, 0, 0)],
        3.0 * sigma_sq * d[MultiIndex(0, 2, 0)],
    )
    return terms, singular


@dataclass(frozen=True)
class KpResidual:
    absolute: float
    relative: float


def kp_residual(tau: ExpSum, sigma_sq: float, point) -> KpResidual:
    """Dispersive-equation residual at one point, absolute and relative.

    The relative form is normalized by the largest individual term
    magnitude, so flat regions (u ~ 0) report zero instead of 0/0.
    """
    x, y, t = point
    terms, singular = kp_residual_terms(tau, sigma_sq, x, y, t)
    if bool(singular):
        raise TauZero(f"tau vanishes at {point}")
    total = sum(terms)
    scale = max(abs(complex(term)) for term in terms)
    rel = abs(complex(total)) / scale if scale > 1e-30 else 0.0
    return KpResidual(abs(complex(total)), float(rel))


def kp_residual_grid(tau: ExpSum, sigma_sq: float, xs, ys, ts):
    """Max relative residual over a full x-y-t grid; returns (max, n_singular)."""
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float))
    worst = 0.0
    n_singular = 0
    for tv in ts:
        T = np.full_like(X, float(tv))
        terms, singular = kp_residual_terms(tau, sigma_sq, X, Y, T)
        total = sum(terms)
        scale = np.max(np.abs(np.stack(terms)), axis=0)
        ok = ~singular & (scale > 1e-30)
        rel = np.zeros_like(scale)
        rel[ok] = np.abs(total[ok]) / scale[ok]
        worst = max(worst, float(np.max(rel)) if rel.size else 0.0)
        n_singular += int(np.sum(singular))
    return worst, n_singular


@dataclass(frozen=True)
class FieldSample:
    """u and requested derivatives at one point, with the local KP residual."""

    point: tuple[float, float, float]
    u: float
    derivs: dict
    kp_residual: Optional[float] = None
    akns_residuals: Optional[dict] = None


def u_from_tau(tau: ExpSum, point, derivs: Sequence = (),
               sigma_sq: Optional[float] = None) -> FieldSample:
    """Field sample at one point; TauZero if tau vanishes there."""
    x, y, t = point
    orders = [MultiIndex(0, 0, 0)] + [MultiIndex.of(a) for a in derivs]
    vals, singular = u_derivatives(tau, x, y, t, orders)
    if bool(singular):
        raise TauZero(f"tau vanishes at {point}")
    u = float(np.real(complex(vals[MultiIndex(0, 0, 0)])))
    out = {a: float(np.real(complex(vals[a]))) for a in orders[1:]}
    res = kp_residual(tau, sigma_sq, point).relative if sigma_sq is not None else None
    return FieldSample(tuple(map(float, point)), u, out, res)


def u_from_potentials(pf: PotentialField, point) -> complex:
    """u = -2 sum_j p_j q_j from the transformed potentials."""
    p, q = pf.values(point)
    return complex(-2.0 * np.sum(p * q))


@dataclass(frozen=True)
class AknsResiduals:
    """Max residual magnitude per equation family of the two coupled systems."""

    second_p: float
    second_q: float
    third_p: float
    third_q: float

    @property
    def max_residual(self) -> float:
        return max(self.second_p, self.second_q, self.third_p, self.third_q)


_AKNS_TARGETS = [MultiIndex(3, 0, 0), MultiIndex(0, 1, 0), MultiIndex(0, 0, 1)]


def akns_residuals(pf: PotentialField, sigma: complex, points) -> AknsResiduals:
    """Residuals of both coupled systems for p', q' at the given point(s)."""
    pts = np.asarray(points, float).reshape(-1, 3)
    x, y, t = pts[:, 0], pts[:, 1], pts[:, 2]

    def ratio_derivs(num):
        h, singular, log_off = quotient_derivs(num, pf.den, _AKNS_TARGETS, x, y, t,
                                               min_rel_den=TAU_ZERO_REL)
        if np.any(singular):
            raise TauZero("tau vanishes at an AKNS probe point")
        s = np.exp(log_off)
        return {a: h[a] * s for a in h}

    P = [ratio_derivs(num) for num in pf.p_num]
    Q = [ratio_derivs(num) for num in pf.q_num]
    o = MultiIndex
    S = sum(P[n][o(0, 0, 0)] * Q[n][o(0, 0, 0)] for n in range(pf.m))
    S_px = sum(P[n][o(1, 0, 0)] * Q[n][o(0, 0, 0)] for n in range(pf.m))
    S_qx = sum(Q[n][o(1, 0, 0)] * P[n][o(0, 0, 0)] for n in range(pf.m))

    r = [0.0, 0.0, 0.0, 0.0]
    for j in range(pf.m):
        pj, qj = P[j], Q[j]
        g1 = pj[o(0, 1, 0)] + (pj[o(2, 0, 0)] - 2.0 * S * pj[o(0, 0, 0)]) / sigma
        g2 = qj[o(0, 1, 0)] - (qj[o(2, 0, 0)] - 2.0 * S * qj[o(0, 0, 0)]) / sigma
        g3 = (pj[o(0, 0, 1)] - pj[o(3, 0, 0)]
              + 3.0 * S * pj[o(1, 0, 0)] + 3.0 * S_px * pj[o(0, 0, 0)])
        g4 = (qj[o(0, 0, 1)] - qj[o(3, 0, 0)]
              + 3.0 * S * qj[o(1, 0, 0)] + 3.0 * S_qx * qj[o(0, 0, 0)])
        for i, g in enumerate((g1, g2, g3, g4)):
            r[i] = max(r[i], float(np.max(np.abs(g))))
    return AknsResiduals(*r)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular sampling grid: x, y ranges with counts, plus t values."""

    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int
    t_values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("nx and ny must be at least 2")
        for v in (self.x_min, self.x_max, self.y_min, self.y_max) + tuple(self.t_values):
            if not np.isfinite(v):
                raise ValueError("grid ranges must be finite")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)


@dataclass(frozen=True)
class GridResult:
    """u on the grid: u[it, iy, ix]; singular samples are nan + masked."""

    spec: GridSpec
    u: np.ndarray
    singular: np.ndarray

    @property
    def u_max(self) -> float:
        good = self.u[~self.singular]
        return float(np.max(good)) if good.size else float("nan")

    @property
    def u_min(self) -> float:
        good = self.u[~self.singular]
        return float(np.min(good)) if good.size else float("nan")


def thread_count() -> int:
    """Parallelism cap from WRONSKP_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("WRONSKP_THREADS", "1")))
    except ValueError:
        return 1


def grid_sample(tau: ExpSum, grid: GridSpec, n_threads: Optional[int] = None) -> GridResult:
    """Sample u over the grid; per-point tau zeros are recorded, not fatal."""
    n_threads = n_threads or thread_count()
    xs, ys = grid.xs, grid.ys
    X, Y = np.meshgrid(xs, ys)
    u = np.empty((len(grid.t_values), grid.ny, grid.nx))
    singular = np.zeros_like(u, dtype=bool)

    def one_slice(args):
        it, tv, rows = args
        vals, sing = u_derivatives(tau, X[rows], Y[rows], np.full_like(X[rows], tv))
        return it, rows, np.real(vals[MultiIndex(0, 0, 0)]), sing

    jobs = []
    for it, tv in enumerate(grid.t_values):
        chunks = np.array_split(np.arange(grid.ny), min(n_threads, grid.ny))
        jobs.extend((it, float(tv), rows) for rows in chunks if rows.size)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one_slice, jobs))
    else:
        results = [one_slice(j) for j in jobs]
    for it, rows, vals, sing in results:
        u[it][rows] = np.where(sing, np.nan, vals)
        singular[it][rows] = sing
    return GridResult(grid, u, singular)
