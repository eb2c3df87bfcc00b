"""Command-line interface: scenario files, verification, grids, figure presets.

Scenario files are JSON with exactly one of three payloads: explicit
spectra, KPI (mu, nu, b) data, or a fully-resonant (L, M, kappa, b')
record.  Grids are written as plain CSV so any plotting tool can consume
them.  Exit codes: 0 all checks pass, 1 a numeric tolerance failed,
2 configuration or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import darboux, kpfield
from .asymptotics import (AsymptoticSoliton, KpiSpectralDatum, PeakNotIsolated,
                          ResonantParams, kpi_scenario, measure_far_field,
                          predict_kpi_asymptotics, predict_kpii_asymptotics,
                          resonant_tau)
from .darboux import (PotentialField, adjoint_root_residuals, det_T_residual,
                      kernel_residual, new_potentials, probe_points, solve_coeffs,
                      verify_intertwining)
from .expsum import ExpSum
from .kpfield import GridSpec, grid_sample, kp_residual_grid, u_derivatives
from .wronskian import (ScenarioConfig, SpectralDatum, chi_symbolic,
                        coefficient_warnings, tau_numeric, tau_symbolic)

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2


class ScenarioFileError(ValueError):
    """Malformed or inconsistent scenario document."""


# -- scenario files -------------------------------------------------------------

def _complex_of(v, where: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ScenarioFileError(f"{where}: expected number or [re, im], got {v!r}")


def _sigma_of(v) -> complex:
    table = {1: 1.0, -1: -1.0, "1": 1.0, "-1": -1.0, "i": 1j, "-i": -1j}
    if isinstance(v, (int, float)) and v in (1, -1):
        return complex(v)
    if isinstance(v, str) and v in table:
        return complex(table[v])
    raise ScenarioFileError(f'sigma must be 1, -1, "i" or "-i", got {v!r}')


@dataclass(frozen=True)
class Scenario:
    """A loaded scenario: spectral configuration and/or resonant data."""

    name: str
    model: str
    sigma: complex
    cfg: Optional[ScenarioConfig] = None
    resonant: Optional[ResonantParams] = None
    kpi_spectra: Optional[tuple[KpiSpectralDatum, ...]] = None

    @property
    def sigma_sq(self) -> float:
        return 1.0 if self.model == "KPII" else -1.0

    @property
    def kind(self) -> str:
        if self.resonant is not None:
            return "resonant"
        return "kpi" if self.kpi_spectra is not None else "spectra"

    def tau(self) -> ExpSum:
        if self.resonant is not None:
            return resonant_tau(self.resonant)
        return tau_symbolic(self.cfg)

    def warnings(self) -> list[str]:
        out = []
        if self.resonant is not None:
            out.extend(self.resonant.warnings)
        if self.cfg is not None:
            out.extend(coefficient_warnings(self.cfg))
        return out


def parse_scenario(doc: dict, name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioFileError("scenario document must be a JSON object")
    model = doc.get("model")
    if model not in ("KPII", "KPI"):
        raise ScenarioFileError(f'model must be "KPII" or "KPI", got {model!r}')
    sigma = _sigma_of(doc.get("sigma", 1 if model == "KPII" else "i"))
    payloads = [k for k in ("spectra", "kpi_spectra", "resonant") if k in doc]
    if len(payloads) != 1:
        raise ScenarioFileError(
            f"exactly one of spectra/kpi_spectra/resonant required, got {payloads}")
    kind = payloads[0]

    if kind == "resonant":
        if model != "KPII":
            raise ScenarioFileError("resonant scenarios are KPII objects")
        r = doc["resonant"]
        params = ResonantParams(L=int(r["L"]), M=int(r["M"]),
                                kappa=tuple(r["kappa"]), bprime=tuple(r["bprime"]),
                                sigma=float(sigma.real))
        return Scenario(name, model, sigma, resonant=params)

    if kind == "kpi_spectra":
        if model != "KPI":
            raise ScenarioFileError("kpi_spectra requires model KPI")
        eps = int(doc.get("epsilon", -1))
        data = tuple(KpiSpectralDatum(mu=float(d["mu"]), nu=float(d["nu"]),
                                      b=_complex_of(d.get("b", 1.0), "b"))
                     for d in doc["kpi_spectra"])
        cfg = kpi_scenario(data, sigma, eps)
        return Scenario(name, model, sigma, cfg=cfg, kpi_spectra=data)

    m = int(doc.get("m", 1))
    N = int(doc.get("N", 1))
    spectra = []
    for k, d in enumerate(doc["spectra"]):
        lam = _complex_of(d["lambda"], f"spectra[{k}].lambda")
        a = _complex_of(d["a"], f"spectra[{k}].a")
        b = tuple(_complex_of(v, f"spectra[{k}].b") for v in d["b"])
        spectra.append(SpectralDatum(lam=lam, a=a, b=b))
    if model == "KPII":
        cfg = ScenarioConfig.kpii(float(sigma.real), m, N, spectra)
    else:
        cfg = ScenarioConfig.kpi(sigma, m, N, spectra, int(doc.get("epsilon", -1)))
    return Scenario(name, model, sigma, cfg=cfg)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ScenarioFileError(f"cannot read scenario file {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"invalid JSON in {p}: {exc}") from exc
    return parse_scenario(doc, name=p.stem)


# -- figure presets --------------------------------------------------------------

FIGURE_PRESETS: dict[int, dict] = {
    # Fully-resonant (3,2)- and (2,3)-soliton configurations.
    1: {"model": "KPII", "sigma": 1,
        "resonant": {"L": 3, "M": 2,
                     "kappa": [-0.8, -0.35, 0.25, 0.65, 1.25],
                     "bprime": [1, 1, 1, 1, 1]}},
    2: {"model": "KPII", "sigma": -1,
        "resonant": {"L": 3, "M": 2,
                     "kappa": [-0.8, -0.35, 0.25, 0.65, 1.25],
                     "bprime": [1, 1, 1, 1, 1]}},
    # One-soliton, oblique two-soliton, and the parallel/bound-state pair.
    3: {"model": "KPI", "sigma": "i", "epsilon": -1,
        "kpi_spectra": [{"mu": 1.0, "nu": 2.0, "b": 1.0}]},
    4: {"model": "KPI", "sigma": "i", "epsilon": -1,
        "kpi_spectra": [{"mu": 1.0, "nu": -1.6, "b": 1.0},
                        {"mu": 1.0, "nu": 2.0, "b": 1.0}]},
    5: {"model": "KPI", "sigma": "i", "epsilon": -1,
        "kpi_spectra": [{"mu": 1.0, "nu": 0.8, "b": 1.0},
                        {"mu": 1.5, "nu": 0.8, "b": 1.0}]},
    6: {"model": "KPI", "sigma": "i", "epsilon": -1,
        "kpi_spectra": [{"mu": 1.0, "nu": 0.8, "b": 1.0},
                        {"mu": 1.5, "nu": 0.8, "b": 1.0}]},
}

# Default grid windows per figure: (x-range, y-range, t values).
FIGURE_GRIDS: dict[int, tuple] = {
    1: ((-30.0, 30.0), (-30.0, 30.0), (0.0,)),
    2: ((-30.0, 30.0), (-30.0, 30.0), (0.0,)),
    3: ((-15.0, 15.0), (-15.0, 15.0), (0.0,)),
    4: ((-15.0, 15.0), (-15.0, 15.0), (0.0,)),
    5: ((-20.0, 20.0), (-20.0, 20.0), (-10.0, 10.0)),
    6: ((-20.0, 20.0), (-20.0, 20.0), (0.0,)),
}


def figure_scenario(n: int) -> Scenario:
    if n not in FIGURE_PRESETS:
        raise ScenarioFileError(f"figure preset must be 1..6, got {n}")
    return parse_scenario(FIGURE_PRESETS[n], name=f"figure{n}")


# -- verification runner ----------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.value <= self.tolerance


VERIFY_GRID = GridSpec(-15.0, 15.0, 21, -15.0, 15.0, 21, (-5.0, 0.0, 5.0))


def _engine_cross_check(cfg: ScenarioConfig, points) -> float:
    """Symbolic vs LU tau, allowing one global scalar fixed at the first point."""
    tau = tau_symbolic(cfg)
    ratio0 = None
    worst = 0.0
    for pt in points:
        log_s, unit_s = tau.eval_log(pt)
        num = tau_numeric(cfg, pt)
        ratio = np.exp(log_s - num.log_magnitude) * unit_s / num.unit
        if ratio0 is None:
            ratio0 = ratio
        worst = max(worst, abs(ratio / ratio0 - 1.0))
    return worst


def _identity_residual(cfg: ScenarioConfig) -> float:
    tau = tau_symbolic(cfg)
    tau_x = tau.derivative((1, 0, 0))
    rhs = 0.25 * (tau * tau.derivative((2, 0, 0)) - tau_x * tau_x)
    lhs = ExpSum.zero()
    for j in range(1, cfg.m + 1):
        lhs = lhs + chi_symbolic(cfg, 1, j) * chi_symbolic(cfg, 2, j)
    scale = max(lhs.max_coeff(), rhs.max_coeff(), 1e-300)
    return (lhs - rhs).max_coeff() / scale


def _cramer_cross_check(cfg: ScenarioConfig, field: PotentialField, points) -> float:
    """beta/gamma top coefficients from the solve vs the Wronskian ratios."""
    worst = 0.0
    for pt in points:
        coeffs = solve_coeffs(cfg, pt)
        p_new, q_new = new_potentials(coeffs)
        p_ref, q_ref = field.values(pt)
        scale = max(np.max(np.abs(p_ref)), np.max(np.abs(q_ref)), 1e-30)
        worst = max(worst,
                    float(np.max(np.abs(p_new - p_ref))) / scale,
                    float(np.max(np.abs(q_new - q_ref))) / scale)
    return worst


def _u_consistency(field: PotentialField, tau: ExpSum, points) -> float:
    worst = 0.0
    for pt in points:
        u_pot = kpfield.u_from_potentials(field, pt)
        vals, _ = u_derivatives(tau, *pt)
        u_tau = complex(vals[kpfield.MultiIndex(0, 0, 0)])
        worst = max(worst, abs(u_pot - u_tau) / max(abs(u_tau), 1e-12))
    return worst


def _kpi_realness(cfg: ScenarioConfig, points) -> tuple[float, float]:
    tau = tau_symbolic(cfg)
    worst_tau, worst_u = 0.0, 0.0
    for pt in points:
        v = tau.eval(pt)
        worst_tau = max(worst_tau, abs(v.imag) / max(abs(v), 1e-300))
        vals, _ = u_derivatives(tau, *pt)
        u = complex(vals[kpfield.MultiIndex(0, 0, 0)])
        worst_u = max(worst_u, abs(u.imag))
    return worst_tau, worst_u


def run_verification(scenario: Scenario, deep_points: int = 3) -> tuple[list[Check], list[str]]:
    """All applicable residual checks for the scenario, plus warnings."""
    checks: list[Check] = []
    warnings = scenario.warnings()
    pts = probe_points()
    tau = scenario.tau()

    if scenario.cfg is not None:
        cfg = scenario.cfg
        checks.append(Check("engine cross-check", _engine_cross_check(cfg, pts), 1e-9))
        checks.append(Check("wronskian identity", _identity_residual(cfg), 1e-10))
        field = PotentialField.from_scenario(cfg)
        deep = pts[:deep_points]
        checks.append(Check("det T product", max(det_T_residual(cfg, p) for p in deep), 1e-9))
        checks.append(Check("kernel T(lam_k)Phi_k", max(kernel_residual(cfg, p) for p in deep), 1e-9))
        checks.append(Check("intertwining (x,y,t)",
                            max(verify_intertwining(cfg, p, field=field).max_residual
                                for p in deep), 1e-6))
        checks.append(Check("adjoint roots",
                            max(max(adjoint_root_residuals(cfg, p).values()) for p in deep),
                            1e-6))
        checks.append(Check("cramer cross-check", _cramer_cross_check(cfg, field, pts), 1e-9))
        checks.append(Check("AKNS residuals",
                            kpfield.akns_residuals(field, cfg.sigma, pts).max_residual, 1e-7))
        checks.append(Check("u potentials vs tau", _u_consistency(field, tau, pts), 1e-9))
        if scenario.model == "KPI":
            rt, ru = _kpi_realness(cfg, pts)
            checks.append(Check("tau realness", rt, 1e-10))
            checks.append(Check("u realness", ru, 1e-9))

    worst_kp, n_sing = kp_residual_grid(tau, scenario.sigma_sq,
                                        VERIFY_GRID.xs, VERIFY_GRID.ys,
                                        VERIFY_GRID.t_values)
    checks.append(Check("KP residual (grid)", worst_kp, 1e-7))
    if n_sing:
        warnings.append(f"{n_sing} singular grid points excluded from the KP residual")
    return checks, warnings


def print_verification(checks: Sequence[Check], warnings: Sequence[str],
                       out=sys.stdout) -> int:
    width = max(len(c.name) for c in checks) + 2
    out.write(f"{'check':<{width}}{'max residual':>14}  {'tolerance':>10}  status\n")
    for c in checks:
        status = "pass" if c.ok else "FAIL"
        out.write(f"{c.name:<{width}}{c.value:>14.3e}  {c.tolerance:>10.0e}  {status}\n")
    for w in warnings:
        out.write(f"warning: {w}\n")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_TOLERANCE


# -- commands ---------------------------------------------------------------------

def _parse_range(spec: str, what: str):
    try:
        a, b, n = spec.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise ScenarioFileError(f"--{what} must be min:max:count, got {spec!r}") from exc
    if n < 2 or not np.isfinite(a) or not np.isfinite(b) or b <= a:
        raise ScenarioFileError(f"--{what}: bad range {spec!r}")
    return a, b, n


def write_grid_csv(tau: ExpSum, grid: GridSpec, path) -> kpfield.GridResult:
    """Deterministic CSV: header x,y,t,u; rows ordered t, then y, then x."""
    result = grid_sample(tau, grid)
    xs, ys = grid.xs, grid.ys
    with open(path, "w") as fh:
        fh.write("x,y,t,u\n")
        for it, tv in enumerate(grid.t_values):
            for iy in range(grid.ny):
                for ix in range(grid.nx):
                    u = result.u[it, iy, ix]
                    u_str = "nan" if not np.isfinite(u) else f"{u:.9g}"
                    fh.write(f"{xs[ix]:.9g},{ys[iy]:.9g},{tv:.9g},{u_str}\n")
    return result


def cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    checks, warnings = run_verification(scenario)
    return print_verification(checks, warnings)


def cmd_grid(args) -> int:
    scenario = load_scenario(args.scenario)
    x0, x1, nx = _parse_range(args.x, "x")
    y0, y1, ny = _parse_range(args.y, "y")
    ts = tuple(float(v) for v in args.t.split(","))
    grid = GridSpec(x0, x1, nx, y0, y1, ny, ts)
    result = write_grid_csv(scenario.tau(), grid, args.out)
    print(f"wrote {args.out}: u in [{result.u_min:.9g}, {result.u_max:.9g}]")
    n_sing = int(np.sum(result.singular))
    if n_sing:
        print(f"warning: {n_sing} singular samples written as nan")
    return EXIT_OK


def predict_scenario_asymptotics(scenario: Scenario) -> list[AsymptoticSoliton]:
    if scenario.resonant is not None:
        return predict_kpii_asymptotics(scenario.resonant)
    if scenario.kpi_spectra is not None:
        return predict_kpi_asymptotics(scenario.kpi_spectra, scenario.sigma,
                                       scenario.cfg.epsilon)
    raise ScenarioFileError(
        "asymptotics needs a resonant or kpi_spectra scenario")


def cmd_asymptotics(args) -> int:
    scenario = load_scenario(args.scenario)
    solitons = predict_scenario_asymptotics(scenario)
    tau = scenario.tau()
    failed = False
    for side in (+1, -1):
        group = [s for s in solitons if s.side == side]
        print(f"{'y -> +inf' if side > 0 else 'y -> -inf'}: {len(group)} soliton(s)")
        for s in group:
            line = (f"  [{s.pair[0]},{s.pair[1]}]  A={s.amplitude:.6g}  "
                    f"K=({s.wavevector[0]:.6g},{s.wavevector[1]:.6g})  "
                    f"Omega={s.frequency:.6g}  offset={s.phase_offset:.6g}")
            if args.measure:
                try:
                    meas = measure_far_field(tau, s, y_probe=side * args.y_probe)
                    dev = abs(meas.amplitude - s.amplitude) / s.amplitude
                    line += f"  measured A={meas.amplitude:.6g} (dev {dev:.2%})"
                    if dev > 0.01:
                        failed = True
                except PeakNotIsolated as exc:
                    line += f"  [not isolated: {exc}]"
                    failed = True
            print(line)
    return EXIT_TOLERANCE if failed else EXIT_OK


def cmd_figure(args) -> int:
    n = args.n
    scenario = figure_scenario(n)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (xr, yr, ts) = FIGURE_GRIDS[n]
    grid = GridSpec(xr[0], xr[1], args.resolution, yr[0], yr[1], args.resolution, ts)
    csv_path = outdir / f"figure{n}.csv"
    result = write_grid_csv(scenario.tau(), grid, csv_path)
    print(f"figure {n}: wrote {csv_path}; u in [{result.u_min:.9g}, {result.u_max:.9g}]")
    checks, warnings = run_verification(scenario)
    return print_verification(checks, warnings)


def _expand_lines(tau: ExpSum):
    yield "coeff_re,coeff_im,cx_re,cx_im,cy_re,cy_im,ct_re,ct_im,c0_re,c0_im\n"
    for c, p in tau.terms:
        vals = (c.real, c.imag, p.cx.real, p.cx.imag, p.cy.real, p.cy.imag,
                p.ct.real, p.ct.imag, p.c0.real, p.c0.imag)
        yield ",".join(f"{v:.9g}" for v in vals) + "\n"


def cmd_expand(args) -> int:
    scenario = load_scenario(args.scenario)
    tau = scenario.tau()
    if args.out:
        with open(args.out, "w") as fh:
            fh.writelines(_expand_lines(tau))
    else:
        sys.stdout.writelines(_expand_lines(tau))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wronskp",
                                 description="Multi-component Wronskian KP soliton toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run every residual and identity check")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("grid", help="sample u over a grid and write CSV")
    g.add_argument("scenario")
    g.add_argument("--x", default="-15:15:41")
    g.add_argument("--y", default="-15:15:41")
    g.add_argument("--t", default="0")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_grid)

    a = sub.add_parser("asymptotics", help="predicted (and measured) line solitons")
    a.add_argument("scenario")
    a.add_argument("--measure", action="store_true")
    a.add_argument("--y-probe", type=float, default=30.0)
    a.set_defaults(func=cmd_asymptotics)

    f = sub.add_parser("figure", help="reproduce a published figure preset")
    f.add_argument("n", type=int)
    f.add_argument("--out", default="figures")
    f.add_argument("--resolution", type=int, default=121)
    f.set_defaults(func=cmd_figure)

    e = sub.add_parser("expand", help="dump tau as a CSV term list")
    e.add_argument("scenario")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_expand)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
