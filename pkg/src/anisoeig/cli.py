"""Command-line harness: eps sweeps, limit predictions, HJ checks and QSD runs.

Every subcommand reads a scenario file (``--config``), writes CSV tables and
a ``summary.txt`` into the output directory, and exits with

* 0 when every gate passes,
* 1 when a gate fails,
* 2 on a usage or configuration error,
* 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import hj, qsd, spectrum
from .config import ScenarioConfig, load_config
from .eig import EigenPair, principal_eigenpair
from .errors import AnisoError, ConfigError, NumericalError
from .operator import assemble_global

__all__ = [
    "Gate",
    "SweepRow",
    "SweepReport",
    "QsdReport",
    "HjReport",
    "richardson",
    "richardson_fitted_p",
    "run_eig",
    "run_sweep",
    "run_limit",
    "run_hj_check",
    "run_qsd",
    "continuity_gap",
    "main",
    "SWEEP_HEADER",
    "QSD_HEADER",
]

logger = logging.getLogger("anisoeig")

SWEEP_HEADER = "eps,k_eps,sup_tv,iters,residual"
EIG_HEADER = "eps,k_eps,iters,residual,min_phi"
QSD_HEADER = "t,survivors,tv_vs_phi"
SPECTRUM_HEADER = "y,k_y"
HJ_HEADER = "y,u,residual"

K_BOUND_SLACK = 1e-9
EXACT_TOL = 1e-10  # below this a diagnostic counts as exact and "strictly decreasing" is moot
SHRINK_FACTOR = 3.0
SHRINK_FLOOR = 1e-12  # defects already at roundoff are not required to shrink further

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Gate:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"gate.{self.name} = {status}" + (f"  # {self.detail}" if self.detail else "")


def _decreasing_gate(name: str, values: Sequence[float]) -> Gate:
    """Strictly decreasing, except that values at roundoff level may tie."""
    ok = all(b < a or b <= EXACT_TOL for a, b in zip(values, values[1:]))
    return Gate(name, ok, "values " + ", ".join(f"{v:.6g}" for v in values))


# ------------------------------------------------------------ extrapolation


def richardson(eps: Sequence[float], k: Sequence[float]) -> float:
    """``k0`` of the polynomial ``k0 + alpha eps + beta eps^2`` through the last three points.

    Two points give the linear fit and one point returns it unchanged.
    """
    e = np.asarray(eps[-3:], dtype=float)
    v = np.asarray(k[-3:], dtype=float)
    V = np.vander(e, len(e), increasing=True)
    return float(np.linalg.solve(V, v)[0])


def richardson_fitted_p(eps: Sequence[float], k: Sequence[float],
                        p_range: tuple[float, float] = (0.5, 2.0)) -> tuple[float, float]:
    """``(k0, p)`` of ``k0 + alpha eps^p`` through the last three points, ``p`` clamped.

    Reported next to :func:`richardson` as a diagnostic.
    """
    if len(k) < 3:
        return float(k[-1]), float("nan")
    (e1, e2, e3), (k1, k2, k3) = eps[-3:], k[-3:]
    d12, d23 = k1 - k2, k2 - k3
    if d23 == 0 or d12 == 0 or (d12 > 0) != (d23 > 0):
        return float(k3), float("nan")
    ratio = d12 / d23
    lo, hi = p_range

    def g(p):
        return (e1**p - e2**p) / (e2**p - e3**p) - ratio

    if g(lo) * g(hi) > 0:
        p = lo if abs(g(lo)) < abs(g(hi)) else hi
    else:
        p = brentq(g, lo, hi, xtol=1e-14)
    alpha = d23 / (e2**p - e3**p)
    return float(k3 - alpha * e3**p), float(p)


# ------------------------------------------------------------------- reports


@dataclass(frozen=True)
class SweepRow:
    eps: float
    k_eps: float
    sup_tv: float
    iters: int
    residual: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    k_extrap: float
    k_extrap_fitted_p: float
    p_fitted: float
    prediction: spectrum.LimitPrediction
    c_max: float
    local: spectrum.LocalSpectrum
    hj_values: dict = field(default_factory=dict)
    gates: list[Gate] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


@dataclass
class HjReport:
    solutions: dict
    residuals: dict
    defects: dict
    gates: list[Gate]

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


@dataclass
class QsdReport:
    estimates: list[qsd.QsdEstimate]
    reference: EigenPair
    dt: float
    gates: list[Gate]

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


# --------------------------------------------------------------- operations


def _c_max(cfg: ScenarioConfig, grid=None) -> float:
    grid = grid or cfg.grid
    Y, Z = grid.mesh()
    return float(np.max(np.abs(cfg.coeffs.c_of(Y, Z))))


def _solve(cfg: ScenarioConfig, eps: float, grid=None) -> EigenPair:
    grid = grid or cfg.grid
    try:
        return principal_eigenpair(assemble_global(grid, cfg.coeffs, eps), tol=cfg.tol)
    except NumericalError as err:
        raise type(err)(f"{cfg.source}: eps={eps!r}: {err}") from err


def _k_bound_gate(ks: Iterable[float], c_max: float) -> Gate:
    worst = max(abs(k) for k in ks)
    return Gate("k_bound", worst <= c_max + K_BOUND_SLACK, f"max |k_eps| = {worst:.17g}, max |c| = {c_max:.17g}")


def run_eig(cfg: ScenarioConfig) -> tuple[list[EigenPair], list[Gate]]:
    pairs = [_solve(cfg, eps) for eps in cfg.eps_list]
    gates = [
        _k_bound_gate((p.k for p in pairs), _c_max(cfg)),
        Gate("residual", all(p.residual <= cfg.tol for p in pairs),
             f"max residual {max(p.residual for p in pairs):.3g}"),
    ]
    return pairs, gates


def run_limit(cfg: ScenarioConfig) -> tuple[spectrum.LocalSpectrum, spectrum.LimitPrediction]:
    local = spectrum.local_spectrum(cfg.grid, cfg.coeffs, tol=cfg.tol)
    try:
        pred = spectrum.predict_limit(local, cfg.coeffs)
    except NumericalError as err:
        raise type(err)(f"{cfg.source}: {err}") from err
    return local, pred


def _hj_solutions(local, coeffs, pred, refine: int, integrals) -> dict:
    sols = {"v": hj.build_v(local, coeffs, refine=refine, integrals=integrals)}
    if pred.regime is spectrum.Regime.SUPERCRITICAL:
        sols["ubar"] = hj.build_ubar(local, coeffs, pred.k0, refine=refine, integrals=integrals)
    return sols


def run_hj_check(cfg: ScenarioConfig, local=None, pred=None) -> HjReport:
    """HJ solutions at ``hj_refine`` and twice that; residual, defect and shrink gates."""
    if not cfg.grid.gy.periodic:
        raise ConfigError(f"{cfg.source}: the Hamilton-Jacobi check needs y_domain = torus")
    if local is None or pred is None:
        local, pred = run_limit(cfg)
    coeffs = cfg.coeffs
    ti = spectrum.TransportIntegrals(local, coeffs)
    coarse = _hj_solutions(local, coeffs, pred, cfg.hj_refine, ti)
    fine = _hj_solutions(local, coeffs, pred, 2 * cfg.hj_refine, ti)
    residuals, defects, gates = {}, {}, []
    for kind, sol in coarse.items():
        r1 = hj.hj_residual(sol, local, coeffs)
        r2 = hj.hj_residual(fine[kind], local, coeffs)
        residuals[kind] = (r1, r2)
        gates.append(Gate(f"hj_{kind}_residual", r1 <= cfg.hj_tol, f"{r1:.3g} (tol {cfg.hj_tol:.3g})"))
        gates.append(Gate(f"hj_{kind}_residual_shrinks", r2 <= SHRINK_FLOOR or r1 >= SHRINK_FACTOR * r2,
                          f"{r1:.3g} -> {r2:.3g}"))
        if kind == "ubar":
            d1, d2 = sol.periodicity_defect, fine[kind].periodicity_defect
            defects[kind] = (d1, d2)
            gates.append(Gate("hj_ubar_periodicity", d1 <= cfg.hj_tol, f"{d1:.3g} (tol {cfg.hj_tol:.3g})"))
            gates.append(Gate("hj_ubar_periodicity_shrinks", d2 <= SHRINK_FLOOR or d1 >= SHRINK_FACTOR * d2,
                              f"{d1:.3g} -> {d2:.3g}"))
    return HjReport(coarse, residuals, defects, gates)


def run_sweep(cfg: ScenarioConfig) -> SweepReport:
    grid, coeffs = cfg.grid, cfg.coeffs
    local, pred = run_limit(cfg)
    rows = []
    for eps in cfg.eps_list:
        t0 = time.perf_counter()
        pair = _solve(cfg, eps)
        tv = spectrum.slice_tv_diagnostic(pair, local, grid)
        rows.append(SweepRow(float(eps), pair.k, tv.sup, pair.iterations, pair.residual))
        logger.info("eps=%g k=%.12g sup_tv=%.3g iters=%d (%.2fs)", eps, pair.k, tv.sup,
                    pair.iterations, time.perf_counter() - t0)
    eps_list = [r.eps for r in rows]
    ks = [r.k_eps for r in rows]
    k_extrap = richardson(eps_list, ks)
    k_fit, p_fit = richardson_fitted_p(eps_list, ks)
    c_max = _c_max(cfg)
    errors = [abs(k - pred.k0) for k in ks]
    tvs = [r.sup_tv for r in rows]
    gates = [
        _k_bound_gate(ks, c_max),
        Gate("residual", all(r.residual <= cfg.tol for r in rows), f"max {max(r.residual for r in rows):.3g}"),
        _decreasing_gate("error_decreasing", errors),
        Gate("limit", abs(k_extrap - pred.k0) <= cfg.limit_tol,
             f"|k_extrap - k0| = {abs(k_extrap - pred.k0):.3g} (tol {cfg.limit_tol:.3g})"),
        _decreasing_gate("sup_tv_decreasing", tvs),
        Gate("sup_tv_final", tvs[-1] <= cfg.tv_tol, f"{tvs[-1]:.3g} (tol {cfg.tv_tol:.3g})"),
    ]
    report = SweepReport(rows, k_extrap, k_fit, p_fit, pred, c_max, local, gates=gates)
    if grid.gy.periodic:
        hj_report = run_hj_check(cfg, local, pred)
        report.gates.extend(hj_report.gates)
        report.hj_values = {"residuals": hj_report.residuals, "defects": hj_report.defects}
    return report


def run_qsd(cfg: ScenarioConfig) -> QsdReport:
    q = cfg.qsd
    if q is None:
        raise ConfigError(f"{cfg.source}: missing [qsd] section")
    grid, coeffs = cfg.qsd_grid, cfg.coeffs
    ref = _solve(cfg, q.eps, grid)
    dt = q.dt if q.dt is not None else qsd.max_stable_dt(coeffs, grid, q.eps)
    initial = q.initial
    if initial == "phi":
        initial = ref.phi * grid.weights
    t0 = time.perf_counter()
    estimates = qsd.qsd_sweep(coeffs, grid, q.eps, q.n_particles, q.t_checkpoints, dt, q.seed,
                              initial=initial, resample=q.resample, reference=ref)
    logger.info("qsd: %d particles, %d checkpoints in %.1fs", q.n_particles, len(estimates),
                time.perf_counter() - t0)
    gates = []
    alive = [e for e in estimates if e.survivors > 0]
    gates.append(Gate("survivors", len(alive) == len(estimates),
                      f"survivors at final checkpoint: {estimates[-1].survivors}"))
    tvs = [e.tv_vs_phi for e in alive if e.t > 0]
    if tvs:
        later = [e for e in alive if e.t > 0]
        ok = all(b.tv_vs_phi <= a.tv_vs_phi + b.noise_floor for a, b in zip(later, later[1:]))
        gates.append(Gate("tv_nonincreasing", ok, "tv " + ", ".join(f"{v:.4g}" for v in tvs)
                          + f" (noise floor {later[-1].noise_floor:.3g})"))
        last = later[-1]
        gates.append(Gate("tv_final_within_floor", last.tv_vs_phi <= last.noise_floor,
                          f"{last.tv_vs_phi:.4g} <= {last.noise_floor:.4g}"))
    return QsdReport(estimates, ref, dt, gates)


def continuity_gap(ti: spectrum.TransportIntegrals, approach: float = 1e-10) -> float:
    """How far the supercritical branch lands from ``M`` as ``|gamma|`` decreases to ``j(M)``.

    Evaluates ``j^-1`` at ``j(M)`` itself and, through the root finder, just above it.
    """
    above = ti.j_inv(ti.jM + approach * max(1.0, ti.jM))
    return max(abs(ti.j_inv(ti.jM) - ti.M), abs(above - ti.M))


# ------------------------------------------------------------------- output


def _write_csv(path: Path, header: str, rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(header + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _write_summary(path: Path, cfg: ScenarioConfig, command: str, values: dict, gates: Sequence[Gate]) -> None:
    lines = [f"command = {command}", f"config = {cfg.source}", f"grid = {cfg.grid.describe()}"]
    for key, value in values.items():
        lines.append(f"{key} = {value if isinstance(value, str) else fmt(value)}")
    lines.extend(g.line() for g in gates)
    lines.append(f"result = {'PASS' if all(g.passed for g in gates) else 'FAIL'}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _prediction_values(pred: spectrum.LimitPrediction) -> dict:
    return {"regime": pred.regime.value, "M": pred.M, "gamma": pred.gamma, "jM": pred.jM,
            "k0": pred.k0, "y_star": pred.y_star}


def _spectrum_rows(local: spectrum.LocalSpectrum):
    return zip(local.y_nodes, local.k)


def _cmd_eig(cfg: ScenarioConfig, out: Path) -> list[Gate]:
    pairs, gates = run_eig(cfg)
    _write_csv(out / "eig.csv", EIG_HEADER,
               ((eps, p.k, p.iterations, p.residual, p.min_phi) for eps, p in zip(cfg.eps_list, pairs)))
    _write_summary(out / "summary.txt", cfg, "eig", {}, gates)
    return gates


def _cmd_local_spectrum(cfg: ScenarioConfig, out: Path) -> list[Gate]:
    local = spectrum.local_spectrum(cfg.grid, cfg.coeffs, tol=cfg.tol)
    _write_csv(out / "local_spectrum.csv", SPECTRUM_HEADER, _spectrum_rows(local))
    gates = [Gate("residual", bool(np.all(local.residuals <= cfg.tol)), f"max {local.residuals.max():.3g}")]
    _write_summary(out / "summary.txt", cfg, "local-spectrum", {"max_k_y": float(local.k.max())}, gates)
    return gates


def _cmd_limit(cfg: ScenarioConfig, out: Path) -> list[Gate]:
    local, pred = run_limit(cfg)
    _write_csv(out / "local_spectrum.csv", SPECTRUM_HEADER, _spectrum_rows(local))
    values = _prediction_values(pred)
    gates = []
    if cfg.grid.gy.periodic:
        ti = spectrum.TransportIntegrals(local, cfg.coeffs)
        gap = continuity_gap(ti)
        values["continuity_gap"] = gap
        gates.append(Gate("regime_continuity", gap <= 1e-8, f"|j^-1(j(M)) - M| = {gap:.3g}"))
    _write_summary(out / "summary.txt", cfg, "limit", values, gates)
    return gates


def _hj_rows(sol: hj.HjSolution, local, coeffs):
    yw = np.mod(sol.y_nodes, 1.0)
    up = sol.derivative(sol.y_nodes)
    res = np.abs(-coeffs.A_of(yw) * up**2 - coeffs.B_of(yw) * up - local.k_at(yw) + sol.k_used)
    return zip(sol.y_nodes, sol.u, res)


def _cmd_hj_check(cfg: ScenarioConfig, out: Path) -> list[Gate]:
    local, pred = run_limit(cfg)
    report = run_hj_check(cfg, local, pred)
    for kind, sol in report.solutions.items():
        _write_csv(out / f"hj_{kind}.csv", HJ_HEADER, _hj_rows(sol, local, cfg.coeffs))
    values = _prediction_values(pred)
    for kind, (r1, r2) in report.residuals.items():
        values[f"hj_{kind}_residual"] = r1
        values[f"hj_{kind}_residual_refined"] = r2
    for kind, (d1, d2) in report.defects.items():
        values[f"hj_{kind}_periodicity"] = d1
        values[f"hj_{kind}_periodicity_refined"] = d2
    _write_summary(out / "summary.txt", cfg, "hj-check", values, report.gates)
    return report.gates


def _cmd_sweep(cfg: ScenarioConfig, out: Path) -> list[Gate]:
    report = run_sweep(cfg)
    _write_csv(out / "sweep.csv", SWEEP_HEADER,
               ((r.eps, r.k_eps, r.sup_tv, r.iters, r.residual) for r in report.rows))
    _write_csv(out / "local_spectrum.csv", SPECTRUM_HEADER, _spectrum_rows(report.local))
    values = _prediction_values(report.prediction)
    values.update(k_extrap=report.k_extrap, k_extrap_fitted_p=report.k_extrap_fitted_p,
                  p_fitted=report.p_fitted, c_max=report.c_max)
    for kind, (r1, _) in report.hj_values.get("residuals", {}).items():
        values[f"hj_{kind}_residual"] = r1
    _write_summary(out / "summary.txt", cfg, "sweep", values, report.gates)
    return report.gates


def _cmd_qsd(cfg: ScenarioConfig, out: Path) -> list[Gate]:
    report = run_qsd(cfg)
    nan = float("nan")
    _write_csv(out / "qsd.csv", QSD_HEADER,
               ((e.t, e.survivors, e.tv_vs_phi if e.tv_vs_phi is not None else nan) for e in report.estimates))
    final = report.estimates[-1]
    with open(out / "qsd_histogram.txt", "w", encoding="ascii") as fh:
        for cell, mass in enumerate(final.histogram.ravel()):
            fh.write(f"{cell} {fmt(mass)}\n")
    q = cfg.qsd
    values = {"eps": q.eps, "n_particles": q.n_particles, "seed": q.seed, "dt": report.dt,
              "resample": str(q.resample).lower(), "qsd_grid": cfg.qsd_grid.describe(),
              "k_eps": report.reference.k}
    _write_summary(out / "summary.txt", cfg, "qsd-mc", values, report.gates)
    return report.gates


COMMANDS = {
    "eig": (_cmd_eig, "principal eigenpair for every eps in the sweep"),
    "local-spectrum": (_cmd_local_spectrum, "local eigenvalue k^y at every y-node"),
    "limit": (_cmd_limit, "predicted small-eps limit and its regime"),
    "sweep": (_cmd_sweep, "full eps sweep with extrapolation and gates"),
    "qsd-mc": (_cmd_qsd, "Monte Carlo conditional law against phi_eps"),
    "hj-check": (_cmd_hj_check, "explicit Hamilton-Jacobi solutions and residuals"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisoeig", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, type=Path, help="scenario file (INI)")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int, default=None, help="override the [qsd] seed")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = cfg.with_output(args.out)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        gates = COMMANDS[args.command][0](cfg, cfg.output_dir)
    except ConfigError as err:
        print(f"anisoeig: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"anisoeig: cannot write output: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, AnisoError, ArithmeticError) as err:
        print(f"anisoeig: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    for g in gates:
        print(g.line())
    failed = [g.name for g in gates if not g.passed]
    if failed:
        print(f"anisoeig: gates failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
