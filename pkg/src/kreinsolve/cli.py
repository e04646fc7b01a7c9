"""Command-line runner: ``kreinsolve solve problem.toml``.

Every run solves the problem with the chosen solver on each grid size, runs
the dense Nystrom oracle alongside, collects identity diagnostics and writes
either CSV tables or one JSON document.

Exit codes: 0 success, 2 bad problem file, 3 solver inapplicable, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GridError, KernelError, KreinInapplicableError, SingularSystemError, SolverInapplicable, SpecError
from .grid import make_grid
from .kernels import sample_kernel, sample_vector
from .krein import (
    build_accumulator,
    build_family,
    check_condition_37,
    family_xi_derivative_residuals,
    krein_solve,
    representation_gaps,
)
from .nystrom import (
    evolution_residual_from_family,
    nystrom_residual,
    resolvent_family,
    solve_full,
    solve_via_resolvent,
)
from .problem import ProblemSpec, parse_spec, spec_to_dict
from .symmetric import liouville_check, solve_theorem_4_2, symmetry_check

log = logging.getLogger(__name__)

EXIT_OK, EXIT_SPEC, EXIT_INAPPLICABLE, EXIT_IO = 0, 2, 3, 4

# Frozen column/field order of the diagnostics; see README.
METRICS = (
    "oracle_relative_residual",
    "solution_residual",
    "krein_vs_oracle_gap",
    "krein_vs_oracle_relative_gap",
    "resolvent_first_residual",
    "resolvent_second_residual",
    "resolvent_tolerance",
    "evolution_residual",
    "representation_gap",
    "representation_gap_star",
    "xi_derivative_residual",
    "xi_derivative_residual_star",
    "accumulator_route_gap",
    "condition_37_min",
    "symmetry_gap",
    "liouville_gap",
    "det_star_gap",
    "centered_residual",
    "centered_evenness_gap",
)
ORDER_METRICS = (
    "krein_vs_oracle_gap",
    "evolution_residual",
    "xi_derivative_residual",
    "accumulator_route_gap",
    "liouville_gap",
)


@dataclass
class GridRecord:
    grid_size: int
    h: float
    t: np.ndarray | None = None
    phi: np.ndarray | None = None
    metrics: dict = field(default_factory=dict)
    error: str | None = None
    error_xi: float | None = None


@dataclass
class RunReport:
    spec: ProblemSpec
    records: list[GridRecord]
    orders: dict

    @property
    def failed(self) -> list[GridRecord]:
        return [r for r in self.records if r.error is not None]

    @property
    def condition_37_min(self) -> float | None:
        vals = [r.metrics.get("condition_37_min") for r in self.records]
        vals = [v for v in vals if v is not None]
        return min(vals) if vals else None


def _resolvent_metrics(metrics: dict, resolvents, h: float):
    metrics["resolvent_first_residual"] = max(r.residual_first for r in resolvents)
    metrics["resolvent_second_residual"] = max(r.residual_second for r in resolvents)
    metrics["resolvent_tolerance"] = max(r.tolerance for r in resolvents)
    metrics["evolution_residual"] = evolution_residual_from_family(resolvents, h)


def _krein_metrics(metrics: dict, K, resolvents):
    fam = build_family(K)
    acc = build_accumulator(fam)
    report = check_condition_37(acc)
    metrics["condition_37_min"] = report.min_abs_det
    metrics["accumulator_route_gap"] = acc.route_gap
    rep, rep_star = representation_gaps(fam, resolvents)
    metrics["representation_gap"] = rep
    metrics["representation_gap_star"] = rep_star
    xd = family_xi_derivative_residuals(fam, resolvents)
    metrics["xi_derivative_residual"] = xd["g"]
    metrics["xi_derivative_residual_star"] = xd["g_star"]
    return fam, acc


def run_grid(spec: ProblemSpec, n: int) -> GridRecord:
    """Solve on one grid size. Solver failures are recorded, not raised."""
    grid = make_grid(spec.a, spec.b, n)
    record = GridRecord(n, grid.h, t=grid.nodes.copy())
    metrics = record.metrics
    K = sample_kernel(spec.kernel_spec(), grid)
    f = sample_vector(spec.rhs(), grid)
    try:
        oracle = solve_full(K, f)
        metrics["oracle_relative_residual"] = oracle.relative_residual
        phi = oracle.samples
        if spec.solver == "resolvent_35":
            resolvents = resolvent_family(K)
            _resolvent_metrics(metrics, resolvents, grid.h)
            phi = solve_via_resolvent(K, f, resolvents).samples
        elif spec.solver in ("krein_34", "theorem_4_1"):
            try:
                resolvents = resolvent_family(K)
                _resolvent_metrics(metrics, resolvents, grid.h)
                fam, acc = _krein_metrics(metrics, K, resolvents)
            except SingularSystemError as exc:
                raise KreinInapplicableError(
                    f"Krein formula inapplicable: {exc}", xi=exc.xi, index=exc.index
                ) from exc
            phi = krein_solve(fam, acc, f).phi.samples
            if spec.solver == "theorem_4_1":
                metrics["symmetry_gap"] = symmetry_check(fam, K)
                lv = liouville_check(fam, resolvents)
                metrics["liouville_gap"] = lv.max_relative_gap
                metrics["det_star_gap"] = lv.det_star_gap
        elif spec.solver == "theorem_4_2":
            df_exprs = spec.rhs_derivative()
            df = None if df_exprs is None else sample_vector(df_exprs, grid)
            sol = solve_theorem_4_2(spec.kernel_spec(), f, df)
            metrics["centered_residual"] = sol.family.residual
            metrics["centered_evenness_gap"] = sol.family.evenness_gap
            metrics["condition_37_min"] = float(np.min(np.abs(sol.family.det_M_prime)))
            phi = sol.phi.samples
        res, _ = nystrom_residual(K, phi, f.samples)
        metrics["solution_residual"] = res
        gap = float(np.max(np.abs(phi - oracle.samples)))
        scale = float(np.max(np.abs(oracle.samples)))
        metrics["krein_vs_oracle_gap"] = gap
        metrics["krein_vs_oracle_relative_gap"] = gap / scale if scale else gap
        record.phi = phi
    except SolverInapplicable as exc:
        record.error = str(exc)
        record.error_xi = exc.xi
        log.warning("grid %d: %s", n, exc)
    return record


def convergence_orders(records: list[GridRecord]) -> dict:
    """Observed orders log(e_k / e_{k+1}) / log(h_k / h_{k+1}) between successive grids."""
    orders = {}
    for key in ORDER_METRICS:
        seq = []
        for r0, r1 in zip(records, records[1:]):
            e0, e1 = r0.metrics.get(key), r1.metrics.get(key)
            if e0 is None or e1 is None or not (e0 > 0 and e1 > 0) or r0.h == r1.h:
                seq.append(None)
            else:
                seq.append(math.log(e0 / e1) / math.log(r0.h / r1.h))
        if any(v is not None for v in seq):
            orders[key] = seq
    return orders


def run(spec: ProblemSpec, workers: int | None = None) -> RunReport:
    workers = workers or min(len(spec.grids), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(lambda n: run_grid(spec, n), spec.grids))
    return RunReport(spec, records, convergence_orders(records))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def solution_columns(m: int) -> list[str]:
    cols = ["grid_size", "t"]
    for k in range(1, m + 1):
        cols += [f"re_phi_{k}", f"im_phi_{k}"]
    return cols


def summary_columns() -> list[str]:
    return ["grid_size", "h", "status", *METRICS, *[f"order_{k}" for k in ORDER_METRICS], "error_xi", "error"]


def report_to_dict(report: RunReport) -> dict:
    grids = []
    for r in report.records:
        entry = {
            "grid_size": r.grid_size,
            "h": r.h,
            "status": "ok" if r.error is None else "inapplicable",
            "metrics": {k: _json_float(r.metrics.get(k)) for k in METRICS},
            "error": r.error,
            "error_xi": _json_float(r.error_xi),
        }
        if r.phi is not None:
            entry["t"] = [float(x) for x in r.t]
            entry["phi_re"] = [[float(v) for v in row] for row in r.phi.real]
            entry["phi_im"] = [[float(v) for v in row] for row in r.phi.imag]
        grids.append(entry)
    return {
        "version": __version__,
        "problem": spec_to_dict(report.spec),
        "solver": report.spec.solver,
        "status": "ok" if not report.failed else "inapplicable",
        "condition_37_min": _json_float(report.condition_37_min),
        "orders": {k: [_json_float(v) for v in seq] for k, seq in report.orders.items()},
        "grids": grids,
    }


def emit(report: RunReport, fmt: str, out_dir: str | Path) -> list[Path]:
    """Write the report; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / "report.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report_to_dict(report), fh, indent=2, allow_nan=False)
            fh.write("\n")
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    sol_path, sum_path = out / "solution.csv", out / "summary.csv"
    with open(sol_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(solution_columns(report.spec.m))
        for r in report.records:
            if r.phi is None:
                continue
            for t, row in zip(r.t, r.phi):
                cells = [r.grid_size, _fmt(t)]
                for v in row:
                    cells += [_fmt(v.real), _fmt(v.imag)]
                w.writerow(cells)
    with open(sum_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary_columns())
        for k, r in enumerate(report.records):
            orders = [None if k == 0 else report.orders.get(key, [None] * k)[k - 1] for key in ORDER_METRICS]
            w.writerow(
                [r.grid_size, _fmt(r.h), "ok" if r.error is None else "inapplicable"]
                + [_fmt(r.metrics.get(key)) for key in METRICS]
                + [_fmt(o) for o in orders]
                + [_fmt(r.error_xi), r.error or ""]
            )
    return [sol_path, sum_path]


def _grid_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kreinsolve", description="Second-kind integral equation solver (Krein's method).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="solve the problem described by a TOML file")
    solve.add_argument("spec", help="problem file (TOML)")
    solve.add_argument("--out", help="output directory (overrides output.path)")
    solve.add_argument("--format", choices=("csv", "json"), help="output format (overrides output.format)")
    solve.add_argument("--grids", type=_grid_list, help="comma-separated node counts, e.g. 9,17,33")
    solve.add_argument("--solver", help="solver name (overrides the file)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = Path(args.spec).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.spec}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        spec = parse_spec(text).with_overrides(
            output_path=args.out, output_format=args.format, grids=args.grids, solver=args.solver
        )
    except SpecError as exc:
        print(f"error: {args.spec}: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        report = run(spec)
    except (SpecError, KernelError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        paths = emit(report, spec.output_format, spec.output_path)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    for p in paths:
        log.info("wrote %s", p)
    if report.failed:
        for r in report.failed:
            print(f"error: grid {r.grid_size}: {r.error}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
