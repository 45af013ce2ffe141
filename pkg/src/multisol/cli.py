"""Command-line entry point: ``multisol {wells,solve,scan} --config FILE``.

Exit codes: 0 success, 1 usage or configuration error, 2 no negative well,
3 partial success (some well failed to converge or to certify).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .certify import certify, write_report
from .errors import ConfigError, LastWellUnbounded, NoBound, NoWells
from .functionals import Kind
from .kgm_coupling import solve_phi
from .minimizer import find_all, threshold_scan
from .nonlinearity import detect_wells, max_principle_bound, truncate, untruncated
from .radial_grid import save_profile

EXIT_OK, EXIT_CONFIG, EXIT_NOWELLS, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("multisol")


def _configure_logging():
    level = os.environ.get("MULTISOL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="problem file (sectioned key=value or JSON)")
    common.add_argument("--jobs", type=int, default=None, help="worker threads (default: CPU count)")
    common.add_argument("--trace", action="store_true", help="write per-well iterate logs as NDJSON")
    common.add_argument("--out", default=None, help="output directory (overrides output.out_dir)")
    common.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    common.add_argument("--seed", type=int, default=None, help="solver seed (overrides solver.seed)")
    common.add_argument("--constraint", type=float, default=None, help="override problem.constraint")

    p = argparse.ArgumentParser(prog="multisol", description="Multiple positive radial solutions by localized minimization.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("wells", parents=[common], help="print the negative wells of the nonlinearity")
    sub.add_parser("solve", parents=[common], help="solve and certify one solution per well")
    scan = sub.add_parser("scan", parents=[common], help="scan constraint values for the threshold")
    scan.add_argument("--values", type=float, nargs="+", default=None, help="constraint values (sorted)")
    return p


def _prepare(args):
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg.solver["seed"] = args.seed
    if args.constraint is not None:
        cfg.problem["constraint"] = float(args.constraint)
    if args.out is not None:
        cfg.output["out_dir"] = args.out
    if args.trace:
        cfg.output["emit_trace"] = True
    return cfg


def _well_bound(spec, term, eta):
    """Maximum-principle bound for the multiplier-free effective term of a well."""
    q = spec.omega**2 if spec.kind in (Kind.KG, Kind.KGM) else 0.0
    gp = lambda s: term.deriv(s) + q * s
    top = eta + term.blend_window + 1.0 if np.isfinite(eta) else 10.0
    try:
        return max_principle_bound(gp, 0.0, top, 1e-10)
    except NoBound:
        return None


def cmd_wells(cfg) -> int:
    spec = cfgmod.build_problem(cfg)
    opts = cfgmod.build_solver(cfg)
    wells = detect_wells(spec.nl, opts.s_max, opts.scan_points, opts.root_tol)
    print(f"{'j':>3} {'xi':>14} {'eta':>14} {'R(mid)':>14} {'s_bar':>14}")
    for j, (xi, eta) in enumerate(wells.wells, start=1):
        mid = wells.midpoint(j)
        rmid = float(spec.nl.value(np.array([mid]))[0])
        try:
            term = truncate(spec.nl, wells, j, opts.blend_window)
        except LastWellUnbounded:
            term = untruncated(spec.nl, j)
        sb = _well_bound(spec, term, eta)
        sb_txt = "none" if sb is None else f"{sb:.8g}"
        print(f"{j:>3} {xi:>14.8g} {eta:>14.8g} {rmid:>14.6g} {sb_txt:>14}")
    return EXIT_OK


def cmd_solve(cfg, jobs=None) -> int:
    spec = cfgmod.build_problem(cfg)
    opts = cfgmod.build_solver(cfg)
    out = cfgmod.output_options(cfg)
    out_dir = Path(out["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    wells = detect_wells(spec.nl, opts.s_max, opts.scan_points, opts.root_tol)
    results = find_all(spec, opts, jobs=jobs, wells=wells)
    certs, lines, ok = [], [], True
    failures = []
    for res in results:
        j = res.well_index
        if out["emit_trace"]:
            with open(out_dir / f"trace_well{j}.ndjson", "w") as fh:
                for rec in res.trace:
                    fh.write(json.dumps(rec) + "\n")
        if not res.converged:
            ok = False
            failures.append({"well_index": j, "status": res.status.value, "message": res.message})
            lines.append(f"well {j}: {res.status.value} ({res.message})")
            continue
        cert = certify(spec, res, wells)
        certs.append(cert)
        lines.append(cert.summary())
        ok = ok and cert.passed
        if out["emit_profiles"]:
            save_profile(out_dir / f"profile_well{j}.csv", res.profile)
            if spec.kind is Kind.KGM:
                phi = solve_phi(res.profile, spec.e_charge).phi
                flag = ((phi.values >= 0) & (phi.values <= 1.0 / spec.e_charge)).astype(float)
                save_profile(out_dir / f"phi_well{j}.csv", phi, {"in_bounds": flag})
    write_report(out_dir / "certificates.json", certs,
                 {"kind": spec.kind.value, "failures": failures, "wells": [list(map(_f, w)) for w in wells.wells]})
    if out["emit_plot_data"]:
        with open(out_dir / "energies.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["well", "status", "H", "J", "linf", "multiplier"])
            for res in results:
                e = res.energy
                w.writerow([res.well_index, res.status.value, e.h_value if e else "", e.j_value if e else "",
                            res.profile.linf if e else "", res.multiplier if res.multiplier is not None else ""])
    with open(out_dir / "summary.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_PARTIAL


def _f(x):
    return None if not np.isfinite(x) else float(x)


def cmd_scan(cfg, values) -> int:
    if values is None:
        values = cfg.scan.get("values")
    if not values:
        raise ConfigError("scan needs --values or a [scan] values entry")
    values = sorted(values)
    spec = cfgmod.build_problem(cfg, constraint=values[0])
    opts = cfgmod.build_solver(cfg)
    out_dir = Path(cfgmod.output_options(cfg)["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        report = threshold_scan(spec, values, opts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with open(out_dir / "scan.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "status", "H", "linf", "J"])
        for r in report.rows:
            w.writerow([r.value, r.status.value, "" if r.H is None else r.H, "" if r.linf is None else r.linf,
                        "" if r.J is None else r.J])
    for r in report.rows:
        print(f"{r.value:>12.6g} {r.status.value:>12} {'' if r.H is None else f'{r.H:.8g}':>16}")
    print("threshold:", "none" if report.threshold is None else f"{report.threshold:g}")
    return EXIT_OK if report.threshold is not None else EXIT_PARTIAL


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = _prepare(args)
        if args.dump_config:
            sys.stdout.write(cfgmod.dump_text(cfgmod.with_defaults(cfg)))
            return EXIT_OK
        if args.command == "wells":
            return cmd_wells(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, jobs=args.jobs)
        return cmd_scan(cfg, args.values)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoWells as exc:
        print(f"no negative well: {exc}", file=sys.stderr)
        return EXIT_NOWELLS


if __name__ == "__main__":
    raise SystemExit(main())
