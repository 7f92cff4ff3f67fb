"""Command line front end.

Subcommands ``run``, ``convergence`` and ``validate-geometry``.  Exit codes:
0 success, 1 numerical failure, 2 usage error, 3 violated geometric
assumption.  ``XHDG_NUM_THREADS`` caps the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import acceptance
from .levelset import AssumptionViolation, validate_interface_assumptions
from .mesh import MeshError, build_structured, validate_shape_regularity
from .postprocess import convergence_orders, plot_convergence, to_csv, to_markdown
from .problems import PROBLEMS, builtin, verify_spec
from .solver import SolverError
from .study import run_level

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE, EXIT_ASSUMPTION = 0, 1, 2, 3
THREADS_ENV = "XHDG_NUM_THREADS"

DEFAULTS = {
    "problem": "ex1", "mesh": "tri", "n": 16, "levels": "16,32,64,128", "m": 0,
    "nu1": None, "nu2": None, "alpha1": None, "alpha2": None,
    "snap": 1e-10, "quad_degree": 4, "error_degree": 8, "out_dir": ".", "stem": None,
}

log = logging.getLogger("xhdg")


class UsageError(Exception):
    pass


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    try:
        count = int(value)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=max(count, 1))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option defaults (flags take precedence)")
    p.add_argument("--problem", choices=PROBLEMS, default=argparse.SUPPRESS)
    p.add_argument("--mesh", choices=("tri", "rect"), default=argparse.SUPPRESS)
    for name in ("nu1", "nu2", "alpha1", "alpha2"):
        p.add_argument(f"--{name}", type=float, default=argparse.SUPPRESS)
    p.add_argument("-m", "--trace-degree", dest="m", type=int, choices=(0, 1), default=argparse.SUPPRESS,
                   help="polynomial degree of the interface trace (default 0; with m = 0 a "
                        "nonzero traction jump is only resolved to its segment mean)")
    p.add_argument("--snap", type=float, default=argparse.SUPPRESS,
                   help="relative tolerance for vertices lying on the interface")
    p.add_argument("--quad-degree", type=int, default=argparse.SUPPRESS)
    p.add_argument("--error-degree", type=int, default=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xhdg", description="Unfitted X-HDG solver for "
                                     "Stokes/Brinkman interface problems and curved domains.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one solve, print the error row")
    _add_common(run)
    run.add_argument("--n", type=int, default=argparse.SUPPRESS)
    run.add_argument("--vtk", help="write per-piece fields to this legacy VTK file")
    run.add_argument("--json", action="store_true", help="print the row as JSON")

    conv = sub.add_parser("convergence", help="refinement study with CSV, Markdown and a plot")
    _add_common(conv)
    conv.add_argument("--levels", default=argparse.SUPPRESS, help="comma separated, e.g. 16,32,64,128")
    conv.add_argument("--out-dir", default=argparse.SUPPRESS)
    conv.add_argument("--stem", default=argparse.SUPPRESS, help="output file stem")
    conv.add_argument("--no-plot", action="store_true")
    conv.add_argument("--no-timing", action="store_true",
                      help="leave the seconds column empty so repeated runs are byte-identical")
    conv.add_argument("--check", action="store_true", help="compare against built-in thresholds")

    geo = sub.add_parser("validate-geometry", help="check mesh and interface assumptions")
    _add_common(geo)
    geo.add_argument("--n", type=int, default=argparse.SUPPRESS)
    geo.add_argument("--samples", type=int, default=2000, help="points for the data consistency check")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for k, v in vars(args).items():
        if k in DEFAULTS:
            cfg[k] = v
    if cfg["problem"] not in PROBLEMS:
        raise UsageError(f"unknown problem {cfg['problem']!r}")
    if cfg["mesh"] not in ("tri", "rect"):
        raise UsageError(f"unknown mesh type {cfg['mesh']!r}")
    if int(cfg["m"]) not in (0, 1):
        raise UsageError("trace degree must be 0 or 1")
    if int(cfg["n"]) < 1:
        raise UsageError("--n must be positive")
    return cfg


def parse_levels(text) -> list[int]:
    try:
        levels = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad level list {text!r}") from None
    if len(levels) < 2:
        raise UsageError("a convergence study needs at least two levels")
    if any(n < 1 for n in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise UsageError("levels must be positive and strictly increasing")
    return levels


def make_spec(cfg: dict):
    base = builtin(cfg["problem"])
    nu = (cfg["nu1"] if cfg["nu1"] is not None else base.nu[0],
          cfg["nu2"] if cfg["nu2"] is not None else base.nu[1])
    alpha = (cfg["alpha1"] if cfg["alpha1"] is not None else base.alpha[0],
             cfg["alpha2"] if cfg["alpha2"] is not None else base.alpha[1])
    if base.curved:
        # a single subdomain: one value applies everywhere
        nu = (nu[1] if cfg["nu2"] is not None else nu[0],) * 2
        alpha = (alpha[1] if cfg["alpha2"] is not None else alpha[0],) * 2
    try:
        return builtin(cfg["problem"], nu=nu, alpha=alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _row_line(row) -> str:
    return (f"n={row.n} err_u={row.err_u:.4e} err_L={row.err_L:.4e} err_gradu={row.err_gradu:.4e} "
            f"err_p={row.err_p:.4e} energy={row.energy:.4e} dofs={row.dofs} seconds={row.seconds:.2f}")


def cmd_run(args, cfg) -> int:
    spec = make_spec(cfg)
    res = run_level(spec, int(cfg["n"]), cfg["mesh"], int(cfg["m"]), snap=cfg["snap"],
                    degree=int(cfg["quad_degree"]), error_degree=int(cfg["error_degree"]))
    row = res.row
    if args.json:
        print(json.dumps({"problem": spec.name, "mesh": cfg["mesh"], "nu": spec.nu, "alpha": spec.alpha,
                          "n": row.n, "err_u": row.err_u, "err_L": row.err_L, "err_gradu": row.err_gradu,
                          "err_p": row.err_p, "energy": row.energy, "dofs": row.dofs}))
    else:
        print(f"{spec.name} {cfg['mesh']} nu={spec.nu} alpha={spec.alpha} m={cfg['m']}")
        print(_row_line(row))
    if args.vtk:
        from .vtkio import write_vtk

        write_vtk(res.solution, args.vtk, f"{spec.name} n={row.n}")
        print(f"wrote {args.vtk}")
    return EXIT_OK


def cmd_convergence(args, cfg) -> int:
    spec = make_spec(cfg)
    levels = parse_levels(cfg["levels"])
    rows = []
    for n in levels:
        res = run_level(spec, n, cfg["mesh"], int(cfg["m"]), snap=cfg["snap"],
                        degree=int(cfg["quad_degree"]), error_degree=int(cfg["error_degree"]))
        if args.no_timing:
            res.row.seconds = float("nan")
        rows.append(res.row)
        print(_row_line(res.row), flush=True)
    rows, note = convergence_orders(rows)
    if note:
        print(f"note: {note}")

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    stem = cfg["stem"] or f"{spec.name}_{cfg['mesh']}_m{cfg['m']}"
    csv_text = to_csv(rows)
    if args.no_timing:
        csv_text = csv_text.replace(",nan\n", ",\n")
    (out / f"{stem}.csv").write_text(csv_text)
    title = f"{spec.name}, {cfg['mesh']} mesh, nu={spec.nu}, alpha={spec.alpha}, m={cfg['m']}"
    (out / f"{stem}.md").write_text(to_markdown(rows, title, note))
    written = [out / f"{stem}.csv", out / f"{stem}.md"]
    if not args.no_plot:
        plot_convergence(rows, out / f"{stem}.png", title)
        written.append(out / f"{stem}.png")
    print("wrote " + ", ".join(str(p) for p in written))

    if args.check:
        results = acceptance.check_orders(rows, spec.name)
        key = (spec.name, cfg["mesh"], tuple(spec.nu), tuple(spec.alpha), levels[-1])
        results += acceptance.check_reference(rows, key)
        for r in results:
            print(r.line())
        ok = all(r.passed for r in results)
        print("PASS" if ok else "FAIL")
        return EXIT_OK if ok else EXIT_NUMERICAL
    return EXIT_OK


def cmd_validate_geometry(args, cfg) -> int:
    spec = make_spec(cfg)
    mesh = build_structured(spec.domain, int(cfg["n"]), cfg["mesh"])
    shape = validate_shape_regularity(mesh)
    print(f"mesh {cfg['mesh']} {mesh.n}x{mesh.n}: h={mesh.h:.4e} theta*={shape.theta_star:.4f} "
          f"l*={shape.l_star:.4f} {'ok' if shape.ok else 'VIOLATED'}")
    rep = validate_interface_assumptions(mesh, spec.levelset, snap=cfg["snap"])
    print(f"interface: {rep.num_cut_cells} cut cells, gamma={rep.gamma:.3e}, "
          f"min cut fraction={rep.min_cut_fraction:.3e}, A1 {'ok' if rep.a1_ok else 'VIOLATED'}")
    if rep.message:
        print(rep.message)
    sv = verify_spec(spec, args.samples)
    print(f"data: pde={sv.pde_residual:.2e} div={sv.divergence:.2e} jump={sv.velocity_jump:.2e} "
          f"compatibility={sv.compatibility:.2e} {'ok' if sv.ok else 'INCONSISTENT'}")
    if not shape.ok or not rep.a1_ok:
        return EXIT_ASSUMPTION
    return EXIT_OK


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "validate-geometry": cmd_validate_geometry}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        with _thread_limit():
            return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssumptionViolation as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
