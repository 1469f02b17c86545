"""Command-line interface: experiment runner and a one-shot solver.

    finsler-liouville list
    finsler-liouville run thm11 thm14 [--config cfg.json] [--out DIR] [--parallel]
    finsler-liouville solve --gauge "family=euclidean;dimension=2" \
        --domain "shape=wulff;R=1;cells=128" --source const:1 --bc const:0 \
        --out u.csv --report report.json

The output directory may also be set with the FINSLER_LIOUVILLE_OUT
environment variable (the only environment override).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .experiments import EXPERIMENTS, list_experiments, run_experiment, run_many
from .gauges import parse_gauge_spec
from .grid import Domain, ScalarField, load_field, save_field
from .solver import SolverConfig, solve_poisson


def parse_domain_spec(text, gauge):
    """shape=box;lo=0,0;hi=1,1;cells=256 | shape=wulff;R=1;cells=256
    | shape=annulus;R=1;R_inner=0.1;cells=256  (vectors comma-separated)."""
    items = {}
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        k, v = chunk.split("=", 1)
        items[k.strip().lower()] = v.strip()
    shape = items.get("shape", "box")
    cells = int(items.get("cells", 128))
    if shape == "box":
        lo = [float(t) for t in items.get("lo", "0,0").split(",")]
        hi = [float(t) for t in items.get("hi", "1,1").split(",")]
        return Domain.box((lo, hi), cells)
    if shape == "wulff":
        return Domain.wulff_ball(gauge, float(items.get("r", items.get("R", 1.0))),
                                 cells)
    if shape == "annulus":
        return Domain.wulff_annulus(gauge, float(items.get("r", items.get("R", 1.0))),
                                    float(items.get("r_inner", 0.1)), cells)
    raise ValueError(f"unknown domain shape {shape!r}")


def _parse_source(text, domain):
    if text.startswith("const:"):
        return ScalarField.constant(domain, float(text.split(":", 1)[1]))
    field = load_field(text)
    if field.domain.node_shape != domain.node_shape:
        raise ValueError("loaded field resolution does not match the domain")
    return ScalarField(domain, field.values)


def _cmd_list(_args):
    for name, desc in list_experiments().items():
        print(f"{name:14s} {desc}")
    return 0


def _cmd_run(args):
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    names = args.ids
    if names == ["all"]:
        names = list(EXPERIMENTS)
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        print(f"unknown experiment ids: {', '.join(unknown)}", file=sys.stderr)
        return 2
    if len(names) == 1:
        return run_experiment(names[0], config, args.out)
    results = run_many(names, config, args.out, parallel=args.parallel)
    for name, status in sorted(results.items()):
        print(f"{name}: {'ok' if status == 0 else 'error'}")
    return max(results.values())


def _cmd_solve(args):
    gauge = parse_gauge_spec(args.gauge)
    domain = parse_domain_spec(args.domain, gauge)
    f = _parse_source(args.source, domain)
    g = _parse_source(args.bc, domain)
    config = SolverConfig(eps=args.eps, tol=args.tol)
    u, report = solve_poisson(domain, gauge, f, g, config)
    out = args.out
    if os.environ.get("FINSLER_LIOUVILLE_OUT") and not os.path.isabs(out):
        base = os.environ["FINSLER_LIOUVILLE_OUT"]
        os.makedirs(base, exist_ok=True)
        out = os.path.join(base, out)
    save_field(u, out, gauge_id=gauge.to_spec())
    payload = dict(report.as_dict(), gauge=gauge.to_spec(),
                   domain=domain.descriptor,
                   max_abs_u=float(np.abs(u.values[domain.node_active]).max()))
    report_path = args.report
    if os.environ.get("FINSLER_LIOUVILLE_OUT") and not os.path.isabs(report_path):
        report_path = os.path.join(os.environ["FINSLER_LIOUVILLE_OUT"],
                                   report_path)
    with open(report_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    print(f"converged={report.converged} residual={report.residual_norm:.3e} "
          f"wrote {out}")
    return 0 if report.converged else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="finsler-liouville",
        description="Anisotropic N-Laplacian experiments and solver")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list experiment ids").set_defaults(
        func=_cmd_list)

    run_p = sub.add_parser("run", help="run experiments by id")
    run_p.add_argument("ids", nargs="+",
                       help="experiment ids (or 'all')")
    run_p.add_argument("--config", help="JSON config overriding defaults")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--parallel", action="store_true",
                       help="run independent experiments concurrently")
    run_p.set_defaults(func=_cmd_run)

    solve_p = sub.add_parser("solve", help="solve -Q_N u = f with Dirichlet data")
    solve_p.add_argument("--gauge", default="family=euclidean;dimension=2")
    solve_p.add_argument("--domain", default="shape=box;lo=0,0;hi=1,1;cells=128")
    solve_p.add_argument("--source", default="const:1",
                         help="const:<value> or a saved field CSV")
    solve_p.add_argument("--bc", default="const:0",
                         help="const:<value> or a saved field CSV")
    solve_p.add_argument("--eps", type=float, default=1e-6,
                         help="flux regularization")
    solve_p.add_argument("--tol", type=float, default=1e-8,
                         help="residual tolerance")
    solve_p.add_argument("--out", default="u.csv")
    solve_p.add_argument("--report", default="report.json")
    solve_p.set_defaults(func=_cmd_solve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
