"""Command-line driver.

Every subcommand takes its parameters as flags, optionally seeded from a JSON
file given with ``--config`` (flags win). Output goes to ``--out``, else to
``$XCUBE_OUTPUT_DIR/<subcommand>.<ext>`` when that variable is set, else to
stdout. CSV outputs start with ``#`` comment lines echoing the full config;
JSON outputs carry it under the ``"config"`` key.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from xcube import __version__

log = logging.getLogger("xcube")

OUTPUT_DIR_ENV = "XCUBE_OUTPUT_DIR"

MC_COLUMNS = ["branch", "beta", "u", "u_err", "cv", "cv_err", "m", "m_err", "acc_rate", "L",
              "seed", "sweeps"]
EXACT_COLUMNS = ["beta", "logZ", "u", "cv", "ge", "fidelity(dbeta)", "w_plus_avg"]
OP_COLUMNS = ["beta", "op", "op_err", "m", "m_err", "m4", "corner_count"]


class UsageError(Exception):
    pass


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _config_dict(args) -> dict:
    skip = {"func", "config", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args, text: str, ext: str):
    path = args.out
    if path is None and os.environ.get(OUTPUT_DIR_ENV):
        path = Path(os.environ[OUTPUT_DIR_ENV]) / f"{args.command}.{ext}"
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _emit_csv(args, columns, rows):
    buf = io.StringIO()
    buf.write(f"# xcube {__version__} {args.command}\n")
    buf.write(f"# config: {json.dumps(_config_dict(args), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _emit(args, buf.getvalue(), "csv")


def _emit_json(args, payload: dict):
    doc = {"config": _config_dict(args), **payload}
    _emit(args, json.dumps(doc, indent=2, default=_json_default) + "\n", "json")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(type(o).__name__)


def _betas(args):
    from xcube.plaquette_mc import beta_grid

    return beta_grid(args.beta_min, args.beta_max, args.steps)


def _membrane(args, geometry):
    from xcube.duality import Membrane

    if args.membrane_spec:
        try:
            return Membrane.load(args.membrane_spec)
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"bad membrane spec {args.membrane_spec}: {exc}") from exc
    # default: square of side L/2 centred in the middle z-plane
    L = geometry.L
    side = max(1, L // 2)
    start = (L - side) // 2
    return Membrane.rectangle("Z", L // 2, (start, start), (side, side))


# -- subcommands ---------------------------------------------------------------------


def cmd_gsd(args):
    from xcube.lattice import build_geometry
    from xcube.stabilizer import build_stabilizers, degeneracy_exponent, stabilizer_ranks

    lines = []
    for L in args.L:
        stabs = build_stabilizers(build_geometry(L))
        k = degeneracy_exponent(stabs)
        r = stabilizer_ranks(stabs)
        lines.append(f"L={L} k={k} degeneracy=2^{k} x_rank={r['x_rank']} z_rank={r['z_rank']} "
                     f"x_constraints={r['x_constraints']} z_constraints={r['z_constraints']}\n")
    _emit(args, "".join(lines), "txt")
    return 0


def cmd_syndrome_demo(args):
    from xcube.lattice import build_geometry
    from xcube.stabilizer import mobility_experiments

    _emit_json(args, mobility_experiments(build_geometry(args.L), args.length))
    return 0


def cmd_exact_scan(args):
    from xcube.exact import (build_ensemble, ensemble_stats, fidelity_exact,
                             global_entanglement, heat_capacity, one_qubit_diagonals)
    from xcube.lattice import build_geometry

    ens = build_ensemble(build_geometry(args.L), max_rank=args.max_rank)
    rows = []
    for beta in _betas(args):
        st = ensemble_stats(ens, beta)
        ge, _ = global_entanglement(ens, beta)
        w_plus = 1.0 - one_qubit_diagonals(ens, beta)
        rows.append([beta, st.logZ, st.u, heat_capacity(st), ge,
                     fidelity_exact(ens, beta, args.dbeta), w_plus.mean()])
    _emit_csv(args, EXACT_COLUMNS, rows)
    return 0


def _mc_row(point, args):
    return [point.branch, point.beta, point.u, point.u_err, point.cv, point.cv_err, point.m,
            point.m_err, point.acc_rate, args.L, args.seed, args.sweeps]


def cmd_mc_scan(args):
    from xcube.plaquette_mc import mc_scan

    points = mc_scan(args.L, _betas(args), args.sweeps, args.seed, start=args.start,
                     thermalization=args.thermalization, measure_every=args.measure_every,
                     bc=args.bc, workers=args.workers)
    _emit_csv(args, MC_COLUMNS, [_mc_row(p, args) for p in points])
    return 0


def _hysteresis(args, corner_sets=()):
    from xcube.plaquette_mc import hysteresis_scan

    return hysteresis_scan(args.L, args.beta_min, args.beta_max, args.steps, args.sweeps,
                           args.seed, thermalization=args.thermalization,
                           measure_every=args.measure_every, bc=args.bc,
                           corner_sets=corner_sets, workers=args.workers)


def cmd_hysteresis(args):
    result = _hysteresis(args)
    _emit_csv(args, MC_COLUMNS, [_mc_row(p, args) for p in result.rows()])
    return 0


def cmd_order_parameter(args):
    from xcube.duality import corner_set, foliated_order_parameter
    from xcube.lattice import build_geometry
    from xcube.plaquette_mc import MCConfig, SpinLattice, run

    geometry = build_geometry(args.L)
    membrane = _membrane(args, geometry)
    corners = sorted(corner_set(membrane, geometry))
    rows = []
    if args.exact:
        from xcube.exact import build_ensemble

        ens = build_ensemble(geometry, max_rank=args.max_rank)
        for beta in args.beta:
            op = foliated_order_parameter(ens, membrane, geometry, beta=beta)
            rows.append([beta, op.value, op.error, "nan", "nan", "nan", op.corner_count])
    else:
        seeds = np.random.SeedSequence(args.seed).spawn(len(args.beta))
        for beta, seq in zip(args.beta, seeds):
            cfg = MCConfig(beta=beta, sweeps=args.sweeps,
                           thermalization=args.thermalization if args.thermalization is not None
                           else args.sweeps // 5,
                           measure_every=args.measure_every, start=args.start)
            series = run(SpinLattice(args.L, args.bc), cfg, rng=np.random.default_rng(seq),
                         corner_sets=[corners])
            op = foliated_order_parameter(series, membrane, geometry, compare_m4=True)
            if op.warning:
                log.warning("membrane corners closer than L/4; m^4 comparison not meaningful")
            rows.append([beta, op.value, op.error, op.m, op.m_err, op.m4, op.corner_count])
    _emit_csv(args, OP_COLUMNS, rows)
    return 0


def cmd_transition_report(args):
    from xcube.duality import corner_set, transition_report
    from xcube.lattice import build_geometry

    geometry = build_geometry(args.L)
    membrane = _membrane(args, geometry)
    result = _hysteresis(args, corner_sets=[sorted(corner_set(membrane, geometry))])
    report = transition_report(result, window=(args.window_min, args.window_max),
                               bracket=(args.bracket_min, args.bracket_max))
    report["membrane"] = membrane.to_dict()
    report["scan"] = [vars(p) for p in result.rows()]
    _emit_json(args, report)
    return 0


def cmd_verify(args):
    from xcube.verify import run_all

    failed = 0
    lines = []
    for name, ok, detail, seconds in run_all(quick=args.quick):
        failed += not ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({seconds:.1f}s)\n")
    lines.append(f"{len(lines) - failed}/{len(lines)} checks passed\n")
    _emit(args, "".join(lines), "txt")
    return 1 if failed else 0


# -- parser -------------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON file with default values for this subcommand")
    p.add_argument("--out", help="output file (default: stdout or $%s)" % OUTPUT_DIR_ENV)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_grid(p, beta_min, beta_max, steps):
    p.add_argument("--beta-min", type=float, default=beta_min)
    p.add_argument("--beta-max", type=float, default=beta_max)
    p.add_argument("--steps", type=int, default=steps, help="number of beta grid points")


def _add_mc(p, sweeps, bc="periodic"):
    p.add_argument("--sweeps", type=int, default=sweeps)
    p.add_argument("--thermalization", type=int, default=None,
                   help="default: sweeps // 5")
    p.add_argument("--measure-every", type=int, default=5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--bc", choices=["periodic", "fixed-plus"], default=bc)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xcube", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gsd", help="ground-state degeneracy exponent k = log2(GSD)")
    p.add_argument("--L", type=int, nargs="+", default=[3])
    _add_common(p)
    p.set_defaults(func=cmd_gsd)

    p = sub.add_parser("syndrome-demo", help="excitation mobility report (JSON)")
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--length", type=int, default=3)
    _add_common(p)
    p.set_defaults(func=cmd_syndrome_demo)

    p = sub.add_parser("exact-scan", help="exact observables by structure enumeration (CSV)")
    p.add_argument("--L", type=int, default=3)
    _add_grid(p, 0.0, 1.0, 21)
    p.add_argument("--dbeta", type=float, default=0.01)
    p.add_argument("--max-rank", type=int, default=26)
    _add_common(p)
    p.set_defaults(func=cmd_exact_scan)

    p = sub.add_parser("mc-scan", help="independent Metropolis chains on a beta grid (CSV)")
    p.add_argument("--L", type=int, default=8)
    _add_grid(p, 0.1, 0.5, 9)
    _add_mc(p, 20_000)
    p.add_argument("--start", choices=["hot", "cold"], default="hot")
    _add_common(p)
    p.set_defaults(func=cmd_mc_scan)

    p = sub.add_parser("hysteresis", help="ascending/descending annealing branches (CSV)")
    p.add_argument("--L", type=int, default=10)
    _add_grid(p, 0.48, 0.62, 29)
    _add_mc(p, 20_000)
    _add_common(p)
    p.set_defaults(func=cmd_hysteresis)

    p = sub.add_parser("order-parameter", help="foliated membrane order parameter (CSV)")
    p.add_argument("--L", type=int, default=12)
    p.add_argument("--beta", type=float, nargs="+", default=[0.65])
    p.add_argument("--membrane-spec", help='JSON {"normal": "Z", "plane": k, "cells": [[a, b], ...]}')
    p.add_argument("--start", choices=["hot", "cold"], default="cold")
    p.add_argument("--exact", action="store_true", help="use structure enumeration (L <= 3)")
    p.add_argument("--max-rank", type=int, default=26)
    _add_mc(p, 20_000, bc="fixed-plus")
    _add_common(p)
    p.set_defaults(func=cmd_order_parameter)

    p = sub.add_parser("transition-report", help="hysteresis scan summarised as JSON")
    p.add_argument("--L", type=int, default=10)
    _add_grid(p, 0.48, 0.62, 29)
    _add_mc(p, 20_000)
    p.add_argument("--membrane-spec")
    p.add_argument("--window-min", type=float, default=0.48)
    p.add_argument("--window-max", type=float, default=0.62)
    p.add_argument("--bracket-min", type=float, default=0.50)
    p.add_argument("--bracket-max", type=float, default=0.62)
    _add_common(p)
    p.set_defaults(func=cmd_transition_report)

    p = sub.add_parser("verify", help="cross-engine oracle suite; exit 1 on failure")
    p.add_argument("--quick", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(overrides, dict):
            parser.error("config file must hold a JSON object")
        known = set(vars(args))
        bad = {k.replace("-", "_") for k in overrides} - known
        if bad:
            parser.error(f"unknown config keys: {sorted(bad)}")
        # file values become defaults; flags given on the command line still win
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        subparser.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    return parser, args


def main(argv=None) -> int:
    parser, args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ValueError as exc:
        print(f"xcube {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
