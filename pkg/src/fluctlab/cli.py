"""Command-line entry point.

Exit codes: 0 success with every verdict passing, 1 a verdict failed,
2 usage or configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from importlib.resources import files
from pathlib import Path

from . import __version__
from .errors import NumericalAbort
from .reporting import IncompleteRun, TamperedRun, emit_report
from .scenario.config import load_config
from .scenario.specs import ConfigError
from .statlab.pool import resolve_threads

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

RUN_COMMANDS = {
    "simulate": "simulate particle trajectories and write position snapshots",
    "meanfield": "solve the stochastic Fokker-Planck equation and write density fields",
    "spde": "run the fluctuation SPDE and write test-function pairings",
    "converge": "moment scaling of the H^-alpha norms in N",
    "elln": "exponential-moment estimates for product test functions",
    "clt": "conditional CLT: particle versus SPDE pairings for one W",
    "increments": "fourth-moment scaling of fluctuation increments in the lag",
    "crossterms": "martingale covariance and cross-term null checks",
    "entropy": "marginal KL proxy per N",
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="scenario file (INI) or run manifest (JSON); "
                                               "defaults to the shipped configuration")
    p.add_argument("--out", type=Path, help="output directory (created; must be empty)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--runs", type=int, help="replicas / runs")
    p.add_argument("--threads", type=int, help="worker threads (default $FLUCTLAB_THREADS or 1)")
    p.add_argument("--stride", type=int, help="snapshot stride in steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluctlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fluctlab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    subs = {name: sub.add_parser(name, help=text, description=text) for name, text in RUN_COMMANDS.items()}
    for p in subs.values():
        _common(p)
    subs["simulate"].add_argument("--N", type=int, help="particle count (default: largest in N_list)")
    subs["spde"].add_argument("--eta0", choices=("zero", "gaussian", "projected"))
    subs["spde"].add_argument("--path-id", type=int, dest="path_id")
    subs["elln"].add_argument("--p", type=_int_list, help="comma-separated powers (default 2,4)")
    subs["elln"].add_argument("--samples", type=int)
    subs["elln"].add_argument("--kappa", type=float)
    subs["elln"].add_argument("--phi-sup", type=float, dest="phi_sup")
    subs["elln"].add_argument("--N-list", type=_int_list, dest="N_list")
    subs["clt"].add_argument("--N", type=int)
    subs["clt"].add_argument("--path-id", type=int, dest="path_id")
    subs["increments"].add_argument("--N", type=int)
    subs["increments"].add_argument("--lags", type=_int_list, help="lags in steps")
    subs["increments"].add_argument("--alpha", type=float)
    subs["crossterms"].add_argument("--N", type=int)

    rep = sub.add_parser("report", help="verify a run directory and write a markdown/gnuplot report")
    rep.add_argument("run_dir", type=Path)

    rp = sub.add_parser("replay", help="rerun a recorded manifest and compare artifact hashes")
    rp.add_argument("manifest", type=Path, help="manifest.json or its run directory")
    rp.add_argument("--out", type=Path, required=True)
    rp.add_argument("--threads", type=int)

    acc = sub.add_parser("acceptance", help="run the acceptance criteria")
    acc.add_argument("--out", type=Path, required=True)
    acc.add_argument("--only", type=_int_list, help="comma-separated criterion numbers")
    acc.add_argument("--threads", type=int)
    return parser


# per-command CLI option -> job parameter
_PARAM_KEYS = {
    "simulate": ("runs", "stride", "N"),
    "meanfield": ("runs", "stride"),
    "spde": ("runs", "stride", "eta0", "path_id"),
    "converge": ("runs",),
    "elln": ("p", "samples", "kappa", "phi_sup", "N_list"),
    "clt": ("runs", "N", "path_id"),
    "increments": ("runs", "stride", "N", "lags", "alpha"),
    "crossterms": ("runs", "N"),
    "entropy": ("runs",),
}


def _load(args):
    path = args.config or files("fluctlab.configs") / "default.ini"
    cfg = load_config(path)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.stride is not None:
        changes["stride"] = args.stride
    if args.runs is not None:
        changes["replicas"] = args.runs
    return cfg.replace(**changes) if changes else cfg


def _print_verdicts(verdicts) -> int:
    for v in verdicts:
        print(v.line())
    return EXIT_OK if all(v.passed for v in verdicts) else EXIT_FAIL


def _run(args) -> int:
    from .jobs import execute, resolve_params

    cfg = _load(args)
    threads = resolve_threads(args.threads)
    given = {k: getattr(args, k, None) for k in _PARAM_KEYS[args.command]}
    params = resolve_params(args.command, cfg, given)
    out = args.out or Path("runs") / args.command
    result, _ = execute(args.command, cfg, params, out, threads)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {out}")
    return _print_verdicts(result.verdicts)


def _report(args) -> int:
    path = emit_report(args.run_dir)
    print(f"wrote {path}")
    return EXIT_OK


def _replay(args) -> int:
    from .jobs import replay

    result, _, diff = replay(args.manifest, args.out, resolve_threads(args.threads))
    if diff:
        print("artifacts differ from the manifest: " + ", ".join(diff))
        return EXIT_FAIL
    print("all artifact hashes reproduced")
    return _print_verdicts(result.verdicts)


def _acceptance(args) -> int:
    from .jobs import run_acceptance

    outcomes = run_acceptance(args.out, args.only, resolve_threads(args.threads), echo=print)
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_FAIL


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help, 2 for usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    handler = {"report": _report, "replay": _replay, "acceptance": _acceptance}.get(args.command, _run)
    try:
        return handler(args)
    except (NumericalAbort, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ConfigError, IncompleteRun, TamperedRun, FileNotFoundError, FileExistsError,
            IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
