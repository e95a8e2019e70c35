"""Command line entry point: ``detlab run | convergence | emit``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load
from .reports import dumps_csv, dumps_record, loads_record

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_INVALID = 2


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _load(args):
    cfg = load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _cmd_run(args) -> int:
    from .runner import run

    rep = run(_load(args), jobs=args.jobs)
    _write(dumps_csv(rep) if args.format == "csv" else dumps_record(rep), args.out)
    summary = rep.summary()
    for tier, ok in summary["passed"].items():
        print(f"{tier}: max residual {summary['max_residual'][tier]:.3e} "
              f"(tol {rep.tolerances[tier]:.1e}) {'pass' if ok else 'FAIL'}", file=sys.stderr)
    if summary["excluded"]:
        print(f"excluded (flagged) reports: {summary['excluded']}", file=sys.stderr)
    return EXIT_OK if summary["passed_all"] else EXIT_TOLERANCE


def _cmd_convergence(args) -> int:
    from .runner import convergence

    table = convergence(_load(args), jobs=args.jobs)
    _write(table.dumps(args.format), args.out)
    return EXIT_OK


def _cmd_emit(args) -> int:
    try:
        text = Path(args.record).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read record: {exc.strerror or exc}", args.record) from None
    try:
        rep = loads_record(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"not a run record ({exc})", args.record) from None
    _write(dumps_csv(rep) if args.format == "csv" else dumps_record(rep), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="detlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"detlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "record"), default="csv")
    for name, fn, text in (("run", _cmd_run, "run an experiment config"),
                           ("convergence", _cmd_convergence, "run the config's resolution ladder")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--jobs", type=int, default=1, help="threads over z values")
        sp.add_argument("--seed", type=int, default=None, help="seed for randomized trials")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("emit", parents=[common], help="re-emit a stored record")
    sp.add_argument("record", help="structured record (JSON) written by 'run --format record'")
    sp.set_defaults(func=_cmd_emit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
