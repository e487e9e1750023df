"""Command-line runner: ``symlab <subcommand> --config cfg.json [--out DIR] [--seed N] [--n N]``.

Writes ``report.json`` (and CSV tables where the experiment has them) into the
output directory. The exit status is 0 exactly when every check passes, 1 when
a check fails and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

from .experiments import COMMANDS, ConfigError, default_experiment, get_experiment, list_experiments, run
from .linop import OperatorError


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def execute(command: str, config: dict, out: str, seed: int | None = None, n: int | None = None) -> dict:
    """Run the experiment selected by ``config['experiment']`` (or the command default) and write outputs."""
    overrides = dict(config)
    name = overrides.pop("experiment", None) or default_experiment(command)
    exp = get_experiment(name)
    if exp.command != command:
        raise ConfigError(f"field 'experiment': {name!r} belongs to subcommand {exp.command!r}, not {command!r}")
    report, tables = run(name, overrides, seed=seed, n=n)
    written = []
    for table, (header, rows) in tables.items():
        fname = f"{table}.csv"
        _atomic_write(os.path.join(out, fname), _csv_text(header, rows))
        written.append(fname)
    report["outputs"] = ["report.json"] + written
    _atomic_write(os.path.join(out, "report.json"), json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symlab", description="Numerical principal-symbol and trace experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list named experiments")
    for cmd in COMMANDS:
        names = [e[0] for e in list_experiments() if e[1] == cmd]
        p = sub.add_parser(cmd, help=f"experiments: {', '.join(names)}")
        p.add_argument("--config", help="JSON configuration; 'experiment' selects one of: " + ", ".join(names))
        p.add_argument("--out", default=".", help="output directory (default: current directory)")
        p.add_argument("--seed", type=int, help="sample-selection seed")
        p.add_argument("--n", type=int, help="override the grid resolution")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, cmd, desc in list_experiments():
            print(f"{name:24s} {cmd:24s} {desc}")
        return 0
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return 2
    try:
        report = execute(args.command, load_config(args.config), args.out, args.seed, args.n)
    except (ConfigError, OperatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for c in report["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['measured']} ({c['comparator']} {c['threshold']})")
    print(f"{report['experiment']}: {'PASS' if report['pass'] else 'FAIL'} in {report['timing']['seconds']:.2f}s")
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
