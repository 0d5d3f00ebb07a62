"""Command-line front end.

Verbs: ``table1``, ``curve``, ``simulate``, ``verify-bound``.  Payloads go to
``--out`` (or ``$SQKD_OUT_DIR/<verb>.<ext>``) with a sidecar
``<out>.manifest.json``; without either they are printed to stdout.

Exit codes: 0 success, 1 domain or solver failure, 2 I/O or config failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import ConfigError, DomainError
from .keyrate import curve_to_csv, rate_curve, threshold_q
from .protocol import load_config, run_trials, summarize
from .verify import verify_bound

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2
GRID = (0.5, 1.0, 2.0)
OUT_DIR_ENV = "SQKD_OUT_DIR"


def _fmt_param(v: float) -> str:
    return f"{v:g}"


def _emit(args, payload: str, ext: str, params: dict, started: float) -> None:
    out = args.out
    if out is None and os.environ.get(OUT_DIR_ENV):
        out = str(Path(os.environ[OUT_DIR_ENV]) / f"{args.command}.{ext}")
    if out is None:
        sys.stdout.write(payload)
        return
    path = Path(out)
    path.write_text(payload)
    manifest = {
        "command": args.command,
        "parameters": params,
        "seed": args.seed,
        "version": __version__,
        "outputs": [str(path)],
        "duration_s": round(time.perf_counter() - started, 6),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def cmd_table1(args) -> int:
    started = time.perf_counter()
    if (args.zeta is None) != (args.xi is None):
        print("error: --zeta and --xi must be given together", file=sys.stderr)
        return EXIT_DOMAIN
    cells = [(args.zeta, args.xi)] if args.zeta is not None else [(z, x) for z in GRID for x in GRID]

    results, failed = [], []
    for z, x in cells:
        try:
            results.append((z, x, round(threshold_q(z, x), args.precision)))
        except DomainError as exc:
            failed.append((z, x, str(exc)))
            results.append((z, x, None))

    if args.zeta is None:
        print("Q_Z \\ Q_X " + "".join(f"{_fmt_param(x) + 'Q':>10}" for x in GRID))
        for i, z in enumerate(GRID):
            row = results[3 * i: 3 * i + 3]
            cells_txt = "".join(f"{'fail' if q is None else f'{100 * q:.2f}%':>10}" for _, _, q in row)
            print(f"{_fmt_param(z) + 'Q':>10}" + cells_txt)
    else:
        z, x, q = results[0]
        print(f"zeta={_fmt_param(z)} xi={_fmt_param(x)} Q_max={'fail' if q is None else f'{100 * q:.2f}%'}")
    for z, x, msg in failed:
        print(f"error: cell zeta={z}, xi={x}: {msg}", file=sys.stderr)

    if args.format == "json":
        payload = json.dumps([{"zeta": z, "xi": x, "q_threshold": q} for z, x, q in results], sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["zeta", "xi", "q_threshold"])
        for z, x, q in results:
            w.writerow([_fmt_param(z), _fmt_param(x), "" if q is None else f"{q:.{args.precision}f}"])
        payload = buf.getvalue()
    if args.out is not None or os.environ.get(OUT_DIR_ENV):
        _emit(args, payload, args.format, {"zeta": args.zeta, "xi": args.xi, "precision": args.precision}, started)
    return EXIT_DOMAIN if failed else EXIT_OK


def cmd_curve(args) -> int:
    started = time.perf_counter()
    curve = rate_curve(args.zeta, args.xi, args.q_max, args.steps)
    if args.format == "json":
        payload = json.dumps([{"q": float(f"{q:.12g}"), "r_tilde": float(f"{r:.12g}")} for q, r in curve]) + "\n"
    else:
        payload = curve_to_csv(curve)
    params = {"zeta": args.zeta, "xi": args.xi, "q_max": args.q_max, "steps": args.steps}
    _emit(args, payload, args.format, params, started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    config, channel = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    transcripts = run_trials(config, channel, args.trials, args.jobs)
    report = summarize(transcripts).to_dict()
    report["config"] = {"path": str(args.config), "seed": config.seed, "n": config.n, "N": config.big_n, "m": config.m,
                        "channel": channel.kind}
    if args.transcripts:
        report["transcripts"] = [t.to_dict() for t in transcripts]
    payload = json.dumps(report, sort_keys=True) + "\n"
    _emit(args, payload, "json", {"config": str(args.config), "trials": args.trials,
                                  "transcripts": args.transcripts}, started)
    return EXIT_OK


def cmd_verify_bound(args) -> int:
    started = time.perf_counter()
    seed = 0 if args.seed is None else args.seed
    report = verify_bound(args.samples, args.d1, args.d2, seed, args.jobs, args.include_identity)
    payload = json.dumps(report, sort_keys=True) + "\n"
    params = {"samples": args.samples, "d1": args.d1, "d2": args.d2, "include_identity": args.include_identity}
    _emit(args, payload, "json", params, started)
    n_bad = len(report["violations"])
    print(f"samples={report['samples']} min_slack={report['min_slack']:.6g} "
          f"min_overlap_slack={report['min_overlap_slack']:.6g} violations={n_bad}", file=sys.stderr)
    return EXIT_DOMAIN if n_bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master RNG seed")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent samples")

    parser = argparse.ArgumentParser(prog="sqkd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table1", parents=[common], help="noise thresholds on the (zeta, xi) grid")
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--precision", type=int, default=10, help="decimals of Q in the CSV payload")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("curve", parents=[common], help="r_tilde against Q for Q_Z = zeta Q, Q_X = xi Q")
    p.add_argument("--zeta", type=float, required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--q-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=101)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("simulate", parents=[common], help="run the protocol from a config file")
    p.add_argument("config", type=Path)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--transcripts", action="store_true", help="include every transcript in the report")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-bound", parents=[common], help="check the bound against random collective attacks")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--d1", type=int, default=2)
    p.add_argument("--d2", type=int, default=2)
    p.add_argument("--include-identity", action="store_true", help="also report the identity attack")
    p.set_defaults(func=cmd_verify_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
