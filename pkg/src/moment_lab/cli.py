"""``moment-lab`` command line.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration,
3 numerical guard tripped.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .errors import ConfigError, NumericalGuardError
from .harness import SUITES, execute, load_config, parse_config, resolve_out_dir, set_dotted

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3

log = logging.getLogger("moment_lab")


def _global_flags(suppress: bool = False) -> argparse.ArgumentParser:
    # the subcommand copies must not reset values given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--out", default=d(None), help="output directory (overrides config and $MOMENT_LAB_OUT)")
    g.add_argument("--threads", type=int, default=d(1), help="worker threads for engines/sweeps")
    g.add_argument("--allow-inverted", action="store_true", default=d(False),
                   help="permit omega = 0 and omega^2 < 0")
    return g


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moment-lab", parents=[_global_flags()],
                                 description="Moment dynamics of the time-dependent quantum oscillator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    flags = _global_flags(suppress=True)

    run = sub.add_parser("run", parents=[flags], help="run the engines selected in a config")
    run.add_argument("config")

    ver = sub.add_parser("verify", parents=[flags], help="run a built-in verification suite")
    ver.add_argument("suite", choices=sorted(SUITES))
    ver.add_argument("--grid-n", type=int, default=None, help="oracle suite: grid points")
    ver.add_argument("--pde-dt", type=float, default=None, help="oracle suite: split-step dt")

    sw = sub.add_parser("sweep", parents=[flags], help="run a config over a list of parameter values")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, help="dotted config key, e.g. potential.V4")
    sw.add_argument("--values", required=True, help="comma-separated JSON values")
    return ap


def _guarded(fn):
    try:
        return fn()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalGuardError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD


def cmd_run(args) -> int:
    def go():
        cfg = load_config(args.config, allow_inverted=args.allow_inverted)
        out = resolve_out_dir(args.out, cfg)
        report = execute(cfg, out, threads=args.threads)
        print(f"wrote {', '.join(e + '.csv' for e in cfg.engines)} to {out}")
        if report:
            print(f"max pairwise deviation: {report['max_deviation']:.3e}")
        return EXIT_OK

    return _guarded(go)


def cmd_verify(args) -> int:
    kwargs = {}
    if args.suite == "oracle":
        if args.grid_n is not None:
            kwargs["grid_n"] = args.grid_n
        if args.pde_dt is not None:
            kwargs["pde_dt"] = args.pde_dt

    def go():
        cases = SUITES[args.suite](**kwargs)
        for c in cases:
            print(c.line())
        failed = [c for c in cases if not c.passed]
        print(f"{args.suite}: {len(cases) - len(failed)}/{len(cases)} passed")
        return EXIT_FAIL if failed else EXIT_OK

    return _guarded(go)


def _parse_values(text: str) -> list:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            vals.append(json.loads(tok))
        except json.JSONDecodeError:
            vals.append(tok)
    return vals


def cmd_sweep(args) -> int:
    def go():
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            base = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        values = _parse_values(args.values)
        cfgs = []
        for v in values:
            raw = copy.deepcopy(base)
            set_dotted(raw, args.param, v)
            cfgs.append(parse_config(raw, base_dir=path.parent, allow_inverted=args.allow_inverted))
        root = resolve_out_dir(args.out, cfgs[0])
        dirs = [root / f"{args.param}={v}" for v in values]
        with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
            list(pool.map(lambda cd: execute(cd[0], cd[1]), zip(cfgs, dirs)))
        for d in dirs:
            print(f"wrote {d}")
        return EXIT_OK

    return _guarded(go)


def main(argv=None) -> int:
    logging.basicConfig(format="[%(name)s] %(message)s", level=logging.WARNING)
    args = build_parser().parse_args(argv)
    return {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
