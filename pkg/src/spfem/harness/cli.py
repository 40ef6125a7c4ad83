"""``spfem`` command line: one subcommand per experiment, plus ``all``."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from .config import EXPERIMENTS, ConfigError, make_config

log = logging.getLogger("spfem")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(";", ",").split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spfem", description=__doc__)
    ap.add_argument("experiment", choices=EXPERIMENTS + ("all",))
    ap.add_argument("--config", help="INI file with [common] and per-experiment sections")
    ap.add_argument("--lambda", dest="lambdas", type=_floats, help="comma-separated weight exponents")
    ap.add_argument("--p", dest="ps", type=_floats, help="comma-separated integrability exponents")
    ap.add_argument("--generations", type=int)
    ap.add_argument("--base-n", dest="base_n", type=int)
    ap.add_argument("--domain", choices=("unit_square", "pentagon"))
    ap.add_argument("--features", help="e.g. 'point 0.5 0.5' or 'segment 0.25 0.5 0.75 0.5'")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default=None, help="output directory (default: results)")
    ap.add_argument("--set", dest="options", action="append", default=[], metavar="KEY=VALUE",
                    help="experiment option, repeatable (e.g. --set depth=9)")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    from .experiments import run  # heavy imports after argument parsing

    options = {}
    for item in args.options:
        key, sep, val = item.partition("=")
        if not sep:
            print(f"spfem: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        options[key.strip()] = val.strip()
    overrides = dict(lambdas=args.lambdas, ps=args.ps, generations=args.generations, base_n=args.base_n,
                     domain=args.domain, features=args.features, seed=args.seed, workers=args.workers,
                     out=args.out, options=options or None)
    names = EXPERIMENTS if args.experiment == "all" else (args.experiment,)
    ok = True
    for name in names:
        try:
            cfg = make_config(name, args.config, **overrides)
            t0 = time.perf_counter()
            rep = run(cfg)
        except ConfigError as e:
            print(f"spfem {name}: configuration error: {e}", file=sys.stderr)
            return 2
        csv_path, _ = rep.write(cfg.out)
        log.info("%s: %d rows -> %s (%.1f s)", name, len(rep.rows), csv_path, time.perf_counter() - t0)
        for c in rep.checks:
            tag = "FLAGGED" if c.flagged else ("PASS" if c.passed else "FAIL")
            log.info("  [%s] %s %s", tag, c.name, c.detail)
        ok &= rep.passed
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
