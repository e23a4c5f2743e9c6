"""Command line entry point: ``run``, ``sweep``, ``verify`` and ``mnist-fetch``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter

from . import harness, mnist, verify


def _cmd_run(args):
    cfg = harness.load_config(args.config)
    res = harness.run_experiment(cfg)
    print(f"{res.csv_path}: final objective {res.summary['final_objective']:.6g}")
    return 0


def _cmd_sweep(args):
    cfg = harness.load_config(args.config)
    for res in harness.run_sweep(cfg):
        s = res.summary
        print(f"B={s['B']}: final objective {s['final_objective']:.6g} -> {res.csv_path}")
        for thr, c in s["crossings"].items():
            print(f"  F <= {thr}: " + ("not reached" if c is None else f"t={c['t']} features={c['features_processed']}"))
        for frac, entry in s["relative_crossings"].items():
            c = entry["crossing"]
            print(f"  F - F* <= {frac} (F0 - F*): "
                  + ("not reached" if c is None else f"t={c['t']} features={c['features_processed']}"))
    return 0


def _cmd_verify(args):
    rows = verify.run_all(quick=not args.full)
    if args.out:
        verify.write_report_csv(args.out, rows)
    tally = Counter()
    for r in rows:
        tally[(r["check"], r["passed"])] += 1
    failed = 0
    for check in dict.fromkeys(r["check"] for r in rows):
        ok, bad = tally[(check, True)], tally[(check, False)]
        failed += bad
        print(f"{'PASS' if not bad else 'FAIL'} {check}: {ok} ok, {bad} failed")
    return 1 if failed else 0


def _cmd_fetch(args):
    ok = mnist.fetch(args.dir, offline_ok=not args.strict)
    return 0 if ok or not args.strict else 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="rapsa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a config once per block count in B")
    p.add_argument("config")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="run the bound report suite")
    p.add_argument("--out", help="write report rows to this CSV")
    p.add_argument("--full", action="store_true", help="use the full Monte Carlo budgets")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("mnist-fetch", help="download and checksum the MNIST IDX files")
    p.add_argument("--dir", default=None, help="target directory (default: $RAPSA_DATA_DIR)")
    p.add_argument("--strict", action="store_true", help="fail instead of skipping when offline")
    p.set_defaults(func=_cmd_fetch)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
