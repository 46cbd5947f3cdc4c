"""Run every subcommand in sequence and finish with the report."""
import argparse
import logging
import sys

from ablab.cli import SUBCOMMANDS, run
from ablab.config import ExperimentConfig
from ablab.errors import AblabError


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", help="JSON config (defaults when omitted)")
    p.add_argument("--outdir")
    p.add_argument("--skip", nargs="*", default=[], choices=SUBCOMMANDS)
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.outdir:
        cfg = cfg.replace(outdir=args.outdir)
    order = [s for s in SUBCOMMANDS if s != "report" and s not in args.skip] + ["report"]
    status = 0
    for sub in order:
        try:
            rep = run(sub, cfg)
            print(f"{sub:12s} ok   {sum(rep.timings.values()):7.2f}s")
        except AblabError as exc:
            print(f"{sub:12s} FAIL {exc}")
            status = 3
    return status


if __name__ == "__main__":
    sys.exit(main())
