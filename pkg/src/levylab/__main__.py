"""Command line entry: python -m levylab run <config.json> [--threads N] [--out DIR]"""

import argparse
import sys

from .runner import run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="levylab")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", help="path to the JSON experiment config")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads (results are thread-count "
                            "independent)")
    p_run.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, threads=args.threads, out=args.out)
    return 2


if __name__ == "__main__":
    sys.exit(main())
