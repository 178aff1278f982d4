"""Command-line front end: ``qwdiff <command> [--config PATH] [--seed N] [--out DIR] [--serial]``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical error.
"""
import argparse
import json
import logging
import sys

from . import pipeline
from .config import explain, load_config, dump_config
from .errors import QWDiffError

STAGES = {
    "kernels": pipeline.cmd_kernels,
    "forward": pipeline.cmd_forward,
    "train": pipeline.cmd_train,
    "generate": pipeline.cmd_generate,
    "evaluate": pipeline.cmd_evaluate,
    "run-all": pipeline.cmd_run_all,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("--serial", action="store_true",
                        help="reproducibility mode: no parallel sweep cells")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qwdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(STAGES) + ["sweep"]:
        sub.add_parser(name, parents=[common])
    cfg = sub.add_parser("config", parents=[common], help="print the resolved configuration")
    cfg.add_argument("--explain", action="store_true",
                     help="list every key with its default and published value")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config" and args.explain:
        sys.stdout.write(explain())
        return 0
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    if args.command == "config":
        sys.stdout.write(dump_config(cfg))
        return 0
    run_ = pipeline.Run(cfg)
    if args.command == "sweep":
        result = pipeline.cmd_sweep(run_, serial=args.serial)
    elif args.command == "train" or args.command == "run-all":
        progress = None
        if args.verbose:
            def progress(epoch, loss):
                logging.getLogger("qwdiff.train").info("epoch %d loss %.5f", epoch + 1, loss)
        result = STAGES[args.command](run_, progress)
    else:
        result = STAGES[args.command](run_)
    if isinstance(result, dict):
        print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def main(argv=None):
    try:
        return run(argv)
    except QWDiffError as e:
        print(f"qwdiff: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"qwdiff: I/O error: {e}", file=sys.stderr)
        return 3
    except ArithmeticError as e:
        print(f"qwdiff: numerical error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
