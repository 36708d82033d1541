"""Command-line entry point: ``covnoise <suite> --config FILE [--out DIR] [--seed N] [--seeds N] [--jobs N]``.

Exit status is 0 on success, 1 for invalid input (bad config, missing file)
and 2 for runtime failures (divergence, I/O).
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import InvalidInput, IoFailure, RuntimeFailure
from .experiments import SUITES, run_task
from .harness.config import KINDS, parse_config

DEFAULT_OUT = "covnoise_out"


class _Parser(argparse.ArgumentParser):
    # usage errors are invalid input: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="covnoise", description="Gradient-noise covariance experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} suite")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (default: the config's 'out', then $COVNOISE_OUT, then ./covnoise_out)")
        p.add_argument("--seed", type=int, help="base seed, overrides the config")
        p.add_argument("--seeds", type=int, help="number of replicate seeds, overrides the config")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")
    return parser


def load_config(args):
    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InvalidInput(f"config file not found: {path}")
    except OSError as e:
        raise InvalidInput(f"cannot read config file {path}: {e}")
    cfg = parse_config(text)
    if cfg.kind != args.command:
        raise InvalidInput(f"{path} describes a {cfg.kind!r} experiment, not {args.command!r}")
    if args.seed is not None and args.seed < 0:
        raise InvalidInput("--seed must be nonnegative")
    if args.seeds is not None and args.seeds < 1:
        raise InvalidInput("--seeds must be >= 1")
    if args.jobs < 1:
        raise InvalidInput("--jobs must be >= 1")
    return cfg.with_overrides(args.seed, args.seeds)


def output_root(args, cfg):
    return Path(args.out or cfg.out or os.environ.get("COVNOISE_OUT") or DEFAULT_OUT)


def execute(tasks, jobs):
    if jobs == 1 or len(tasks) == 1:
        return [run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def write_outputs(root, files):
    for rel in sorted(files):
        path = root / rel
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as f:
                f.write(files[rel])
        except OSError as e:
            raise IoFailure(f"cannot write {path}: {e}") from e


def dispatch(args):
    cfg = load_config(args)
    suite = SUITES[cfg.kind]
    results = execute(suite.tasks(cfg), args.jobs)
    outcome = suite.assemble(cfg, results)
    root = output_root(args, cfg)
    write_outputs(root, outcome.files)
    for line in outcome.lines:
        print(line)
    print(f"{cfg.kind}: wrote {len(outcome.files)} files under {root}")
    if outcome.failures:
        for msg in outcome.failures:
            print(f"covnoise: run failed: {msg}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except InvalidInput as e:
        print(f"covnoise: invalid input: {e}", file=sys.stderr)
        return 1
    except (RuntimeFailure, OSError) as e:
        print(f"covnoise: runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
