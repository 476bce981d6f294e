"""Command-line entry points: run / convert / report / synth.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
failure.
"""

from __future__ import annotations

import argparse
import glob
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .data import DataError, convert_for_benchmark, generate_synthetic, read_dataset, write_dataset
from .experiment import report_table, run_experiment

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _build_parser():
    parser = argparse.ArgumentParser(prog="gravel",
                                     description="Config-driven recommendation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment configuration")
    p_run.add_argument("--config", required=True, help="path to the YAML config")
    p_run.add_argument("--dataset", help="override the configured dataset name")
    p_run.add_argument("--model", help="run only this model tag from the config")
    p_run.add_argument("--data-root", default=None,
                       help="base for relative split paths (default: config directory)")
    p_run.add_argument("--results-root", default="results")

    p_conv = sub.add_parser("convert", help="write the seven benchmark files for a dataset")
    p_conv.add_argument("--dataset", required=True, help="dataset directory")

    p_rep = sub.add_parser("report", help="summarize results files into a table")
    p_rep.add_argument("--results", required=True, help="glob of results tsv files")

    p_syn = sub.add_parser("synth", help="generate a planted-block synthetic dataset")
    p_syn.add_argument("--users", type=int, required=True)
    p_syn.add_argument("--items", type=int, required=True)
    p_syn.add_argument("--seed", type=int, required=True)
    p_syn.add_argument("--out", required=True, help="output dataset directory")
    p_syn.add_argument("--blocks", type=int, default=4)
    p_syn.add_argument("--in-block-density", type=float, default=0.25)
    p_syn.add_argument("--cross-density", type=float, default=0.01)
    p_syn.add_argument("--test-fraction", type=float, default=0.2)
    return parser


def _cmd_run(args):
    config_path = Path(args.config)
    if not config_path.exists():
        raise DataError(config_path, 1, "config file does not exist")
    config = parse_config(config_path.read_text(encoding="utf-8"))
    if args.dataset:
        config.dataset = args.dataset
    if args.model:
        wanted = [spec for spec in config.models if spec.tag == args.model]
        if not wanted:
            raise ConfigError(f"model {args.model!r} is not in the configuration")
        config.models = wanted
    data_root = args.data_root if args.data_root is not None else str(config_path.parent)
    run = run_experiment(config, data_root=data_root, results_root=args.results_root)
    print(f"results written to {run.results.path}")
    for row in run.results.rows:
        print(f"  {row.model}\tRecall@20={row.recall:.4f}\tnDCG@20={row.ndcg:.4f}")
    return EXIT_OK


def _cmd_convert(args):
    directory = Path(args.dataset)
    dataset = read_dataset(directory)
    paths = convert_for_benchmark(dataset, directory)
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return EXIT_OK


def _cmd_report(args):
    paths = sorted(glob.glob(args.results, recursive=True))
    if not paths:
        raise DataError(args.results, 1, "no results files match the glob")
    print(report_table(paths), end="")
    return EXIT_OK


def _cmd_synth(args):
    dataset = generate_synthetic(
        num_users=args.users,
        num_items=args.items,
        blocks=args.blocks,
        in_block_density=args.in_block_density,
        cross_density=args.cross_density,
        test_fraction=args.test_fraction,
        seed=args.seed,
    )
    write_dataset(args.out, dataset)
    print(f"wrote dataset with {dataset.interactions()} interactions to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "convert": _cmd_convert,
    "report": _cmd_report,
    "synth": _cmd_synth,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
