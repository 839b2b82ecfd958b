from __future__ import annotations

# standard libraries
import argparse
import json
import logging
import sys
import typing

# third party libraries
import pandas

# local libraries
from nion.quantile import Core
from nion.quantile import Experiment


def _add_experiment_arguments(parser: argparse.ArgumentParser, *, grid: bool) -> None:
    parser.add_argument("--config", help="JSON file of experiment settings; flags override it")
    parser.add_argument("--protocol", action="append", choices=[protocol.value for protocol in Core.Protocol])
    if grid:
        parser.add_argument("--n", type=int, action="append", help="user count (repeatable)")
        parser.add_argument("--B", type=int, action="append", help="domain size (repeatable)")
        parser.add_argument("--alpha-constant", dest="alpha_constant", type=float, action="append",
                            help="learning rate constant (repeatable); several values write one CSV per value")
    else:
        parser.add_argument("--n", type=int, help="user count")
        parser.add_argument("--B", type=int, help="domain size")
        parser.add_argument("--alpha-constant", dest="alpha_constant", type=float)
    parser.add_argument("--eps", type=float, action="append", help="privacy budget (repeatable)")
    parser.add_argument("--delta", type=float)
    parser.add_argument("--alpha-test", dest="alpha_test", type=float)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--dataset", help="pareto, uniform-interval or file:PATH")
    parser.add_argument("--out", help="trial CSV path")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--quantile", type=float)
    parser.add_argument("--reduction", choices=["direct", "padding"])
    parser.add_argument("--branching", type=int)
    parser.add_argument("--final-step", dest="final_step", choices=["search", "closest"])
    parser.add_argument("--weight-tree", dest="weight_tree", action="store_true", default=None)
    parser.add_argument("--strict-amplification", dest="strict_amplification", action="store_true", default=None)
    parser.add_argument("--regenerate", action="store_true", default=None)
    parser.add_argument("--noiseless-virtual", dest="noiseless_virtual", action="store_true", default=None)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nionquantile", description="Simulate private quantile estimation protocols.")
    parser.add_argument("--verbose", action="store_true", help="log at debug level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen_parser = subparsers.add_parser("gen", help="write a generated dataset file")
    gen_parser.add_argument("--dataset", choices=["pareto", "uniform-interval"], default="pareto")
    gen_parser.add_argument("--n", type=int, required=True)
    gen_parser.add_argument("--B", type=int, required=True)
    gen_parser.add_argument("--seed", type=int, default=0)
    gen_parser.add_argument("--out", required=True)

    _add_experiment_arguments(subparsers.add_parser("run", help="run one experiment"), grid=False)
    _add_experiment_arguments(subparsers.add_parser("sweep", help="run an experiment over a grid of n, B and alpha constants"), grid=True)

    report_parser = subparsers.add_parser("report", help="summarize trial CSVs")
    report_parser.add_argument("paths", nargs="+")
    report_parser.add_argument("--out", help="summary CSV path; printed when omitted")
    return parser


_SCALAR_KEYS = ("delta", "alpha_test", "trials", "seed", "dataset", "out", "threads", "quantile", "reduction",
                "alpha_constant", "branching", "final_step", "weight_tree", "strict_amplification", "regenerate",
                "noiseless_virtual")


def config_from_arguments(args: argparse.Namespace) -> typing.Tuple[Experiment.ExperimentConfig, typing.Dict[str, typing.Any]]:
    """Merge the config file with the flags that were given. Returns the config and the merged document."""
    document: typing.Dict[str, typing.Any] = dict()
    if args.config:
        with open(args.config) as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError("Config file: expected a JSON object.")
        document.update(loaded)
    for key in ("protocol", "eps", "n", "B") + _SCALAR_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            document[key] = value
    grid_document = dict(document)
    # sweep takes lists of n, B and alpha_constant; the config holds the first of each
    for key in ("n", "B", "alpha_constant"):
        if isinstance(grid_document.get(key), list):
            grid_document[key] = grid_document[key][0]
    return Experiment.ExperimentConfig().read_dict(grid_document), document


def _run(args: argparse.Namespace) -> int:
    config, _ = config_from_arguments(args)
    result = Experiment.run_experiment(config)
    if not config.out:
        Experiment.records_frame(result.records).to_csv(sys.stdout, index=False)
    return 0


def _sweep(args: argparse.Namespace) -> int:
    config, document = config_from_arguments(args)
    n_values = document.get("n", config.n)
    B_values = document.get("B", config.B)
    alpha_values = document.get("alpha_constant", config.alpha_constant)
    n_values = n_values if isinstance(n_values, list) else [n_values]
    B_values = B_values if isinstance(B_values, list) else [B_values]
    alpha_values = alpha_values if isinstance(alpha_values, list) else [alpha_values]
    if len(set(alpha_values)) > 1 and not config.out:
        raise ValueError("Sweep: --out is required with several alpha constants.")
    sweep_configs = Experiment.sweep_configs(config, n_values, B_values, alpha_values)
    records: typing.Dict[float, typing.List[Core.TrialRecord]] = dict()
    for sweep_config in sweep_configs:
        records.setdefault(sweep_config.alpha_constant, list()).extend(Experiment.run_experiment(sweep_config).records)
    if len(records) > 1:
        assert config.out
        for alpha_constant, alpha_records in records.items():
            Experiment.write_trials(Experiment.alpha_constant_path(config.out, alpha_constant), alpha_records)
    elif config.out:
        Experiment.write_trials(config.out, next(iter(records.values())))
    else:
        Experiment.records_frame(next(iter(records.values()))).to_csv(sys.stdout, index=False)
    return 0


def _gen(args: argparse.Namespace) -> int:
    dataset = Experiment.make_dataset(args.dataset, args.n, args.B, args.seed)
    Experiment.write_dataset(args.out, dataset)
    logging.info("Gen: wrote %s to %s (%s)", dataset, args.out, dataset.metadata)
    return 0


def _report(args: argparse.Namespace) -> int:
    frame = Experiment.read_trials(args.paths)
    summary = Experiment.summary_frame(Experiment.summarize(frame))
    if args.out:
        summary.to_csv(args.out, index=False)
    else:
        with pandas.option_context("display.max_columns", None, "display.width", 200):
            print(summary.to_string(index=False))
    return 0


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    commands = {"gen": _gen, "run": _run, "sweep": _sweep, "report": _report}
    try:
        return commands[args.command](args)
    except (ValueError, OSError) as e:
        logging.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
