from __future__ import annotations

# standard libraries
import concurrent.futures
import copy
import logging
import math
import pathlib
import typing

# third party libraries
import numpy
import numpy.typing
import pandas

# local libraries
from nion.quantile import BayesianScreening
from nion.quantile import CoinOracle
from nion.quantile import Core
from nion.quantile import Hierarchical
from nion.quantile import NaiveSearch
from nion.quantile import RandomizedResponse
from nion.quantile import Shuffle
from nion.utils import Event


PARETO_SHAPE = 1.5
PARETO_SCALE = 2000.0
SUMMARY_COLUMNS = ("protocol", "eps", "B", "n", "trials", "success_rate", "success_std", "mean_abs_error", "p50_abs_error", "p90_abs_error")

_PathLike = typing.Union[str, pathlib.Path]
_SeedType = typing.Union[int, numpy.integer]


def derive_seed(*keys: int) -> int:
    """A 64-bit seed mixed from the keys by a SeedSequence."""
    state = numpy.random.SeedSequence([int(key) for key in keys]).generate_state(1, dtype=numpy.uint64)
    return int(state[0])


def gen_pareto(n: int, B: int, seed: _SeedType) -> Core.Dataset:
    """n Pareto samples (shape 1.5, scale 2000) by inverse transform, rounded and clipped into [1, B]."""
    if n < 1 or B < 2:
        raise ValueError("Pareto: n must be positive and B at least 2.")
    rng = numpy.random.default_rng(seed)
    uniform = 1.0 - rng.random(n)
    samples = PARETO_SCALE * uniform ** (-1.0 / PARETO_SHAPE)
    values = numpy.clip(numpy.rint(samples), 1, B).astype(numpy.int64)
    return Core.Dataset(values, B, {"generator": "pareto", "shape": PARETO_SHAPE, "scale": PARETO_SCALE, "seed": int(seed)})


def gen_uniform_interval(n: int, B: int, seed: _SeedType) -> Core.Dataset:
    """Draw 1 <= l <= r <= B, then n integers uniformly from [l, r]. The interval is kept in the metadata."""
    if n < 1 or B < 2:
        raise ValueError("Uniform interval: n must be positive and B at least 2.")
    rng = numpy.random.default_rng(seed)
    low, high = sorted(int(end) for end in rng.integers(1, B + 1, size=2))
    values = rng.integers(low, high + 1, size=n)
    return Core.Dataset(values, B, {"generator": "uniform-interval", "low": low, "high": high, "seed": int(seed)})


def write_dataset(path: _PathLike, dataset: Core.Dataset) -> None:
    """One value per line after a '# B=<int>' header line."""
    numpy.savetxt(path, dataset.values, fmt="%d", header="B={}".format(dataset.domain_size), comments="# ")


def read_dataset(path: _PathLike) -> Core.Dataset:
    with open(path) as f:
        header = f.readline().strip()
    if not header.startswith("#") or not header.lstrip("# ").startswith("B="):
        raise ValueError("Dataset file: first line must be '# B=<int>'.")
    B = int(header.lstrip("# ")[2:])
    values = numpy.loadtxt(path, dtype=numpy.int64, comments="#", ndmin=1)
    return Core.Dataset(values, B, {"generator": "file", "path": str(path)})


def make_dataset(dataset_spec: str, n: int, B: int, seed: _SeedType) -> Core.Dataset:
    """Build the dataset named by 'pareto', 'uniform-interval' or 'file:PATH'."""
    if dataset_spec == "pareto":
        return gen_pareto(n, B, seed)
    if dataset_spec in ("uniform-interval", "uniform_interval"):
        return gen_uniform_interval(n, B, seed)
    if dataset_spec.startswith("file:"):
        dataset = read_dataset(dataset_spec[len("file:"):])
        if dataset.domain_size != B:
            raise ValueError("Dataset file: B={} does not match the configured B={}.".format(dataset.domain_size, B))
        return dataset
    raise ValueError("Dataset: unknown dataset '{}'.".format(dataset_spec))


def _as_list(value: typing.Any) -> typing.List[typing.Any]:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


class ExperimentConfig:
    """
        One experiment: every protocol at every eps, trials times each, on one dataset.

        read_dict accepts the flat key/value document of a config file; keys mirror the command line flags.
    """

    def __init__(self) -> None:
        self.protocols: typing.List[Core.Protocol] = [Core.Protocol.BAYESS]
        self.n = 2500
        self.B = 4 ** 9
        self.eps: typing.List[float] = [1.0]
        self.delta = 0.0
        self.alpha_test = 0.04
        self.trials = 200
        self.seed = 0
        self.dataset = "pareto"
        self.out: typing.Optional[str] = None
        self.threads = 1
        self.quantile = 0.5
        self.reduction = "direct"
        self.alpha_constant = 0.6
        self.branching = 4
        self.weight_tree = False
        self.strict_amplification = False
        self.regenerate = False
        self.noiseless_virtual = False
        self.final_step = "closest"

    def __repr__(self) -> str:
        return "ExperimentConfig({})".format(self.write_dict())

    def __copy__(self) -> ExperimentConfig:
        return type(self)().read_dict(self.write_dict())

    def read_dict(self, storage_dict: typing.Mapping[str, typing.Any]) -> ExperimentConfig:
        if "protocol" in storage_dict:
            self.protocols = [Core.Protocol(protocol) for protocol in _as_list(storage_dict["protocol"])]
        self.n = int(storage_dict.get("n", self.n))
        self.B = int(storage_dict.get("B", self.B))
        if "eps" in storage_dict:
            self.eps = [float(eps) for eps in _as_list(storage_dict["eps"])]
        self.delta = float(storage_dict.get("delta", self.delta))
        self.alpha_test = float(storage_dict.get("alpha_test", self.alpha_test))
        self.trials = int(storage_dict.get("trials", self.trials))
        self.seed = int(storage_dict.get("seed", self.seed))
        self.dataset = str(storage_dict.get("dataset", self.dataset))
        self.out = storage_dict.get("out", self.out)
        self.threads = int(storage_dict.get("threads", self.threads))
        self.quantile = float(storage_dict.get("quantile", self.quantile))
        self.reduction = str(storage_dict.get("reduction", self.reduction))
        self.alpha_constant = float(storage_dict.get("alpha_constant", self.alpha_constant))
        self.branching = int(storage_dict.get("branching", self.branching))
        self.weight_tree = bool(storage_dict.get("weight_tree", self.weight_tree))
        self.strict_amplification = bool(storage_dict.get("strict_amplification", self.strict_amplification))
        self.regenerate = bool(storage_dict.get("regenerate", self.regenerate))
        self.noiseless_virtual = bool(storage_dict.get("noiseless_virtual", self.noiseless_virtual))
        self.final_step = str(storage_dict.get("final_step", self.final_step))
        self.validate()
        return self  # for convenience

    def write_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "protocol": [protocol.value for protocol in self.protocols],
            "n": self.n,
            "B": self.B,
            "eps": list(self.eps),
            "delta": self.delta,
            "alpha_test": self.alpha_test,
            "trials": self.trials,
            "seed": self.seed,
            "dataset": self.dataset,
            "out": self.out,
            "threads": self.threads,
            "quantile": self.quantile,
            "reduction": self.reduction,
            "alpha_constant": self.alpha_constant,
            "branching": self.branching,
            "weight_tree": self.weight_tree,
            "strict_amplification": self.strict_amplification,
            "regenerate": self.regenerate,
            "noiseless_virtual": self.noiseless_virtual,
            "final_step": self.final_step,
        }

    def validate(self) -> None:
        if not self.protocols:
            raise ValueError("Experiment config: at least one protocol is required.")
        if self.trials < 1:
            raise ValueError("Experiment config: trials must be at least 1.")
        if not self.eps or any(not eps > 0 for eps in self.eps):
            raise ValueError("Experiment config: eps values must be positive.")
        if self.B < 2:
            raise ValueError("Experiment config: B must be at least 2.")
        if self.n < 1:
            raise ValueError("Experiment config: n must be positive.")
        if not 0 < self.alpha_test < 1:
            raise ValueError("Experiment config: alpha_test must lie in (0, 1).")
        if not 0 < self.quantile < 1:
            raise ValueError("Experiment config: quantile must lie in (0, 1).")
        if not 0 <= self.delta < 1:
            raise ValueError("Experiment config: delta must lie in [0, 1).")
        if Core.Protocol.SHUFFLE_NAIVE in self.protocols and self.delta <= 0:
            raise ValueError("Experiment config: the shuffle protocol needs delta > 0.")
        if self.reduction not in ("direct", "padding"):
            raise ValueError("Experiment config: reduction must be 'direct' or 'padding'.")
        if self.alpha_constant <= 0:
            raise ValueError("Experiment config: alpha_constant must be positive.")
        if self.final_step not in ("search", "closest"):
            raise ValueError("Experiment config: final_step must be 'search' or 'closest'.")
        if self.threads < 1:
            raise ValueError("Experiment config: threads must be at least 1.")


def run_median_protocol(protocol: Core.Protocol, dataset: Core.Dataset, eps: float, rng: numpy.random.Generator,
                        config: ExperimentConfig, tau: float,
                        exact_users: typing.Optional[numpy.typing.NDArray[numpy.bool_]] = None) -> Core.CoinResult:
    """Run one protocol for the tau-quantile of the dataset with every user at local budget eps."""
    B = dataset.domain_size
    if protocol == Core.Protocol.NAIVE:
        oracle = CoinOracle.EmpiricalOracle(dataset, rng, RandomizedResponse.RRChannel(eps), exact_users)
        return NaiveSearch.dp_naive_nbs(oracle, B, eps, tau=tau)
    if protocol == Core.Protocol.BAYESS:
        oracle = CoinOracle.EmpiricalOracle(dataset, rng, RandomizedResponse.RRChannel(eps), exact_users)
        return BayesianScreening.bayess_search(oracle, B, eps, tau, config.alpha_constant, config.weight_tree, config.final_step)
    if protocol == Core.Protocol.HIERARCHICAL:
        return Hierarchical.hier_median(dataset, B, eps, rng, config.branching, tau)
    if protocol == Core.Protocol.SHUFFLE_NAIVE:
        return Shuffle.shuffle_nbs(dataset, B, eps, config.delta, rng, config.strict_amplification, tau)
    raise ValueError("Experiment: unknown protocol {}.".format(protocol))


def run_protocol(protocol: Core.Protocol, dataset: Core.Dataset, eps: float, rng: numpy.random.Generator,
                 config: ExperimentConfig) -> Core.CoinResult:
    if config.reduction == "direct":
        return run_median_protocol(protocol, dataset, eps, rng, config, config.quantile)

    def solver(padded: Core.Dataset, exact_users: typing.Optional[numpy.typing.NDArray[numpy.bool_]]) -> Core.CoinResult:
        return run_median_protocol(protocol, padded, eps, rng, config, 0.5, exact_users)

    spec = Core.QuantileSpec(config.quantile, min(config.alpha_test, 0.2499), eps, config.delta)
    return Core.quantile_via_median(solver, dataset, spec, noiseless_virtual=config.noiseless_virtual)


def run_trial(config: ExperimentConfig, protocol: Core.Protocol, eps: float, trial: int,
              dataset: typing.Optional[Core.Dataset]) -> Core.TrialRecord:
    """One protocol run; protocol failures become a failed record with the reason filled in."""
    seed = derive_seed(config.seed, trial)
    if dataset is None:
        dataset = make_dataset(config.dataset, config.n, config.B, derive_seed(config.seed, trial, 1))
    rng = numpy.random.default_rng(seed)
    try:
        result = run_protocol(protocol, dataset, eps, rng, config)
    except (Core.UsersExhausted, Core.ProtocolInfeasible) as e:
        logging.debug("Experiment: %s trial %s failed: %s", protocol.value, trial, e)
        return Core.TrialRecord(protocol, seed, trial, dataset.n, config.B, eps, config.delta, config.alpha_test,
                                None, math.nan, False, 0, "{}: {}".format(type(e).__name__, e))
    abs_error, success = Core.evaluate_trial(dataset, result.index, Core.as_fraction(config.quantile), Core.as_fraction(config.alpha_test))
    return Core.TrialRecord(protocol, seed, trial, dataset.n, config.B, eps, config.delta, config.alpha_test,
                            result.index, float(abs_error), success, result.users_consumed)


class SummaryRow:
    """Success rate and error distribution of one (protocol, eps) cell."""

    def __init__(self, protocol: str, eps: float, B: int, n: int, trials: int, success_rate: float,
                 mean_abs_error: float, p50_abs_error: float, p90_abs_error: float) -> None:
        self.protocol = protocol
        self.eps = eps
        self.B = B
        self.n = n
        self.trials = trials
        self.success_rate = success_rate
        self.mean_abs_error = mean_abs_error
        self.p50_abs_error = p50_abs_error
        self.p90_abs_error = p90_abs_error

    def __repr__(self) -> str:
        return "SummaryRow({} eps={} success={:.3f}±{:.3f})".format(self.protocol, self.eps, self.success_rate, self.success_std)

    @property
    def success_std(self) -> float:
        """Standard deviation of the success rate as a sample average, sqrt(p(1 - p) / trials)."""
        return math.sqrt(self.success_rate * (1 - self.success_rate) / self.trials)

    def write_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "protocol": self.protocol,
            "eps": self.eps,
            "B": self.B,
            "n": self.n,
            "trials": self.trials,
            "success_rate": self.success_rate,
            "success_std": self.success_std,
            "mean_abs_error": self.mean_abs_error,
            "p50_abs_error": self.p50_abs_error,
            "p90_abs_error": self.p90_abs_error,
        }


def records_frame(records: typing.Sequence[Core.TrialRecord]) -> pandas.DataFrame:
    return pandas.DataFrame([record.write_dict() for record in records], columns=list(Core.TRIAL_COLUMNS))


def summarize(frame: pandas.DataFrame) -> typing.List[SummaryRow]:
    """One row per (protocol, eps, B, n) in order of first appearance."""
    rows = list()
    for (protocol, eps, B, n), group in frame.groupby(["protocol", "eps", "B", "n"], sort=False):
        errors = group["abs_error"].dropna()
        rows.append(SummaryRow(str(protocol), float(eps), int(B), int(n), len(group),
                               float(group["success"].astype(bool).mean()),
                               float(errors.mean()) if len(errors) else math.nan,
                               float(errors.quantile(0.5)) if len(errors) else math.nan,
                               float(errors.quantile(0.9)) if len(errors) else math.nan))
    return rows


def summary_frame(rows: typing.Sequence[SummaryRow]) -> pandas.DataFrame:
    return pandas.DataFrame([row.write_dict() for row in rows], columns=list(SUMMARY_COLUMNS))


def write_trials(path: _PathLike, records: typing.Sequence[Core.TrialRecord]) -> None:
    records_frame(records).to_csv(path, index=False)


def read_trials(paths: typing.Iterable[_PathLike]) -> pandas.DataFrame:
    frames = [pandas.read_csv(path) for path in paths]
    if not frames:
        raise ValueError("Report: no trial files.")
    frame = pandas.concat(frames, ignore_index=True)
    if tuple(frame.columns) != Core.TRIAL_COLUMNS:
        raise ValueError("Report: unexpected trial columns {}.".format(list(frame.columns)))
    return frame


class ExperimentResult:

    def __init__(self, records: typing.Sequence[Core.TrialRecord]) -> None:
        self.records = list(records)
        self.summaries = summarize(records_frame(self.records))


class ExperimentRunner:
    """
        Runs an experiment's trials on a thread pool. Results are collected in trial order and
        trial_finished_event fires with each record, from the calling thread, in that order.
        Each trial draws its randomness from a seed derived from the experiment seed and the trial index,
        so the records do not depend on the thread count.
    """

    def __init__(self, config: ExperimentConfig) -> None:
        config.validate()
        self.config = config
        self.trial_finished_event = Event.Event()

    def __units(self) -> typing.List[typing.Tuple[Core.Protocol, float, int]]:
        return [(protocol, eps, trial) for protocol in self.config.protocols for eps in self.config.eps for trial in range(self.config.trials)]

    def trial_seeds(self) -> typing.List[int]:
        seeds = [derive_seed(self.config.seed, trial) for trial in range(self.config.trials)]
        if len(set(seeds)) != len(seeds):
            raise RuntimeError("Experiment: trial seed collision for seed {}.".format(self.config.seed))
        return seeds

    def run(self) -> ExperimentResult:
        config = self.config
        self.trial_seeds()
        dataset = None if config.regenerate else make_dataset(config.dataset, config.n, config.B, config.seed)
        logging.info("Experiment: %s trials of %s on %s", config.trials, [protocol.value for protocol in config.protocols], dataset if dataset else config.dataset)

        def run_unit(unit: typing.Tuple[Core.Protocol, float, int]) -> Core.TrialRecord:
            protocol, eps, trial = unit
            return run_trial(config, protocol, eps, trial, dataset)

        records = list()
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.threads) as executor:
            for record in executor.map(run_unit, self.__units()):
                records.append(record)
                self.trial_finished_event.fire(record)
        result = ExperimentResult(records)
        for row in result.summaries:
            logging.info("Experiment: %s", row)
        if config.out:
            write_trials(config.out, result.records)
        return result


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return ExperimentRunner(config).run()


def sweep_configs(config: ExperimentConfig, n_values: typing.Sequence[int], B_values: typing.Sequence[int],
                  alpha_constants: typing.Optional[typing.Sequence[float]] = None) -> typing.List[ExperimentConfig]:
    """
        One config per (alpha_constant, n, B) triple, sharing everything else, each writing nowhere.

        alpha_constants defaults to the config's own. The configs are ordered by alpha constant first.
    """
    configs = list()
    for alpha_constant in (alpha_constants if alpha_constants is not None else [config.alpha_constant]):
        for n in n_values:
            for B in B_values:
                sweep_config = copy.copy(config)
                sweep_config.alpha_constant = float(alpha_constant)
                sweep_config.n = int(n)
                sweep_config.B = int(B)
                sweep_config.out = None
                sweep_config.validate()
                configs.append(sweep_config)
    return configs


def alpha_constant_path(path: _PathLike, alpha_constant: float) -> pathlib.Path:
    """The trial CSV of one alpha constant in a sweep over several: sweep.csv becomes sweep-alpha0.6.csv."""
    base = pathlib.Path(path)
    return base.with_name("{}-alpha{}{}".format(base.stem, float(alpha_constant), base.suffix))
