"""Confusion counts, detection metrics, and repeated seeded trials."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import fmean
from typing import IO, Iterable, Mapping, Sequence

from . import detector as det
from .errors import AlignmentError, EmptyInput, InvalidParameter
from .ingest import (PREDEFINED, SAMPLE_THEN_SPLIT, FlowTable, downsample_attacks, load_dataset,
                     load_schema, split_train_test, subsample)

log = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "fp_rate", "recall", "precision", "fn_rate", "fp_rate_total")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise InvalidParameter("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn


@dataclass(frozen=True)
class Metrics:
    """Fractions in [0, 1]; ``None`` where the denominator is zero.

    ``fp_rate`` is fp / (fp + tn). ``fp_rate_total`` (fp / total) is kept
    alongside since both definitions are in common use.
    """

    accuracy: float | None
    fp_rate: float | None
    recall: float | None
    precision: float | None
    fn_rate: float | None
    fp_rate_total: float | None


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def confusion(verdicts: Iterable[det.Verdict] | Mapping[str, bool],
              truth: Mapping[str, bool] | None = None, vote: str = "joint") -> ConfusionCounts:
    """Tally predictions against ground truth with attack as the positive class.

    ``verdicts`` is a list of :class:`~flowvote.detector.Verdict` (the
    ``vote`` attribute is used) or a mapping ``flow_id -> predicted attack``.
    Without ``truth`` the verdicts' own ground truth is used.
    """
    if isinstance(verdicts, Mapping):
        predicted = dict(verdicts)
    else:
        verdicts = list(verdicts)
        predicted = {v.flow_id: bool(getattr(v, vote)) for v in verdicts}
        if truth is None:
            if any(v.truth is None for v in verdicts):
                raise AlignmentError("verdicts carry no ground truth; pass truth explicitly")
            truth = {v.flow_id: v.truth for v in verdicts}
    if truth is None:
        raise AlignmentError("no ground truth given")
    if predicted.keys() != truth.keys():
        missing = len(truth.keys() - predicted.keys())
        extra = len(predicted.keys() - truth.keys())
        raise AlignmentError(f"flow ids differ: {missing} without a verdict, {extra} without truth")
    tp = fn = fp = tn = 0
    for fid, attack in truth.items():
        flagged = predicted[fid]
        if attack:
            tp += flagged
            fn += not flagged
        else:
            fp += flagged
            tn += not flagged
    return ConfusionCounts(tp, fn, fp, tn)


def metrics(counts: ConfusionCounts) -> Metrics:
    if counts.total == 0:
        raise EmptyInput("no flows to score")
    c = counts
    return Metrics(
        accuracy=(c.tp + c.tn) / c.total,
        fp_rate=_ratio(c.fp, c.fp + c.tn),
        recall=_ratio(c.tp, c.tp + c.fn),
        precision=_ratio(c.tp, c.tp + c.fp),
        fn_rate=_ratio(c.fn, c.tp + c.fn),
        fp_rate_total=c.fp / c.total,
    )


# --- experiments -----------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSource:
    """Where a dataset lives and how trials draw from it."""

    name: str
    paths: tuple[str, ...]
    mode: str = SAMPLE_THEN_SPLIT
    test_paths: tuple[str, ...] = ()
    schema: str | None = None  # schema name or path; defaults to ``name``
    feature_spec: str | None = None  # defaults to the schema's built-in spec

    def __post_init__(self):
        if self.mode not in (SAMPLE_THEN_SPLIT, PREDEFINED):
            raise InvalidParameter(f"unknown split mode {self.mode!r}")
        if self.mode == PREDEFINED and not self.test_paths:
            raise InvalidParameter(f"{self.name}: predefined mode needs test files")


@dataclass(frozen=True)
class ExperimentConfig:
    detector: det.DetectorConfig = field(default_factory=det.DetectorConfig)
    sample_size: int = 150_000
    train_fraction: float = 0.75
    target_attack_rate: float | None = 0.034
    train_size: int | None = None   # predefined mode: training subsample (None = all)
    test_size: int | None = 17_466  # predefined mode: test subsample (None = all)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrialResult:
    dataset: str
    trial: int
    seed: int
    n_train: int
    counts: ConfusionCounts
    bicluster_counts: ConfusionCounts
    ocsvm_counts: ConfusionCounts
    joint_is_intersection: bool

    @property
    def metrics(self) -> Metrics:
        return metrics(self.counts)

    @property
    def n_flows(self) -> int:
        return self.counts.total

    @property
    def n_attacks(self) -> int:
        return self.counts.positives


REPORT_COLUMNS = ("dataset", "trial", "seed", "n_train", "n_flows", "n_attacks", "tp", "fn", "fp", "tn",
                  *METRIC_NAMES, "bicluster_tp", "bicluster_fp", "ocsvm_tp", "ocsvm_fp")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _mean(values: Sequence[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return fmean(present) if present else None


@dataclass
class ExperimentReport:
    trials: list[TrialResult]
    config: dict = field(default_factory=dict)

    @property
    def seeds(self) -> list[int]:
        return [t.seed for t in self.trials]

    def rows(self) -> list[dict]:
        out = []
        for t in self.trials:
            row = {"dataset": t.dataset, "trial": t.trial, "seed": t.seed, "n_train": t.n_train,
                   "n_flows": t.n_flows, "n_attacks": t.n_attacks, **asdict(t.counts)}
            row.update(asdict(t.metrics))
            row.update(bicluster_tp=t.bicluster_counts.tp, bicluster_fp=t.bicluster_counts.fp,
                       ocsvm_tp=t.ocsvm_counts.tp, ocsvm_fp=t.ocsvm_counts.fp)
            out.append(row)
        return out

    def datasets(self) -> list[str]:
        return list(dict.fromkeys(t.dataset for t in self.trials))

    def dataset_means(self) -> dict[str, dict[str, float | None]]:
        means = {}
        for name in self.datasets():
            ms = [t.metrics for t in self.trials if t.dataset == name]
            means[name] = {k: _mean([getattr(m, k) for m in ms]) for k in METRIC_NAMES}
        return means

    def cross_dataset_means(self) -> dict[str, float | None]:
        per = self.dataset_means()
        return {k: _mean([per[d][k] for d in per]) for k in ("recall", "fp_rate")}

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows():
            writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])

    def summary(self) -> dict:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "trials": self.rows(),
            "dataset_means": self.dataset_means(),
            "cross_dataset_means": self.cross_dataset_means(),
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "report.csv", out / "summary.json"
        with open(csv_path, "w", newline="") as fh:
            self.write_csv(fh)
        json_path.write_text(json.dumps(self.summary(), indent=2) + "\n")
        return csv_path, json_path


class _Loaded:
    """Per-source table cache so repeated trials parse each file once."""

    def __init__(self):
        self._tables: dict[tuple, FlowTable] = {}

    def get(self, paths: tuple[str, ...], schema: str) -> FlowTable:
        key = (paths, schema)
        if key not in self._tables:
            log.info("loading %s", ", ".join(paths))
            self._tables[key] = load_dataset(list(paths), load_schema(schema))
        return self._tables[key]


def prepare_trial(source: DatasetSource, config: ExperimentConfig, seed: int,
                  cache: _Loaded | None = None) -> tuple[FlowTable, FlowTable]:
    """Train and test tables for one seeded trial."""
    cache = cache or _Loaded()
    schema = source.schema or source.name
    rate = config.target_attack_rate
    table = cache.get(source.paths, schema)
    if rate is not None:
        table = downsample_attacks(table, rate, seed)
    if source.mode == SAMPLE_THEN_SPLIT:
        return split_train_test(table, SAMPLE_THEN_SPLIT, seed=seed, sample_size=config.sample_size,
                                train_fraction=config.train_fraction)
    test = cache.get(source.test_paths, schema)
    if rate is not None:
        test = downsample_attacks(test, rate, seed)
    train, test = split_train_test(table, PREDEFINED, test=test)
    if config.train_size is not None:
        train = subsample(train, config.train_size, seed)
    if config.test_size is not None:
        test = subsample(test, config.test_size, seed)
    return train, test


def run_trial(source: DatasetSource, config: ExperimentConfig, trial: int, seed: int,
              cache: _Loaded | None = None) -> TrialResult:
    train, test = prepare_trial(source, config, seed, cache)
    dconf = replace(config.detector, seed=seed)
    if source.feature_spec is not None:
        dconf = replace(dconf, feature_spec=source.feature_spec)
    model = det.train_pipeline(train, dconf)
    verdicts = det.detect(model, test)
    truth = {v.flow_id: v.truth for v in verdicts}
    joint = {v.flow_id for v in verdicts if v.joint}
    both = {v.flow_id for v in verdicts if v.bicluster} & {v.flow_id for v in verdicts if v.ocsvm}
    result = TrialResult(
        dataset=source.name, trial=trial, seed=seed, n_train=len(train),
        counts=confusion(verdicts, truth, "joint"),
        bicluster_counts=confusion(verdicts, truth, "bicluster"),
        ocsvm_counts=confusion(verdicts, truth, "ocsvm"),
        joint_is_intersection=joint == both,
    )
    log.info("%s trial %d (seed %d): %s", source.name, trial, seed, result.counts)
    return result


def run_experiment(datasets: Sequence[DatasetSource], config: ExperimentConfig | None = None,
                   trials: int = 5, base_seed: int = 0) -> ExperimentReport:
    """``trials`` seeded runs per dataset; trial ``t`` uses seed ``base_seed + t``."""
    if trials < 1:
        raise InvalidParameter("trials must be >= 1")
    config = config or ExperimentConfig()
    cache = _Loaded()
    results = []
    for source in datasets:
        for t in range(trials):
            results.append(run_trial(source, config, t, base_seed + t, cache))
    return ExperimentReport(results, {"experiment": config.to_dict(), "base_seed": base_seed,
                                      "trials": trials,
                                      "datasets": [asdict(d) for d in datasets]})
