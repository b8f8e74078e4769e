"""``flowvote`` command line: ingest, train, detect, evaluate, report.

Settings come from a flat INI file (``--config``) whose sections and keys
mirror :class:`RunConfig`. Precedence, highest first: command-line flag,
environment variable (only ``FLOWVOTE_OUT`` for the output directory),
config file, built-in default.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

from . import __version__, detector, evaluation, ingest
from .errors import FlowVoteError, InvalidParameter

log = logging.getLogger("flowvote")

OUT_ENV = "FLOWVOTE_OUT"
DATASETS = ("unsw-nb15", "nsl-kdd")


def _paths(value: str) -> tuple[str, ...]:
    return tuple(p for p in value.replace(",", " ").split() if p)


def _opt_int(value: str) -> int | None:
    return None if value.strip().lower() in ("", "none", "all") else int(value)


def _opt_float(value: str) -> float | None:
    return None if value.strip().lower() in ("", "none") else float(value)


def _opt_str(value: str) -> str | None:
    return value.strip() or None


def _gamma(value: str) -> float | str:
    return value if value == "scale" else float(value)


# section, key, parser; the key doubles as the RunConfig field name
_KEYS = {
    "data": {"unsw_nb15": _paths, "nsl_kdd_train": _paths, "nsl_kdd_test": _paths,
             "unsw_schema": str, "nsl_schema": str},
    "features": {"unsw_feature_spec": _opt_str, "nsl_feature_spec": _opt_str},
    "detector": {"nu": float, "threshold": float, "peel_mode": str, "gamma": _gamma, "tol": float,
                 "max_iter": int, "bicluster_norm": str, "bicluster_norm_axis": str,
                 "ocsvm_row_norm": str, "reciprocal_eps": float},
    "split": {"sample_size": int, "train_fraction": float, "target_attack_rate": _opt_float,
              "nsl_train_size": _opt_int, "nsl_test_size": _opt_int},
    "run": {"trials": int, "seed": int, "out": str},
}


@dataclass(frozen=True)
class RunConfig:
    unsw_nb15: tuple[str, ...] = ()
    nsl_kdd_train: tuple[str, ...] = ()
    nsl_kdd_test: tuple[str, ...] = ()
    unsw_schema: str = "unsw-nb15"
    nsl_schema: str = "nsl-kdd"
    unsw_feature_spec: str | None = None
    nsl_feature_spec: str | None = None
    nu: float = 0.035
    threshold: float = 0.055
    peel_mode: str = "threshold-stop"
    gamma: float | str = "scale"
    tol: float = 1e-4
    max_iter: int = 100_000
    bicluster_norm: str = "l1"
    bicluster_norm_axis: str = "columns"
    ocsvm_row_norm: str = "l2"
    reciprocal_eps: float = 1e-6
    sample_size: int = 150_000
    train_fraction: float = 0.75
    target_attack_rate: float | None = 0.034
    nsl_train_size: int | None = None
    nsl_test_size: int | None = 17_466
    trials: int = 5
    seed: int = 0
    out: str = "results"

    def detector_config(self, feature_spec: str | None = None) -> detector.DetectorConfig:
        return detector.DetectorConfig(
            nu=self.nu, threshold=self.threshold, peel_mode=self.peel_mode, gamma=self.gamma,
            tol=self.tol, max_iter=self.max_iter, feature_spec=feature_spec,
            bicluster_norm=self.bicluster_norm, bicluster_norm_axis=self.bicluster_norm_axis,
            ocsvm_row_norm=self.ocsvm_row_norm, reciprocal_eps=self.reciprocal_eps, seed=self.seed)

    def experiment_config(self) -> evaluation.ExperimentConfig:
        return evaluation.ExperimentConfig(
            detector=self.detector_config(), sample_size=self.sample_size,
            train_fraction=self.train_fraction, target_attack_rate=self.target_attack_rate,
            train_size=self.nsl_train_size, test_size=self.nsl_test_size)

    def sources(self, which: str) -> list[evaluation.DatasetSource]:
        out = []
        if which in ("unsw-nb15", "all"):
            if not self.unsw_nb15:
                raise InvalidParameter("no UNSW-NB15 files configured ([data] unsw_nb15 or --unsw-nb15)")
            out.append(evaluation.DatasetSource(
                "unsw-nb15", self.unsw_nb15, ingest.SAMPLE_THEN_SPLIT, schema=self.unsw_schema,
                feature_spec=self.unsw_feature_spec))
        if which in ("nsl-kdd", "all"):
            if not (self.nsl_kdd_train and self.nsl_kdd_test):
                raise InvalidParameter("NSL-KDD needs train and test files "
                                       "([data] nsl_kdd_train/nsl_kdd_test)")
            out.append(evaluation.DatasetSource(
                "nsl-kdd", self.nsl_kdd_train, ingest.PREDEFINED, self.nsl_kdd_test,
                schema=self.nsl_schema, feature_spec=self.nsl_feature_spec))
        return out

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        values = asdict(self)
        for section, keys in _KEYS.items():
            parser[section] = {}
            for key in keys:
                v = values[key]
                if isinstance(v, tuple):
                    v = " ".join(v)
                parser[section][key] = "" if v is None else str(v)
        lines = []
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in parser[section].items()]
            lines.append("")
        return "\n".join(lines)


def read_config_file(path: str | os.PathLike) -> dict:
    """Parse an INI file into RunConfig field overrides; unknown keys are errors."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise InvalidParameter(f"{path}: {exc}") from None
    overrides = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise InvalidParameter(f"{path}: unknown section [{section}]")
        for key, raw in parser[section].items():
            if key not in _KEYS[section]:
                raise InvalidParameter(f"{path}: unknown key {key!r} in [{section}]")
            try:
                overrides[key] = _KEYS[section][key](raw)
            except ValueError:
                raise InvalidParameter(f"{path}: bad value {raw!r} for {key}") from None
    return overrides


def resolve_config(path: str | None, flags: dict, env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    values = read_config_file(path) if path else {}
    if env.get(OUT_ENV):
        values["out"] = env[OUT_ENV]
    values.update({k: v for k, v in flags.items() if v is not None})
    names = {f.name for f in fields(RunConfig)}
    return RunConfig(**{k: v for k, v in values.items() if k in names})


# --- argument parsing ------------------------------------------------------------------

def _detector_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    g.add_argument("--nu", type=float)
    g.add_argument("--threshold", type=float)
    g.add_argument("--peel-mode", dest="peel_mode", choices=("threshold-stop", "best-score"))
    g.add_argument("--gamma", type=_gamma)
    g.add_argument("--tol", type=float)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--bicluster-norm-axis", dest="bicluster_norm_axis", choices=("rows", "columns"))
    g.add_argument("--ocsvm-row-norm", dest="ocsvm_row_norm", choices=("l1", "l2", "none"))
    g.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowvote", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="parse CSV files into a flow-table file")
    p.add_argument("--dataset", required=True, help="schema name (unsw-nb15, nsl-kdd) or schema JSON path")
    p.add_argument("--input", nargs="+", required=True, help="CSV file(s)")
    p.add_argument("--out", required=True, help="flow-table file to write")
    p.add_argument("--target-attack-rate", dest="target_attack_rate", type=float,
                   help="downsample attacks to this rate")
    p.add_argument("--sample-size", dest="sample_size", type=int, help="seeded uniform subsample")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="fit a detector model on a flow table")
    p.add_argument("--config")
    p.add_argument("--input", required=True, help="training flow-table file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--feature-spec", dest="feature_spec", help="feature spec name or JSON path")
    _detector_flags(p)

    p = sub.add_parser("detect", help="write per-flow verdicts for a table")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="flow-table file")
    p.add_argument("--out", required=True, help="verdict CSV to write")
    p.add_argument("--trace", help="also write the peeling trace as CSV")

    p = sub.add_parser("evaluate", help="run the seeded multi-trial experiment")
    p.add_argument("--config")
    p.add_argument("--dataset", choices=(*DATASETS, "all"), default="all")
    p.add_argument("--trials", type=int)
    p.add_argument("--out", help=f"output directory (env {OUT_ENV})")
    p.add_argument("--unsw-nb15", dest="unsw_nb15", nargs="+")
    p.add_argument("--nsl-kdd-train", dest="nsl_kdd_train", nargs="+")
    p.add_argument("--nsl-kdd-test", dest="nsl_kdd_test", nargs="+")
    p.add_argument("--sample-size", dest="sample_size", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--target-attack-rate", dest="target_attack_rate", type=float)
    p.add_argument("--nsl-train-size", dest="nsl_train_size", type=int)
    p.add_argument("--nsl-test-size", dest="nsl_test_size", type=int)
    _detector_flags(p)

    p = sub.add_parser("report", help="print the per-dataset averages of a finished run")
    p.add_argument("--input", required=True, help="directory written by evaluate")
    return parser


_RUN_FLAGS = {f.name for f in fields(RunConfig)}


def _flag_values(args: argparse.Namespace) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k in _RUN_FLAGS and v is not None:
            out[k] = tuple(v) if isinstance(v, list) else v
    return out


# --- subcommands -----------------------------------------------------------------------

def _cmd_ingest(args) -> int:
    schema = ingest.load_schema(args.dataset)
    table = ingest.load_dataset(args.input, schema)
    if args.target_attack_rate is not None:
        table = ingest.downsample_attacks(table, args.target_attack_rate, args.seed)
    if args.sample_size is not None:
        table = ingest.subsample(table, args.sample_size, args.seed)
    ingest.save_table(table, args.out)
    print(f"wrote {len(table)} records ({table.n_attacks} attacks) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = resolve_config(args.config, _flag_values(args), env={})
    table = ingest.load_table(args.input)
    model = detector.train_pipeline(table, cfg.detector_config(args.feature_spec))
    detector.save_model(model, args.out)
    svm = model.svm
    print(f"trained on {len(table)} records: {svm.n_support} support vectors, "
          f"{svm.n_iter} iterations, nu={model.config.nu}; wrote {args.out}")
    return 0


def _cmd_detect(args) -> int:
    model = detector.load_model(args.model)
    table = ingest.load_table(args.input)
    result = detector.run_detection(model, table)
    with open(args.out, "w", newline="") as fh:
        detector.write_verdicts(result.verdicts, fh)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            result.trace.write_csv(fh, result.graph)
    n_joint = sum(v.joint for v in result.verdicts)
    print(f"{len(result.verdicts)} flows, {n_joint} joint anomalies; wrote {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = resolve_config(args.config, _flag_values(args))
    report = evaluation.run_experiment(cfg.sources(args.dataset), cfg.experiment_config(),
                                       cfg.trials, cfg.seed)
    report.config["run_config"] = asdict(cfg)
    out = Path(cfg.out)
    csv_path, json_path = report.write(out)
    (out / "run.cfg").write_text(cfg.to_ini())
    _print_means(report.summary())
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _pct(v) -> str:
    return "     n/a" if v is None else f"{100 * v:7.2f}%"


def _print_means(summary: dict) -> None:
    print(f"{'dataset':<12}{'accuracy':>9}{'fp_rate':>9}{'recall':>9}{'precision':>10}")
    for name, m in summary["dataset_means"].items():
        print(f"{name:<12}{_pct(m['accuracy']):>9}{_pct(m['fp_rate']):>9}{_pct(m['recall']):>9}"
              f"{_pct(m['precision']):>10}")
    cross = summary["cross_dataset_means"]
    print(f"{'overall':<12}{'':>9}{_pct(cross['fp_rate']):>9}{_pct(cross['recall']):>9}")


def _cmd_report(args) -> int:
    path = Path(args.input)
    summary = json.loads((path / "summary.json").read_text())
    with open(path / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{len(rows)} trials, seeds {summary['seeds']}")
    _print_means(summary)
    return 0


_COMMANDS = {"ingest": _cmd_ingest, "train": _cmd_train, "detect": _cmd_detect,
             "evaluate": _cmd_evaluate, "report": _cmd_report}


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except FlowVoteError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
