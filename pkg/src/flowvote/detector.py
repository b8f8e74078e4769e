"""Both detectors over one flow table, merged by a strict AND vote."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from . import bicluster, features, ocsvm
from .errors import DeserializationError, EmptyInput, IncompatibleModel, InvalidParameter, SchemaMismatch
from .features import FeatureSpec, InversionParams, ScalerParams
from .ingest import FlowTable

MODEL_FORMAT = "flowvote.detector"
MODEL_VERSION = 1


@dataclass(frozen=True)
class DetectorConfig:
    nu: float = 0.035
    threshold: float = 0.055
    peel_mode: str = bicluster.THRESHOLD_STOP
    gamma: float | str = "scale"
    tol: float = 1e-4
    max_iter: int = 100_000
    feature_spec: str | None = None  # built-in dataset name or JSON path; None = table's schema
    bicluster_norm: str = "l1"
    bicluster_norm_axis: str = "columns"
    ocsvm_row_norm: str = "l2"  # "none" keeps standardized magnitudes
    reciprocal_eps: float = features.RECIPROCAL_EPS
    seed: int = 0

    def __post_init__(self):
        ocsvm.TrainParams(nu=self.nu, gamma=self.gamma, tol=self.tol, max_iter=self.max_iter)
        if not 0 < self.threshold < 1:
            raise InvalidParameter(f"threshold must lie in (0, 1), got {self.threshold!r}")
        if self.peel_mode not in bicluster.PEEL_MODES:
            raise InvalidParameter(f"unknown peel mode {self.peel_mode!r}")
        if self.bicluster_norm_axis not in ("rows", "columns"):
            raise InvalidParameter("bicluster_norm_axis must be 'rows' or 'columns'")
        if self.bicluster_norm not in ("l1", "l2"):
            raise InvalidParameter("bicluster_norm must be 'l1' or 'l2'")
        if self.ocsvm_row_norm not in ("l1", "l2", "none"):
            raise InvalidParameter("ocsvm_row_norm must be 'l1', 'l2' or 'none'")

    def train_params(self) -> ocsvm.TrainParams:
        return ocsvm.TrainParams(nu=self.nu, gamma=self.gamma, tol=self.tol, max_iter=self.max_iter)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectorConfig":
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class DetectorModel:
    config: DetectorConfig
    schema_name: str
    spec: FeatureSpec
    standardizer: ScalerParams
    inversion: InversionParams
    minmax: ScalerParams
    svm: ocsvm.OcsvmModel = field(repr=False)


@dataclass(frozen=True)
class Verdict:
    flow_id: str
    bicluster: bool
    ocsvm: bool
    truth: bool | None = None

    @property
    def joint(self) -> bool:
        return self.bicluster and self.ocsvm


def ocsvm_view(model: DetectorModel, raw: features.FeatureMatrix) -> features.FeatureMatrix:
    scaled = features.apply_scaler(raw, model.standardizer)
    if model.config.ocsvm_row_norm == "none":
        return scaled
    return features.normalize_rows(scaled, model.config.ocsvm_row_norm)


def bicluster_view(model: DetectorModel, raw: features.FeatureMatrix) -> features.FeatureMatrix:
    inverted = features.invert_for_bicluster(raw, params=model.inversion)
    scaled = features.apply_scaler(inverted, model.minmax)
    if model.config.bicluster_norm_axis == "columns":
        return features.normalize_columns(scaled, model.config.bicluster_norm)
    return features.normalize_rows(scaled, model.config.bicluster_norm)


def _spec_for(table: FlowTable, config: DetectorConfig) -> FeatureSpec:
    return features.load_feature_spec(config.feature_spec or table.schema.name)


def train_pipeline(train: FlowTable, config: DetectorConfig | None = None) -> DetectorModel:
    """Fit both scalers on ``train`` and train the One-Class SVM.

    Bi-clustering has nothing to learn beyond the inversion maxima and the
    min-max range, which are fitted here too.
    """
    config = config or DetectorConfig()
    if len(train) == 0:
        raise EmptyInput("training table is empty")
    spec = _spec_for(train, config)
    raw = features.build_feature_matrix(train, spec)
    standardizer = features.fit_scaler(raw, "standardize")
    inversion = features.fit_inversion(raw, spec, config.reciprocal_eps)
    minmax = features.fit_scaler(features.invert_for_bicluster(raw, params=inversion), "min-max")
    partial = DetectorModel(config, train.schema.name, spec, standardizer, inversion, minmax, None)
    svm = ocsvm.train_ocsvm(ocsvm_view(partial, raw), config.train_params())
    return DetectorModel(config, train.schema.name, spec, standardizer, inversion, minmax, svm)


@dataclass(frozen=True, eq=False)
class Detection:
    """Everything one detection pass produced, for callers that want more than votes."""

    verdicts: list[Verdict]
    ocsvm_scores: np.ndarray = field(repr=False)
    graph: bicluster.BipartiteGraph = field(repr=False)
    subgraph: bicluster.Subgraph = field(repr=False)
    trace: bicluster.PeelTrace = field(repr=False)


def run_detection(model: DetectorModel, test: FlowTable) -> Detection:
    if test.schema.name != model.schema_name:
        raise SchemaMismatch(f"model was trained on {model.schema_name}, table is {test.schema.name}")
    if len(test) == 0:
        raise EmptyInput("test table is empty")
    raw = features.build_feature_matrix(test, model.spec)
    scores = np.atleast_1d(ocsvm.decision_function(model.svm, ocsvm_view(model, raw)))
    svm_votes = scores < 0
    graph = bicluster.build_bigraph(bicluster_view(model, raw))
    sub, _, trace = bicluster.peel(graph, model.config.threshold, model.config.peel_mode)
    in_cluster = np.zeros(len(raw), dtype=bool)
    in_cluster[list(sub.flows)] = True
    truth = features.flow_truth(test)
    verdicts = [Verdict(fid, bool(b), bool(s), truth.get(fid))
                for fid, b, s in zip(raw.row_ids, in_cluster, svm_votes)]
    return Detection(verdicts, scores, graph, sub, trace)


def detect(model: DetectorModel, test: FlowTable) -> list[Verdict]:
    """Per-flow votes of both detectors plus the joint (AND) label."""
    return run_detection(model, test).verdicts


def write_verdicts(verdicts: Iterable[Verdict], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["flow_id", "bicluster", "ocsvm", "joint", "truth"])
    for v in verdicts:
        truth = "" if v.truth is None else ("attack" if v.truth else "benign")
        writer.writerow([v.flow_id, _label(v.bicluster), _label(v.ocsvm), _label(v.joint), truth])


def _label(anomalous: bool) -> str:
    return "anomaly" if anomalous else "benign"


# --- persistence ---------------------------------------------------------------------

def model_to_dict(model: DetectorModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "schema": model.schema_name,
        "config": model.config.to_dict(),
        "feature_spec": model.spec.to_dict(),
        "standardizer": asdict(model.standardizer),
        "inversion": asdict(model.inversion),
        "minmax": asdict(model.minmax),
        "ocsvm": model.svm.to_dict(),
    }


def model_from_dict(doc: dict) -> DetectorModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DeserializationError("not a detector model document")
    if doc.get("version") != MODEL_VERSION:
        raise IncompatibleModel(f"detector model version {doc.get('version')!r} unsupported "
                                f"(expected {MODEL_VERSION})")
    try:
        def scaler(d):
            return ScalerParams(d["kind"], tuple(d["columns"]), tuple(d["loc"]), tuple(d["scale"]),
                                d.get("fitted_on", "train"))

        inv = doc["inversion"]
        return DetectorModel(
            config=DetectorConfig.from_dict(doc["config"]),
            schema_name=doc["schema"],
            spec=FeatureSpec.from_dict(doc["feature_spec"]),
            standardizer=scaler(doc["standardizer"]),
            inversion=InversionParams(tuple(inv["columns"]), tuple(inv["transforms"]),
                                      tuple(inv["column_max"]), inv["epsilon"]),
            minmax=scaler(doc["minmax"]),
            svm=ocsvm.OcsvmModel.from_dict(doc["ocsvm"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DeserializationError(f"malformed detector model ({exc})") from None


def save_model(model: DetectorModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path) -> DetectorModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DeserializationError(f"{path}: corrupt model file ({exc})") from None
    return model_from_dict(doc)
