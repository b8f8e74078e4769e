"""Per-flow feature vectors and the two preprocessing paths.

OCSVM path: standardize, then l2-normalize rows.
Bi-clustering path: invert features so that large means suspicious, min-max
scale to [0, 1], then l1-normalize (columns by default, see
:func:`normalize_columns`).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (EmptyGroup, FeatureResolutionError, InvalidParameter, SchemaMismatch,
                     TransformDomainError)
from .ingest import IS_ATTACK, KEY_FIELDS, ROW, FlowKey, FlowRecord, FlowTable, group_positions

STATS = ("sum", "mean", "median", "min", "max", "value")
TRANSFORMS = ("identity", "max-minus", "reciprocal")
PROVENANCES = ("raw", "inverted", "scaled", "normalized-l1", "normalized-l2",
               "normalized-l1-columns", "normalized-l2-columns")
FOUR_POINT = ("mean", "median", "min", "max")

RECIPROCAL_EPS = 1e-6


# --- flow summaries ---------------------------------------------------------------

@dataclass(frozen=True)
class FlowSummary:
    key: FlowKey | None
    sums: Mapping[str, float]
    four_point: Mapping[str, tuple[float, float, float, float]]
    is_attack: bool = False
    size: int = 1


def summarize_flow(group: Sequence[FlowRecord], columns: Iterable[str] | None = None) -> FlowSummary:
    """Totals and (mean, median, min, max) of each numeric column over a group."""
    if not group:
        raise EmptyGroup("cannot summarize an empty group")
    key = group[0].key
    if any(r.key != key for r in group):
        raise InvalidParameter("records of one group must share a five-tuple")
    if columns is None:
        columns = [c for c, v in group[0].values.items() if isinstance(v, (int, float))]
    sums, four = {}, {}
    for col in columns:
        series = np.array([r.values[col] for r in group], dtype=float)
        sums[col] = float(series.sum())
        four[col] = (float(series.mean()), float(np.median(series)),
                     float(series.min()), float(series.max()))
    return FlowSummary(key, sums, four, any(r.is_attack for r in group), len(group))


# --- feature spec -------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureDef:
    name: str
    column: str
    stat: str
    transform: str = "identity"


@dataclass(frozen=True)
class DerivedColumn:
    """Per-record ratio ``numerator / denominator`` (``zero_division`` when 0)."""

    numerator: str
    denominator: str
    zero_division: float = 0.0


@dataclass(frozen=True)
class FeatureSpec:
    dataset: str
    features: tuple[FeatureDef, ...]
    derived: Mapping[str, DerivedColumn] = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise InvalidParameter("feature names must be unique")
        for f in self.features:
            if f.stat not in STATS:
                raise InvalidParameter(f"feature {f.name}: unknown statistic {f.stat!r}")
            if f.transform not in TRANSFORMS:
                raise InvalidParameter(f"feature {f.name}: unknown transform {f.transform!r}")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def transforms(self) -> list[str]:
        return [f.transform for f in self.features]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "derived": {k: vars(v) for k, v in self.derived.items()},
            "features": [vars(f) for f in self.features],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureSpec":
        return cls(
            dataset=doc["dataset"],
            features=tuple(FeatureDef(**f) for f in doc["features"]),
            derived={k: DerivedColumn(**v) for k, v in (doc.get("derived") or {}).items()},
        )


def load_feature_spec(name_or_path: str | os.PathLike) -> FeatureSpec:
    """Built-in spec by dataset name (``unsw-nb15``, ``nsl-kdd``) or a JSON path."""
    if str(name_or_path) in ("unsw-nb15", "nsl-kdd"):
        text = resources.files("flowvote.data").joinpath(f"features_{name_or_path}.json").read_text()
    else:
        text = Path(name_or_path).read_text()
    return FeatureSpec.from_dict(json.loads(text))


# --- feature matrix ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    row_ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray = field(repr=False)
    provenance: str = "raw"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 and values.size == 0:
            values = values.reshape(len(self.row_ids), len(self.columns))
        if values.shape != (len(self.row_ids), len(self.columns)):
            raise InvalidParameter(
                f"values shape {values.shape} does not match {len(self.row_ids)} rows x "
                f"{len(self.columns)} columns")
        if not np.all(np.isfinite(values)):
            raise InvalidParameter("feature matrix contains NaN or infinite values")
        if self.provenance not in PROVENANCES:
            raise InvalidParameter(f"unknown provenance {self.provenance!r}")
        values.setflags(write=False)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __len__(self) -> int:
        return len(self.row_ids)

    def replace(self, values: np.ndarray, provenance: str) -> "FeatureMatrix":
        return FeatureMatrix(self.row_ids, self.columns, values, provenance)

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["flow_id", *self.columns])
        for rid, row in zip(self.row_ids, self.values):
            writer.writerow([rid, *(repr(float(v)) for v in row)])


def _resolve(spec: FeatureSpec, table: FlowTable) -> pd.DataFrame:
    schema = table.schema
    frame = table.frame
    numeric = {c.name for c in schema.columns
               if c.type in ("number", "flag", "port") and c.role != "label"}
    extra = {}
    for name, d in spec.derived.items():
        for part in (d.numerator, d.denominator):
            if part not in numeric:
                raise FeatureResolutionError(name, f"derived column {name!r} needs numeric column {part!r}")
        num = frame[d.numerator].to_numpy(dtype=float)
        den = frame[d.denominator].to_numpy(dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            extra[name] = np.where(den != 0, num / np.where(den != 0, den, 1.0), d.zero_division)
    for f in spec.features:
        if f.column not in numeric and f.column not in extra:
            raise FeatureResolutionError(f.name, f"feature {f.name!r}: column {f.column!r} is not a "
                                                 f"numeric column of schema {schema.name}")
        if f.stat == "value" and schema.grouping:
            raise FeatureResolutionError(f.name, f"feature {f.name!r}: grouped schema needs a summary statistic")
        if f.stat != "value" and not schema.grouping:
            raise FeatureResolutionError(f.name, f"feature {f.name!r}: schema {schema.name} is not grouped")
    cols = {f.column for f in spec.features}
    data = {c: (extra[c] if c in extra else frame[c].to_numpy(dtype=float)) for c in cols}
    return pd.DataFrame(data)


def build_feature_matrix(flows: FlowTable | Sequence[FlowSummary], spec: FeatureSpec) -> FeatureMatrix:
    """One row per flow, one column per spec feature, provenance ``raw``.

    A grouped table (UNSW-NB15) is summarized per five-tuple; a
    flow-separated table (NSL-KDD) yields one row per record. A list of
    :class:`FlowSummary` objects is also accepted.
    """
    if not isinstance(flows, FlowTable):
        return _matrix_from_summaries(list(flows), spec)
    data = _resolve(spec, flows)
    if not flows.schema.grouping:
        values = np.column_stack([data[f.column].to_numpy() for f in spec.features]) \
            if len(data) else np.zeros((0, len(spec.features)))
        return FeatureMatrix(record_ids(flows), spec.names, values)
    groups = group_positions(flows)
    codes = np.empty(len(flows), dtype=np.int64)
    for g, pos in enumerate(groups):
        codes[pos] = g
    grouped = data.groupby(codes, sort=True)
    cols = []
    for f in spec.features:
        agg = grouped[f.column].agg(f.stat)
        cols.append(agg.to_numpy(dtype=float))
    values = np.column_stack(cols) if groups else np.zeros((0, len(spec.features)))
    return FeatureMatrix(flow_ids(flows, groups), spec.names, values)


def _matrix_from_summaries(summaries: list[FlowSummary], spec: FeatureSpec) -> FeatureMatrix:
    rows = []
    for s in summaries:
        row = []
        for f in spec.features:
            if f.stat == "sum":
                source = s.sums
            else:
                source = s.four_point
            if f.column not in source:
                raise FeatureResolutionError(f.name)
            if f.stat == "sum":
                row.append(source[f.column])
            elif f.stat == "value":
                row.append(source[f.column][0])
            else:
                row.append(source[f.column][FOUR_POINT.index(f.stat)])
        rows.append(row)
    ids = [str(s.key) if s.key is not None else str(i) for i, s in enumerate(summaries)]
    return FeatureMatrix(ids, spec.names, np.array(rows, dtype=float).reshape(len(rows), len(spec.features)))


def record_ids(table: FlowTable) -> list[str]:
    return [f"r{int(r)}" for r in table.frame[ROW]]


def flow_ids(table: FlowTable, groups: list[np.ndarray] | None = None) -> list[str]:
    """Flow identifiers in the row order :func:`build_feature_matrix` uses."""
    if not table.schema.grouping:
        return record_ids(table)
    if groups is None:
        groups = group_positions(table)
    ident = table.schema.identity
    frame = table.frame
    cols = [frame[ident[f]].to_numpy() for f in KEY_FIELDS]
    out = []
    for pos in groups:
        p = pos[0]
        out.append(str(FlowKey(str(cols[0][p]), str(cols[1][p]), int(cols[2][p]),
                               int(cols[3][p]), str(cols[4][p]))))
    return out


def flow_truth(table: FlowTable) -> dict[str, bool]:
    """Ground truth per flow id; a grouped flow is an attack if any record is."""
    attack = table.frame[IS_ATTACK].to_numpy()
    if not table.schema.grouping:
        return dict(zip(record_ids(table), map(bool, attack)))
    groups = group_positions(table)
    return {fid: bool(attack[pos].any()) for fid, pos in zip(flow_ids(table, groups), groups)}


# --- bi-clustering inversion ------------------------------------------------------------

@dataclass(frozen=True)
class InversionParams:
    columns: tuple[str, ...]
    transforms: tuple[str, ...]
    column_max: tuple[float, ...]
    epsilon: float = RECIPROCAL_EPS


def fit_inversion(train: FeatureMatrix, spec: FeatureSpec, epsilon: float = RECIPROCAL_EPS) -> InversionParams:
    if tuple(train.columns) != tuple(spec.names):
        raise SchemaMismatch("matrix columns do not match the feature spec")
    col_max = train.values.max(axis=0) if len(train) else np.zeros(len(spec.names))
    return InversionParams(tuple(spec.names), tuple(spec.transforms),
                           tuple(float(v) for v in col_max), epsilon)


def invert_for_bicluster(matrix: FeatureMatrix, spec: FeatureSpec | None = None,
                         params: InversionParams | None = None,
                         epsilon: float = RECIPROCAL_EPS) -> FeatureMatrix:
    """Turn every column into one where larger values look more anomalous.

    ``max-minus`` columns become ``column_max - value`` (floored at 0 for
    values above the training maximum); ``reciprocal`` columns become
    ``1 / max(value, epsilon)``. Without ``params`` the column maxima of
    ``matrix`` itself are used.
    """
    if matrix.provenance != "raw":
        raise InvalidParameter(f"expected a raw matrix, got {matrix.provenance!r}")
    if params is None:
        if spec is None:
            raise InvalidParameter("need a feature spec or fitted inversion params")
        params = fit_inversion(matrix, spec, epsilon)
    if tuple(matrix.columns) != params.columns:
        raise SchemaMismatch("matrix columns do not match the inversion params")
    out = matrix.values.copy()
    for j, kind in enumerate(params.transforms):
        col = out[:, j]
        if kind == "max-minus":
            out[:, j] = np.maximum(params.column_max[j] - col, 0.0)
        elif kind == "reciprocal":
            if np.any(col < 0):
                raise TransformDomainError(
                    f"column {params.columns[j]!r} has negative values; reciprocal needs >= 0")
            out[:, j] = 1.0 / np.maximum(col, params.epsilon)
    if np.any(out < 0):
        raise TransformDomainError("identity columns of the bi-clustering path must be >= 0")
    return matrix.replace(out, "inverted")


# --- scaling and normalization -------------------------------------------------------------

@dataclass(frozen=True)
class ScalerParams:
    kind: str
    columns: tuple[str, ...]
    loc: tuple[float, ...]     # mean, or min
    scale: tuple[float, ...]   # std, or max
    fitted_on: str = "train"


def fit_scaler(train: FeatureMatrix, kind: str = "standardize") -> ScalerParams:
    if train.provenance not in ("raw", "inverted"):
        raise InvalidParameter(f"scalers are fitted on raw or inverted matrices, got {train.provenance!r}")
    if len(train) == 0:
        raise InvalidParameter("cannot fit a scaler on zero rows")
    x = train.values
    if kind == "standardize":
        loc, scale = x.mean(axis=0), x.std(axis=0)
        # Rounding can leave a constant column with a 1e-14 "std"; pin it to exactly 0.
        const = x.max(axis=0) == x.min(axis=0)
        loc, scale = np.where(const, x[0], loc), np.where(const, 0.0, scale)
    elif kind == "min-max":
        loc, scale = x.min(axis=0), x.max(axis=0)
    else:
        raise InvalidParameter(f"unknown scaler kind {kind!r}")
    return ScalerParams(kind, tuple(train.columns), tuple(map(float, loc)), tuple(map(float, scale)))


def apply_scaler(matrix: FeatureMatrix, params: ScalerParams) -> FeatureMatrix:
    if tuple(matrix.columns) != params.columns:
        raise SchemaMismatch(f"columns {matrix.columns} do not match scaler columns {params.columns}")
    x = matrix.values
    loc, scale = np.array(params.loc), np.array(params.scale)
    if params.kind == "standardize":
        safe = np.where(scale > 0, scale, 1.0)
        out = np.where(scale > 0, (x - loc) / safe, 0.0)
    else:
        span = scale - loc
        safe = np.where(span > 0, span, 1.0)
        with np.errstate(over="ignore"):  # overflow lands on +-inf, which the clip bounds
            out = np.where(span > 0, np.clip((x - loc) / safe, 0.0, 1.0), 0.0)
    return matrix.replace(out, "scaled")


def _norms(x: np.ndarray, norm: str, axis: int) -> np.ndarray:
    if norm == "l1":
        return np.abs(x).sum(axis=axis, keepdims=True)
    if norm == "l2":
        # Scale by the largest magnitude first so tiny entries don't underflow when squared.
        big = np.abs(x).max(axis=axis, keepdims=True) if x.size else np.zeros_like(x.sum(axis=axis, keepdims=True))
        safe = np.where(big > 0, big, 1.0)
        return big * np.sqrt(((x / safe) ** 2).sum(axis=axis, keepdims=True))
    raise InvalidParameter(f"unknown norm {norm!r}")


def normalize_rows(matrix: FeatureMatrix, norm: str = "l2") -> FeatureMatrix:
    """Divide each row by its l1 or l2 norm; all-zero rows pass through."""
    n = _norms(matrix.values, norm, axis=1)
    out = matrix.values / np.where(n > 0, n, 1.0)
    return matrix.replace(out, f"normalized-{norm}")


def normalize_columns(matrix: FeatureMatrix, norm: str = "l1") -> FeatureMatrix:
    """Divide each column by its l1 or l2 norm; all-zero columns pass through.

    Used on the bi-clustering path: after row-wise l1 normalization every
    non-zero flow vertex would have weighted degree exactly 1, leaving
    peeling nothing to rank flows by.
    """
    n = _norms(matrix.values, norm, axis=0)
    out = matrix.values / np.where(n > 0, n, 1.0)
    return matrix.replace(out, f"normalized-{norm}-columns")
