"""Dataset loading, five-tuple grouping, attack downsampling and splitting.

Tables are column-oriented (a pandas frame underneath) because the raw
UNSW-NB15 export runs to millions of rows; :class:`FlowRecord` objects are
materialised on demand.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (DeserializationError, EmptyInput, IncompatibleModel, InsufficientData,
                     InvalidParameter, MissingIdentity, ParseError, SchemaMismatch)

BENIGN = "benign"
ATTACK = "attack"

ROLES = ("identity", "feature", "label", "category", "auxiliary")
TYPES = ("number", "port", "text", "flag")
KEY_FIELDS = ("src_ip", "dst_ip", "src_port", "dst_port", "protocol")

SAMPLE_THEN_SPLIT = "sample-then-split"
PREDEFINED = "predefined"

TABLE_FORMAT = "flowvote.flow-table"
TABLE_VERSION = 1

# Bookkeeping columns carried alongside the schema columns.
ROW = "_row"
IS_ATTACK = "_attack"
CATEGORY = "_category"


@dataclass(frozen=True)
class FlowKey:
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: str

    def __post_init__(self):
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise InvalidParameter(f"port {port} outside 0..65535")

    def __str__(self) -> str:
        return f"{self.src_ip}:{self.src_port}->{self.dst_ip}:{self.dst_port}/{self.protocol}"


@dataclass(frozen=True)
class FlowRecord:
    key: FlowKey | None
    values: Mapping[str, float | str]
    label: str
    category: str
    dataset: str
    row: int

    @property
    def is_attack(self) -> bool:
        return self.label == ATTACK


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    type: str


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    columns: tuple[ColumnSpec, ...]
    label_column: str
    benign_values: frozenset[str]
    identity: Mapping[str, str] | None = None
    category_column: str | None = None
    header: str = "auto"
    na_tokens: frozenset[str] = frozenset({""})
    na_fill: float | None = None
    flag_true: frozenset[str] = frozenset({"1", "yes", "true", "t", "y"})
    flag_false: frozenset[str] = frozenset({"0", "no", "false", "f", "n"})
    description: str = ""

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"schema {self.name}: duplicate column names")
        for c in self.columns:
            if c.role not in ROLES or c.type not in TYPES:
                raise SchemaMismatch(f"schema {self.name}: bad role/type on column {c.name!r}")
        labels = [c.name for c in self.columns if c.role == "label"]
        if labels != [self.label_column]:
            raise SchemaMismatch(f"schema {self.name}: needs exactly one label column")
        identity_cols = {c.name for c in self.columns if c.role == "identity"}
        if self.identity:
            if set(self.identity) != set(KEY_FIELDS) or set(self.identity.values()) != identity_cols:
                raise SchemaMismatch(f"schema {self.name}: identity mapping must cover the five-tuple")
        elif identity_cols:
            raise SchemaMismatch(f"schema {self.name}: identity columns without a grouping rule")
        if self.header not in ("auto", "present", "absent"):
            raise SchemaMismatch(f"schema {self.name}: header must be auto, present or absent")

    @property
    def grouping(self) -> bool:
        return bool(self.identity)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def value_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.role not in ("identity", "label")]

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DatasetSchema":
        flags = doc.get("flag_tokens") or {}
        kw = {}
        if flags:
            kw["flag_true"] = frozenset(flags["true"])
            kw["flag_false"] = frozenset(flags["false"])
        return cls(
            name=doc["name"],
            columns=tuple(ColumnSpec(c["name"], c["role"], c["type"]) for c in doc["columns"]),
            label_column=doc["label"]["column"],
            benign_values=frozenset(doc["label"]["benign"]),
            identity=doc.get("identity") or None,
            category_column=doc.get("category"),
            header=doc.get("header", "auto"),
            na_tokens=frozenset(doc.get("na_tokens", [""])),
            na_fill=doc.get("na_fill"),
            description=doc.get("description", ""),
            **kw,
        )


BUILTIN_SCHEMAS = ("unsw-nb15", "nsl-kdd")


def load_schema(name_or_path: str | os.PathLike) -> DatasetSchema:
    """A built-in schema by name, or a schema JSON document by path."""
    if str(name_or_path) in BUILTIN_SCHEMAS:
        text = resources.files("flowvote.data").joinpath(f"schema_{name_or_path}.json").read_text()
    else:
        text = Path(name_or_path).read_text()
    return DatasetSchema.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class FlowTable:
    """Immutable, ordered collection of flow records of one schema."""

    schema: DatasetSchema
    frame: pd.DataFrame = field(repr=False)

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[FlowRecord]:
        for pos in range(len(self.frame)):
            yield self.record(pos)

    @property
    def n_attacks(self) -> int:
        return int(self.frame[IS_ATTACK].sum())

    @property
    def attack_rate(self) -> float:
        return self.n_attacks / len(self) if len(self) else 0.0

    @property
    def records(self) -> list[FlowRecord]:
        return list(self)

    def record(self, pos: int) -> FlowRecord:
        row = self.frame.iloc[pos]
        key = None
        if self.schema.identity:
            ident = self.schema.identity
            key = FlowKey(str(row[ident["src_ip"]]), str(row[ident["dst_ip"]]),
                          int(row[ident["src_port"]]), int(row[ident["dst_port"]]),
                          str(row[ident["protocol"]]))
        values = {c: _py(row[c]) for c in self.schema.value_columns}
        return FlowRecord(key, values, ATTACK if row[IS_ATTACK] else BENIGN,
                          str(row[CATEGORY]), self.schema.name, int(row[ROW]))

    def take(self, positions: Sequence[int] | np.ndarray) -> "FlowTable":
        return FlowTable(self.schema, self.frame.iloc[np.asarray(positions, dtype=int)].reset_index(drop=True))

    def label_counts(self) -> dict[str, int]:
        return {BENIGN: len(self) - self.n_attacks, ATTACK: self.n_attacks}


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


# --- loading ----------------------------------------------------------------

def load_dataset(path: str | os.PathLike | Sequence[str | os.PathLike],
                 schema: DatasetSchema) -> FlowTable:
    """Read one or more CSV files laid out per ``schema`` into a table.

    Several paths are concatenated in order (UNSW-NB15 ships as four files).
    """
    paths = [path] if isinstance(path, (str, os.PathLike)) else list(path)
    frames = []
    offset = 0
    for p in paths:
        frame = _read_csv(Path(p), schema)
        frame[ROW] = np.arange(offset, offset + len(frame))
        offset += len(frame)
        frames.append(frame)
    frame = pd.concat(frames, ignore_index=True) if len(frames) > 1 else frames[0]
    return FlowTable(schema, frame)


def _read_csv(path: Path, schema: DatasetSchema) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                          na_filter=False, skip_blank_lines=True, encoding_errors="replace")
    except pd.errors.EmptyDataError:
        raise EmptyInput(f"{path} is empty") from None
    except pd.errors.ParserError as exc:
        raise SchemaMismatch(f"{path}: ragged rows ({exc})") from None

    names = schema.names
    first = [str(v).strip().lower() for v in raw.iloc[0]] if len(raw) else []
    looks_like_header = bool(first) and set(first) == {n.lower() for n in names}
    line_offset = 1
    if schema.header == "present" or (schema.header == "auto" and looks_like_header):
        header = [str(v).strip() for v in raw.iloc[0]]
        lower = [h.lower() for h in header]
        missing = [n for n in names if n.lower() not in lower]
        extra = [h for h in header if h.lower() not in {n.lower() for n in names}]
        if missing or extra:
            raise SchemaMismatch(f"{path}: missing columns {missing}, unexpected columns {extra}")
        raw = raw.iloc[1:].reset_index(drop=True)
        raw.columns = lower
        raw = raw[[n.lower() for n in names]]
        line_offset = 2
    elif raw.shape[1] != len(names):
        raise SchemaMismatch(
            f"{path}: {raw.shape[1]} columns, schema {schema.name} expects {len(names)}")
    raw.columns = names
    if raw.empty:
        raise EmptyInput(f"{path} has no data rows")
    _check_short_rows(path, raw, len(names), line_offset)

    out = {}
    for col in schema.columns:
        out[col.name] = _convert(raw[col.name].str.strip(), col, schema, line_offset)
    frame = pd.DataFrame(out)
    labels = frame[schema.label_column].astype(str)
    if (labels == "").any():
        col = schema.column(schema.label_column)
        _raise_parse(labels, labels == "", col, line_offset)
    frame[IS_ATTACK] = ~labels.isin(schema.benign_values)
    if schema.category_column:
        cat = frame[schema.category_column].astype(str)
    else:
        cat = labels
    frame[CATEGORY] = np.where(frame[IS_ATTACK], cat, "")
    return frame


def _check_short_rows(path: Path, raw: pd.DataFrame, width: int, line_offset: int) -> None:
    # pandas pads short rows with "", so only rows ending blank need a field count.
    suspects = np.flatnonzero((raw.iloc[:, -1] == "").to_numpy())
    if not len(suspects):
        return
    wanted = {int(p) + line_offset for p in suspects}
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate((l for l in fh if l.strip()), start=1):
            if lineno in wanted and line.count(",") + 1 < width:
                raise SchemaMismatch(f"{path}: line {lineno} has fewer than {width} columns")


def _convert(values: pd.Series, col: ColumnSpec, schema: DatasetSchema, line_offset: int) -> pd.Series:
    if col.type == "text":
        return values
    blank = values.isin(schema.na_tokens)
    if col.type == "flag":
        low = values.str.lower()
        truthy, falsy = low.isin(schema.flag_true), low.isin(schema.flag_false)
        bad = ~(truthy | falsy)
        if bad.any():
            _raise_parse(values, bad, col, line_offset)
        return truthy.astype(float)
    if col.type == "port":
        parsed = values.map(_parse_port)
    else:
        parsed = pd.to_numeric(values.where(~blank), errors="coerce")
    bad = parsed.isna() & ~blank
    if col.type == "number":
        bad |= np.isinf(parsed.fillna(0.0))
    if bad.any():
        _raise_parse(values, bad, col, line_offset)
    if blank.any():
        if schema.na_fill is None:
            _raise_parse(values, blank, col, line_offset)
        parsed = parsed.where(~blank, schema.na_fill)
    if col.type == "port":
        if ((parsed < 0) | (parsed > 65535)).any():
            _raise_parse(values, (parsed < 0) | (parsed > 65535), col, line_offset)
        return parsed.astype(np.int64)
    return parsed.astype(float)


def _parse_port(text: str) -> float:
    try:
        return float(int(text, 16) if text.lower().startswith("0x") else int(text))
    except ValueError:
        return np.nan


def _raise_parse(values: pd.Series, bad: pd.Series, col: ColumnSpec, line_offset: int):
    pos = int(np.flatnonzero(bad.to_numpy())[0])
    raise ParseError(f"line {pos + line_offset}, column {col.name!r}: cannot parse {values.iloc[pos]!r} "
                     f"as {col.type}", row=pos + line_offset, column=col.name)


# --- grouping, downsampling, splitting -----------------------------------------

def group_by_five_tuple(table: FlowTable) -> list[tuple[FlowKey, list[FlowRecord]]]:
    """Partition records by five-tuple, groups in first-appearance order."""
    if not table.schema.identity:
        raise MissingIdentity(f"schema {table.schema.name} carries no five-tuple")
    groups = []
    for positions in group_positions(table):
        records = [table.record(int(p)) for p in positions]
        groups.append((records[0].key, records))
    return groups


def group_positions(table: FlowTable) -> list[np.ndarray]:
    """Row positions of each five-tuple group, in first-appearance order."""
    if not table.schema.identity:
        raise MissingIdentity(f"schema {table.schema.name} carries no five-tuple")
    if len(table) == 0:
        return []
    cols = [table.schema.identity[f] for f in KEY_FIELDS]
    codes = table.frame.groupby(cols, sort=False, dropna=False).ngroup().to_numpy()
    order = np.argsort(codes, kind="stable")
    splits = np.flatnonzero(np.diff(codes[order])) + 1
    return np.split(order, splits)


def max_attacks_for_rate(n_benign: int, target_rate: float) -> int:
    """Largest k with k / (n_benign + k) <= target_rate."""
    r = Fraction(str(target_rate))
    return math.floor(r * n_benign / (1 - r))


def downsample_attacks(table: FlowTable, target_rate: float, seed: int) -> FlowTable:
    """Drop attack records uniformly at random until the attack rate fits."""
    if not 0 < target_rate < 1:
        raise InvalidParameter(f"target_rate must lie in (0, 1), got {target_rate!r}")
    is_attack = table.frame[IS_ATTACK].to_numpy()
    attacks = np.flatnonzero(is_attack)
    keep_n = max_attacks_for_rate(len(table) - len(attacks), target_rate)
    if len(attacks) <= keep_n:
        return table
    rng = np.random.default_rng(seed)
    kept = rng.choice(attacks, size=keep_n, replace=False)
    mask = ~is_attack
    mask[kept] = True
    return table.take(np.flatnonzero(mask))


def subsample(table: FlowTable, size: int, seed: int) -> FlowTable:
    """Seeded uniform sample of ``size`` rows, in draw order."""
    if size > len(table):
        raise InsufficientData(f"asked for {size} rows, table has {len(table)}")
    rng = np.random.default_rng(seed)
    return table.take(rng.choice(len(table), size=size, replace=False))


def split_train_test(table: FlowTable, mode: str = SAMPLE_THEN_SPLIT, *, seed: int = 0,
                     sample_size: int = 150_000, train_fraction: float = 0.75,
                     test: FlowTable | None = None) -> tuple[FlowTable, FlowTable]:
    """Train/test partition.

    ``sample-then-split`` draws ``sample_size`` rows and gives the first
    ``floor(train_fraction * sample_size)`` of the draw to training.
    ``predefined`` returns ``(table, test)`` untouched.
    """
    if mode == PREDEFINED:
        if test is None:
            raise InvalidParameter("predefined mode needs the dataset's own test table")
        return table, test
    if mode != SAMPLE_THEN_SPLIT:
        raise InvalidParameter(f"unknown split mode {mode!r}")
    if not 0 < train_fraction < 1:
        raise InvalidParameter("train_fraction must lie in (0, 1)")
    if sample_size > len(table):
        raise InsufficientData(f"sample_size {sample_size} exceeds table size {len(table)}")
    rng = np.random.default_rng(seed)
    drawn = rng.choice(len(table), size=sample_size, replace=False)
    n_train = math.floor(Fraction(str(train_fraction)) * sample_size)
    return table.take(drawn[:n_train]), table.take(drawn[n_train:])


# --- flow-table container -------------------------------------------------------

def save_table(table: FlowTable, path: str | os.PathLike) -> None:
    """Write ``table`` as a versioned JSON container.

    Layout: ``{"format", "version", "schema", "record_count", "columns",
    "row_numbers", "rows"}`` where ``rows`` holds the schema columns in
    schema order. The schema document itself is embedded so a table can be
    reloaded without the original schema file.
    """
    names = table.schema.names
    rows = table.frame[names].astype(object).to_numpy().tolist()
    doc = {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "schema": table.schema.name,
        "schema_doc": _schema_to_dict(table.schema),
        "record_count": len(table),
        "columns": names,
        "row_numbers": table.frame[ROW].astype(int).tolist(),
        "rows": [[_py(v) for v in row] for row in rows],
    }
    Path(path).write_text(json.dumps(doc))


def load_table(path: str | os.PathLike) -> FlowTable:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DeserializationError(f"{path}: not a flow-table file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != TABLE_FORMAT:
        raise DeserializationError(f"{path}: not a flow-table file")
    if doc.get("version") != TABLE_VERSION:
        raise IncompatibleModel(f"{path}: flow-table version {doc.get('version')!r} unsupported")
    try:
        schema = DatasetSchema.from_dict(doc["schema_doc"])
        frame = pd.DataFrame(doc["rows"], columns=doc["columns"])
        if len(frame) != doc["record_count"]:
            raise DeserializationError(f"{path}: record count mismatch")
        for col in schema.columns:
            if col.type == "text":
                frame[col.name] = frame[col.name].astype(str)
            elif col.type == "port":
                frame[col.name] = frame[col.name].astype(np.int64)
            else:
                frame[col.name] = frame[col.name].astype(float)
        frame[ROW] = np.asarray(doc["row_numbers"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DeserializationError(f"{path}: malformed flow-table ({exc})") from None
    labels = frame[schema.label_column].astype(str)
    frame[IS_ATTACK] = ~labels.isin(schema.benign_values)
    cat = frame[schema.category_column].astype(str) if schema.category_column else labels
    frame[CATEGORY] = np.where(frame[IS_ATTACK], cat, "")
    return FlowTable(schema, frame)


def _schema_to_dict(schema: DatasetSchema) -> dict:
    return {
        "name": schema.name,
        "description": schema.description,
        "header": schema.header,
        "identity": dict(schema.identity) if schema.identity else None,
        "label": {"column": schema.label_column, "benign": sorted(schema.benign_values)},
        "category": schema.category_column,
        "na_tokens": sorted(schema.na_tokens),
        "na_fill": schema.na_fill,
        "flag_tokens": {"true": sorted(schema.flag_true), "false": sorted(schema.flag_false)},
        "columns": [{"name": c.name, "role": c.role, "type": c.type} for c in schema.columns],
    }
