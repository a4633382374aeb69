"""Schema-typed tables, CSV ingestion and attack-dataset construction."""

from __future__ import annotations

import csv
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, CATEGORICAL)

MEMBER = 1
NON_MEMBER = 0


class SchemaError(ValueError):
    """Raised for malformed schemas or tables that do not match one."""


class TableParseError(ValueError):
    """Raised when a CSV file cannot be read into a Table."""

    def __init__(self, message: str, row: int | None = None, path: str | None = None):
        self.row = row
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = (":".join(where) + ": ") if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class FeatureSpec:
    """One column of a schema.

    ``range`` is only meaningful for numeric features. ``range_observed`` is
    True when the range was filled in from the data at load time rather than
    fixed by a schema file; observed ranges are recomputed over the union of
    tables at distance time.
    """

    name: str
    kind: str
    range: tuple[float, float] | None = None
    range_observed: bool = False

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.range is not None:
            if self.kind != NUMERIC:
                raise SchemaError(f"feature {self.name!r}: range given for categorical feature")
            lo, hi = self.range
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise SchemaError(f"feature {self.name!r}: invalid range ({lo}, {hi})")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC


def _check_unique(schema: Sequence[FeatureSpec]) -> None:
    dupes = [n for n, c in Counter(f.name for f in schema).items() if c > 1]
    if dupes:
        raise SchemaError(f"duplicate feature names: {dupes}")


def same_layout(a: Sequence[FeatureSpec], b: Sequence[FeatureSpec]) -> bool:
    """True when both schemas have the same names and kinds in the same order."""
    return len(a) == len(b) and all(
        fa.name == fb.name and fa.kind == fb.kind for fa, fb in zip(a, b)
    )


@dataclass(frozen=True, eq=False)
class Table:
    """Immutable column store: float64 arrays for numeric features, str object
    arrays for categorical ones."""

    schema: tuple[FeatureSpec, ...]
    columns: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        _check_unique(self.schema)
        if len(self.columns) != len(self.schema):
            raise SchemaError("column count does not match schema length")
        cols = []
        n = None
        for spec, col in zip(self.schema, self.columns):
            if spec.is_numeric:
                col = np.array(col, dtype=np.float64)
                if not np.all(np.isfinite(col)):
                    raise SchemaError(f"feature {spec.name!r}: non-finite numeric value")
            else:
                col = np.array([str(v) for v in col], dtype=object)
            if col.ndim != 1:
                raise SchemaError(f"feature {spec.name!r}: column must be 1-D")
            if n is None:
                n = len(col)
            elif len(col) != n:
                raise SchemaError("columns have differing lengths")
            col.setflags(write=False)
            cols.append(col)
        object.__setattr__(self, "columns", tuple(cols))

    @classmethod
    def from_rows(cls, schema: Sequence[FeatureSpec], rows: Iterable[Sequence]) -> "Table":
        rows = [tuple(r) for r in rows]
        for i, r in enumerate(rows):
            if len(r) != len(schema):
                raise SchemaError(f"row {i} has {len(r)} values, expected {len(schema)}")
        cols = [[r[j] for r in rows] for j in range(len(schema))]
        return cls(tuple(schema), tuple(cols))

    def __len__(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def n_rows(self) -> int:
        return len(self)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.schema]

    def column(self, name: str) -> np.ndarray:
        for spec, col in zip(self.schema, self.columns):
            if spec.name == name:
                return col
        raise KeyError(name)

    def row(self, i: int) -> tuple:
        return tuple(
            float(col[i]) if spec.is_numeric else col[i]
            for spec, col in zip(self.schema, self.columns)
        )

    @property
    def rows(self) -> list[tuple]:
        return [self.row(i) for i in range(len(self))]

    def take(self, indices) -> "Table":
        idx = np.asarray(indices, dtype=np.intp)
        return Table(self.schema, tuple(col[idx] for col in self.columns))

    def equals(self, other: "Table") -> bool:
        if not same_layout(self.schema, other.schema) or len(self) != len(other):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.columns, other.columns))


def concat_tables(tables: Sequence[Table]) -> Table:
    first = tables[0]
    for t in tables[1:]:
        if not same_layout(first.schema, t.schema):
            raise SchemaError("cannot concatenate tables with different schemas")
    cols = tuple(
        np.concatenate([t.columns[j] for t in tables]) for j in range(len(first.schema))
    )
    return Table(first.schema, cols)


# ---------------------------------------------------------------------------
# schema files


def parse_schema(text: str) -> list[FeatureSpec]:
    """Parse the key-value schema format.

    One feature per line, ``#`` starts a comment::

        age    = numeric, min=0, max=120
        income = numeric
        sex    = categorical
    """
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"schema line {lineno}: expected 'name = kind'")
        name, rest = (s.strip() for s in line.split("=", 1))
        parts = [p.strip() for p in rest.split(",")]
        kind = parts[0].lower()
        opts = {}
        for p in parts[1:]:
            if "=" not in p:
                raise SchemaError(f"schema line {lineno}: bad option {p!r}")
            k, v = (s.strip() for s in p.split("=", 1))
            if k not in ("min", "max"):
                raise SchemaError(f"schema line {lineno}: unknown option {k!r}")
            try:
                opts[k] = float(v)
            except ValueError:
                raise SchemaError(f"schema line {lineno}: {k} is not a number") from None
        if opts and set(opts) != {"min", "max"}:
            raise SchemaError(f"schema line {lineno}: give both min and max or neither")
        rng = (opts["min"], opts["max"]) if opts else None
        try:
            specs.append(FeatureSpec(name, kind, rng))
        except SchemaError as exc:
            raise SchemaError(f"schema line {lineno}: {exc}") from None
    _check_unique(specs)
    if not specs:
        raise SchemaError("schema is empty")
    return specs


def load_schema(path: str | os.PathLike) -> list[FeatureSpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh.read())


def format_schema(schema: Sequence[FeatureSpec]) -> str:
    lines = []
    for f in schema:
        line = f"{f.name} = {f.kind}"
        if f.range is not None and not f.range_observed:
            line += f", min={f.range[0]!r}, max={f.range[1]!r}"
        lines.append(line)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV


def _parse_float(token: str) -> float | None:
    try:
        v = float(token)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_table(path: str | os.PathLike, schema: Sequence[FeatureSpec] | str = "infer") -> Table:
    """Read a comma-separated file with a header row into a :class:`Table`.

    With ``schema="infer"`` a column is numeric iff every cell parses as a
    finite real. Row numbers in error messages are 1-based file lines (the
    header is line 1).
    """
    path = os.fspath(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise TableParseError(f"cannot open file: {exc.strerror}", path=path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableParseError("empty table", path=path) from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise TableParseError("duplicate column names in header", row=1, path=path)
        raw_rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise TableParseError(
                    f"expected {len(header)} values, found {len(rec)}", row=lineno, path=path
                )
            for name, cell in zip(header, rec):
                if cell.strip() == "":
                    raise TableParseError(
                        f"missing value in column {name!r} (missing values are not supported)",
                        row=lineno,
                        path=path,
                    )
            raw_rows.append((lineno, rec))
    if not raw_rows:
        raise TableParseError("empty table", path=path)

    if isinstance(schema, str):
        if schema != "infer":
            raise ValueError("schema must be a FeatureSpec list or 'infer'")
        specs = []
        for j, name in enumerate(header):
            numeric = all(_parse_float(rec[j]) is not None for _, rec in raw_rows)
            specs.append(FeatureSpec(name, NUMERIC if numeric else CATEGORICAL))
    else:
        by_name = {f.name: f for f in schema}
        missing = [h for h in header if h not in by_name]
        extra = [n for n in by_name if n not in header]
        if missing or extra:
            raise TableParseError(
                f"header does not match schema (unknown columns {missing}, absent columns {extra})",
                row=1,
                path=path,
            )
        specs = [by_name[h] for h in header]

    columns = []
    final_specs = []
    for j, spec in enumerate(specs):
        if spec.is_numeric:
            values = np.empty(len(raw_rows), dtype=np.float64)
            for i, (lineno, rec) in enumerate(raw_rows):
                v = _parse_float(rec[j])
                if v is None:
                    raise TableParseError(
                        f"column {spec.name!r}: {rec[j]!r} is not a finite number",
                        row=lineno,
                        path=path,
                    )
                values[i] = v
            if spec.range is None:
                spec = FeatureSpec(
                    spec.name, spec.kind, (float(values.min()), float(values.max())), True
                )
            columns.append(values)
        else:
            columns.append([rec[j].strip() for _, rec in raw_rows])
        final_specs.append(spec)
    return Table(tuple(final_specs), tuple(columns))


def write_table(table: Table, path: str | os.PathLike) -> None:
    """Write ``table`` as CSV; floats use ``repr`` so a reload is bit-exact."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.names)
        for i in range(len(table)):
            w.writerow(
                repr(float(col[i])) if spec.is_numeric else col[i]
                for spec, col in zip(table.schema, table.columns)
            )


# ---------------------------------------------------------------------------
# attack dataset


@dataclass(frozen=True, eq=False)
class AttackDataset:
    """Members (label 1) followed by non-members (label 0)."""

    table: Table
    labels: np.ndarray
    n_duplicates: int = field(default=0)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.ndim != 1 or len(labels) != len(self.table):
            raise ValueError("labels must align with table rows")
        if not np.isin(labels, (MEMBER, NON_MEMBER)).all():
            raise ValueError("labels must be 0 or 1")
        if not (labels == MEMBER).any() or not (labels == NON_MEMBER).any():
            raise ValueError("attack dataset needs at least one member and one non-member")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.table)

    @property
    def n_members(self) -> int:
        return int((self.labels == MEMBER).sum())

    @property
    def n_non_members(self) -> int:
        return int((self.labels == NON_MEMBER).sum())


def _row_keys(table: Table) -> list[tuple]:
    return list(zip(*[col.tolist() for col in table.columns]))


def count_cross_duplicates(r: Table, u: Table) -> int:
    """Number of rows of ``u`` that also occur verbatim in ``r``."""
    seen = set(_row_keys(r))
    return sum(1 for k in _row_keys(u) if k in seen)


def build_attack_dataset(r: Table, u: Table, balance: bool = True, seed: int = 0) -> AttackDataset:
    """Stack the training set ``r`` (members) on top of the unseen set ``u``.

    With ``balance`` the larger side is subsampled without replacement to the
    size of the smaller one; the kept rows keep their original relative order.
    Records duplicated across both sides are kept and counted.
    """
    if not same_layout(r.schema, u.schema):
        raise SchemaError("training and unseen tables have different schemas")
    if len(r) == 0 or len(u) == 0:
        raise ValueError("training and unseen tables must be non-empty")
    rng = np.random.default_rng(seed)
    if balance and len(r) != len(u):
        k = min(len(r), len(u))
        if len(r) > k:
            r = r.take(np.sort(rng.choice(len(r), size=k, replace=False)))
        else:
            u = u.take(np.sort(rng.choice(len(u), size=k, replace=False)))
    labels = np.concatenate(
        [np.full(len(r), MEMBER, dtype=np.int8), np.full(len(u), NON_MEMBER, dtype=np.int8)]
    )
    return AttackDataset(concat_tables([r, u]), labels, count_cross_duplicates(r, u))
