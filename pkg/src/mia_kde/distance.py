"""Gower distance and nearest-neighbour distances to a synthetic table."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .tabular import (
    CATEGORICAL,
    MEMBER,
    NON_MEMBER,
    NUMERIC,
    AttackDataset,
    FeatureSpec,
    SchemaError,
    Table,
    same_layout,
)

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip probing TBB first; it warns noisily on older installs
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# per-feature dissimilarity modes used by the kernel
_MODE_RANGE = 0  # |x - y| / range, clamped to 1
_MODE_MATCH = 1  # 0 if equal else 1 (categorical, or zero-range numeric)
_MODE_ABS = 2  # raw |x - y| (range normalisation disabled)


@dataclass(frozen=True)
class GowerContext:
    """Feature typing plus the numeric normalisers shared by both tables.

    ``ranges`` holds ``max - min`` per feature (``nan`` for categorical
    features). Zero-range numeric features are compared by equality.
    """

    schema: tuple[FeatureSpec, ...]
    ranges: tuple[float, ...]
    range_normalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "ranges", tuple(float(r) for r in self.ranges))
        if len(self.ranges) != len(self.schema):
            raise ValueError("one range entry per feature is required")
        for spec, r in zip(self.schema, self.ranges):
            if spec.is_numeric and not (math.isfinite(r) and r >= 0):
                raise ValueError(f"feature {spec.name!r}: range must be finite and >= 0")

    @classmethod
    def from_tables(cls, *tables: Table, range_normalize: bool = True) -> "GowerContext":
        """Build a context whose numeric ranges span the union of ``tables``.

        Ranges fixed by a schema file (``range_observed`` false) are kept as given.
        """
        tables = [t for t in tables if t is not None]
        schema = tables[0].schema
        for t in tables[1:]:
            if not same_layout(schema, t.schema):
                raise SchemaError("tables passed to the distance engine have different schemas")
        ranges = []
        for j, spec in enumerate(schema):
            if not spec.is_numeric:
                ranges.append(float("nan"))
            elif spec.range is not None and not spec.range_observed:
                ranges.append(spec.range[1] - spec.range[0])
            else:
                cols = [t.columns[j] for t in tables if len(t)]
                lo = min(float(c.min()) for c in cols)
                hi = max(float(c.max()) for c in cols)
                ranges.append(hi - lo)
        return cls(schema, ranges, range_normalize)

    @property
    def constant_features(self) -> list[str]:
        return [s.name for s, r in zip(self.schema, self.ranges) if s.is_numeric and r == 0.0]

    def modes(self) -> np.ndarray:
        out = np.empty(len(self.schema), dtype=np.int8)
        for j, (spec, r) in enumerate(zip(self.schema, self.ranges)):
            if not spec.is_numeric:
                out[j] = _MODE_MATCH
            elif not self.range_normalize:
                out[j] = _MODE_ABS
            elif r == 0.0:
                out[j] = _MODE_MATCH
            else:
                out[j] = _MODE_RANGE
        return out


def _feature_term(mode: int, x, y, r: float) -> float:
    if mode == _MODE_MATCH:
        return 0.0 if x == y else 1.0
    diff = abs(x - y)
    if mode == _MODE_ABS:
        return diff
    diff = diff / r
    return 1.0 if diff > 1.0 else diff


def gower_distance(x: Sequence, y: Sequence, ctx: GowerContext) -> float:
    """Gower dissimilarity of two records; features are summed left to right."""
    if len(x) != len(ctx.schema) or len(y) != len(ctx.schema):
        raise SchemaError("record length does not match the schema")
    modes = ctx.modes()
    s = 0.0
    for j, spec in enumerate(ctx.schema):
        xv, yv = x[j], y[j]
        if spec.is_numeric:
            xv, yv = float(xv), float(yv)
        s += _feature_term(int(modes[j]), xv, yv, ctx.ranges[j])
    return s / len(ctx.schema)


# ---------------------------------------------------------------------------
# encoding and the compiled kernel


def build_vocabulary(table: Table) -> list[dict[str, int]]:
    """Per-feature token → code maps (empty dicts for numeric features)."""
    vocab = []
    for spec, col in zip(table.schema, table.columns):
        if spec.is_numeric:
            vocab.append({})
        else:
            vocab.append({tok: k for k, tok in enumerate(sorted(set(col.tolist())))})
    return vocab


def encode(table: Table, vocab: list[dict[str, int]]) -> np.ndarray:
    """Row-major float64 matrix; tokens outside ``vocab`` map to -1."""
    out = np.empty((len(table), len(table.schema)), dtype=np.float64)
    for j, (spec, col) in enumerate(zip(table.schema, table.columns)):
        if spec.is_numeric:
            out[:, j] = col
        else:
            lut = vocab[j]
            out[:, j] = [lut.get(tok, -1) for tok in col.tolist()]
    return out


@numba.njit(parallel=True, cache=True)
def _nn_kernel(queries, reference, modes, ranges):
    n_q, p = queries.shape
    n_r = reference.shape[0]
    out = np.empty(n_q, dtype=np.float64)
    for i in numba.prange(n_q):
        best = np.inf
        for k in range(n_r):
            s = 0.0
            for j in range(p):
                x = queries[i, j]
                y = reference[k, j]
                m = modes[j]
                if m == 1:
                    if x != y:
                        s += 1.0
                else:
                    d = abs(x - y)
                    if m == 0:
                        d = d / ranges[j]
                        if d > 1.0:
                            d = 1.0
                    s += d
                # partial sums only grow, so this row cannot beat the best one
                if s > best:
                    break
            if s < best:
                best = s
        out[i] = best / p
    return out


def nn_distances_encoded(
    queries: np.ndarray,
    reference: np.ndarray,
    ctx: GowerContext,
    n_jobs: int | None = None,
) -> np.ndarray:
    """Nearest-neighbour Gower distance of every query row to ``reference``.

    The minimum is tracked on the unnormalised feature sum, so the result is
    identical to taking the minimum of :func:`gower_distance` over all pairs,
    whatever the number of threads.
    """
    if reference.shape[0] == 0:
        raise ValueError("reference (synthetic) table is empty")
    modes = ctx.modes()
    ranges = np.array([r if r == r else 1.0 for r in ctx.ranges], dtype=np.float64)
    q = np.ascontiguousarray(queries, dtype=np.float64)
    ref = np.ascontiguousarray(reference, dtype=np.float64)
    if q.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    previous = numba.get_num_threads()
    threads = _resolve_jobs(n_jobs)
    numba.set_num_threads(threads)
    try:
        return _nn_kernel(q, ref, modes, ranges)
    finally:
        numba.set_num_threads(previous)


def _resolve_jobs(n_jobs: int | None) -> int:
    limit = numba.config.NUMBA_NUM_THREADS
    if n_jobs is None or n_jobs == 0:
        return 1
    if n_jobs < 0:
        return max(1, limit + 1 + n_jobs)
    return min(int(n_jobs), limit)


# ---------------------------------------------------------------------------
# distance tables


@dataclass(frozen=True, eq=False)
class DistanceTable:
    """Nearest-neighbour distances with labels and optional train/test split.

    ``train_indices`` and ``test_indices`` are positions into the record
    arrays. Records dropped while balancing belong to neither.
    """

    distances: np.ndarray
    labels: np.ndarray
    source_index: np.ndarray
    train_indices: np.ndarray | None = None
    test_indices: np.ndarray | None = None
    range_normalized: bool = True
    constant_features: tuple[str, ...] = field(default=())

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int8)
        src = np.asarray(self.source_index, dtype=np.int64)
        if not (d.ndim == y.ndim == src.ndim == 1 and len(d) == len(y) == len(src)):
            raise ValueError("distances, labels and source_index must be aligned 1-D arrays")
        if not np.all(np.isfinite(d)) or (d < 0).any():
            raise ValueError("distances must be finite and non-negative")
        if self.range_normalized and (d > 1.0).any():
            raise ValueError("range-normalised distances must lie in [0, 1]")
        if not np.isin(y, (MEMBER, NON_MEMBER)).all():
            raise ValueError("labels must be 0 or 1")
        for arr in (d, y, src):
            arr.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "source_index", src)
        if (self.train_indices is None) != (self.test_indices is None):
            raise ValueError("train and test indices must be given together")
        if self.train_indices is not None:
            tr = np.asarray(self.train_indices, dtype=np.intp)
            te = np.asarray(self.test_indices, dtype=np.intp)
            if np.intersect1d(tr, te).size:
                raise ValueError("train and test indices overlap")
            for arr in (tr, te):
                if arr.size and (arr.min() < 0 or arr.max() >= len(d)):
                    raise ValueError("split index out of range")
                arr.setflags(write=False)
            object.__setattr__(self, "train_indices", tr)
            object.__setattr__(self, "test_indices", te)

    def __len__(self) -> int:
        return len(self.distances)

    @property
    def has_split(self) -> bool:
        return self.train_indices is not None

    def _require_split(self):
        if not self.has_split:
            raise ValueError("distance table has not been split; call split_distances first")

    @property
    def train_distances(self) -> np.ndarray:
        self._require_split()
        return self.distances[self.train_indices]

    @property
    def train_labels(self) -> np.ndarray:
        self._require_split()
        return self.labels[self.train_indices]

    @property
    def test_distances(self) -> np.ndarray:
        self._require_split()
        return self.distances[self.test_indices]

    @property
    def test_labels(self) -> np.ndarray:
        self._require_split()
        return self.labels[self.test_indices]


def nearest_neighbor_distances(
    attack: AttackDataset,
    synth: Table,
    ctx: GowerContext | None = None,
    n_jobs: int | None = None,
    range_normalize: bool = True,
) -> DistanceTable:
    """Distance from every attack record to its nearest synthetic record."""
    if len(synth) == 0:
        raise ValueError("synthetic table is empty")
    if not same_layout(attack.table.schema, synth.schema):
        raise SchemaError("attack and synthetic tables have different schemas")
    if ctx is None:
        ctx = GowerContext.from_tables(attack.table, synth, range_normalize=range_normalize)
    vocab = build_vocabulary(synth)
    d = nn_distances_encoded(encode(attack.table, vocab), encode(synth, vocab), ctx, n_jobs)
    return DistanceTable(
        d,
        attack.labels,
        np.arange(len(attack)),
        range_normalized=ctx.range_normalize,
        constant_features=tuple(ctx.constant_features),
    )


def split_distances(
    dt: DistanceTable,
    train_fraction: float = 0.7,
    balanced_train: bool = True,
    seed: int = 0,
) -> DistanceTable:
    """Seeded train/test split with a label-balanced test set.

    The test set takes ``round((1 - train_fraction) * n) // 2`` records of each
    label; the rest is training data, optionally balanced by dropping surplus
    records of the over-represented label.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    members = np.flatnonzero(dt.labels == MEMBER)
    non_members = np.flatnonzero(dt.labels == NON_MEMBER)
    if len(members) < 2 or len(non_members) < 2:
        raise ValueError("need at least 2 members and 2 non-members to split")
    rng = np.random.default_rng(seed)
    members = rng.permutation(members)
    non_members = rng.permutation(non_members)
    per_label = int(round((1.0 - train_fraction) * len(dt))) // 2
    per_label = max(per_label, 1)
    if per_label >= min(len(members), len(non_members)):
        raise ValueError(
            f"cannot balance a test set of {per_label} records per label "
            f"with {len(members)} members and {len(non_members)} non-members"
        )
    test = np.concatenate([members[:per_label], non_members[:per_label]])
    train_m, train_n = members[per_label:], non_members[per_label:]
    if balanced_train:
        k = min(len(train_m), len(train_n))
        train_m, train_n = train_m[:k], train_n[:k]
    train = np.concatenate([train_m, train_n])
    return DistanceTable(
        dt.distances,
        dt.labels,
        dt.source_index,
        np.sort(train),
        np.sort(test),
        dt.range_normalized,
        dt.constant_features,
    )


def write_distances(dt: DistanceTable, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_index", "distance", "label"])
        for s, d, y in zip(dt.source_index.tolist(), dt.distances.tolist(), dt.labels.tolist()):
            w.writerow([s, repr(d), y])


def read_distances(path: str | os.PathLike, range_normalized: bool = True) -> DistanceTable:
    src, d, y = [], [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"source_index", "distance", "label"} <= set(
            reader.fieldnames
        ):
            raise ValueError(f"{path}: expected columns source_index, distance, label")
        for lineno, rec in enumerate(reader, start=2):
            try:
                src.append(int(rec["source_index"]))
                d.append(float(rec["distance"]))
                y.append(int(rec["label"]))
            except (TypeError, ValueError):
                raise ValueError(f"{path}: row {lineno}: malformed distance record") from None
    if not d:
        raise ValueError(f"{path}: empty distance table")
    return DistanceTable(np.array(d), np.array(y), np.array(src), range_normalized=range_normalized)


# ---------------------------------------------------------------------------
# estimator front-end


def as_table(X, categorical_features="auto", feature_names=None) -> Table:
    """Coerce a Table, DataFrame or 2-D array-like into a :class:`Table`.

    ``categorical_features`` is ``"auto"`` (non-numeric columns are
    categorical), a boolean mask, or a list of column indices.
    """
    if isinstance(X, Table):
        return X
    if hasattr(X, "columns") and hasattr(X, "iloc"):
        names = [str(c) for c in X.columns]
        cols = [X.iloc[:, j].to_numpy() for j in range(X.shape[1])]
    else:
        arr = np.asarray(X, dtype=object if not _is_numeric_array(X) else np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        names = list(feature_names) if feature_names is not None else [
            f"x{j}" for j in range(arr.shape[1])
        ]
        cols = [arr[:, j] for j in range(arr.shape[1])]
    p = len(cols)
    if isinstance(categorical_features, str):
        if categorical_features != "auto":
            raise ValueError("categorical_features must be 'auto', a mask or an index list")
        mask = [not _column_is_numeric(c) for c in cols]
    else:
        cf = list(categorical_features)
        if len(cf) == p and all(isinstance(v, (bool, np.bool_)) for v in cf):
            mask = [bool(v) for v in cf]
        else:
            mask = [False] * p
            for j in cf:
                mask[int(j)] = True
    schema = tuple(
        FeatureSpec(n, CATEGORICAL if m else NUMERIC) for n, m in zip(names, mask)
    )
    return Table(schema, tuple(cols))


def _is_numeric_array(X) -> bool:
    try:
        np.asarray(X, dtype=np.float64)
        return True
    except (TypeError, ValueError):
        return False


def _column_is_numeric(col) -> bool:
    if np.issubdtype(np.asarray(col).dtype, np.number):
        return True
    try:
        vals = np.asarray(col, dtype=np.float64)
    except (TypeError, ValueError):
        return False
    return bool(np.all(np.isfinite(vals)))


class GowerNearestNeighbors(TransformerMixin, BaseEstimator):
    """Nearest-neighbour Gower distance to a fitted (synthetic) table.

    Parameters
    ----------
    categorical_features : "auto", boolean mask or index list, default="auto"
        Which columns are compared by equality. Ignored for :class:`Table` input.
    range_normalize : bool, default=True
        Divide numeric differences by the feature range. When False the raw
        absolute difference is used and distances are no longer bounded by 1.
    n_jobs : int, optional
        Worker threads for the scan; ``-1`` uses every available core.

    Attributes
    ----------
    context_ : GowerContext
    n_features_in_ : int
    """

    def __init__(self, categorical_features="auto", range_normalize=True, n_jobs=None):
        self.categorical_features = categorical_features
        self.range_normalize = range_normalize
        self.n_jobs = n_jobs

    def fit(self, X, y=None, reference=None):
        """Store ``X`` as the reference table.

        ``reference`` (typically the query set) widens the numeric ranges so
        that both sides share a single normaliser.
        """
        table = as_table(X, self.categorical_features)
        ref = None if reference is None else as_table(reference, self.categorical_features)
        if len(table) == 0:
            raise ValueError("cannot fit on an empty table")
        self.context_ = GowerContext.from_tables(table, ref, range_normalize=self.range_normalize)
        self.vocabulary_ = build_vocabulary(table)
        self.reference_ = encode(table, self.vocabulary_)
        self.n_features_in_ = len(table.schema)
        return self

    def transform(self, X):
        """Return an ``(n_samples, 1)`` column of nearest-neighbour distances."""
        check_is_fitted(self, "reference_")
        table = as_table(X, self.categorical_features)
        if not same_layout(table.schema, self.context_.schema):
            raise SchemaError("query table schema differs from the fitted table")
        d = nn_distances_encoded(
            encode(table, self.vocabulary_), self.reference_, self.context_, self.n_jobs
        )
        return d[:, None]
