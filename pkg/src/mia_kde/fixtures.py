"""Synthetic benchmark bundles with known membership structure.

Used by the test-suite and to regenerate the toy bundle shipped under
``mia_kde/data/toy``.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np

from .tabular import (
    CATEGORICAL,
    NUMERIC,
    FeatureSpec,
    Table,
    concat_tables,
    format_schema,
    write_table,
)

_TOKENS = ("a", "b", "c", "d", "e")


class Bundle(NamedTuple):
    train: Table
    unseen: Table
    synthetic: Table


def random_schema(rng: np.random.Generator, n_features: int) -> tuple[FeatureSpec, ...]:
    kinds = rng.random(n_features) < 0.6
    kinds[0] = True  # at least one numeric column
    return tuple(
        FeatureSpec(f"f{j}", NUMERIC if k else CATEGORICAL) for j, k in enumerate(kinds)
    )


def sample_table(
    rng: np.random.Generator,
    schema,
    n: int,
    shift: float = 0.0,
    n_levels: int = 4,
    integer_valued: bool = False,
) -> Table:
    """Numeric columns ~ N(shift, 1); categorical columns uniform over
    ``n_levels`` tokens (the last token gets extra mass when ``shift`` > 0)."""
    cols = []
    for spec in schema:
        if spec.kind == NUMERIC:
            v = rng.normal(shift, 1.0, n)
            cols.append(np.round(v * 4) / 4 if integer_valued else v)
        else:
            p = np.ones(n_levels)
            if shift > 0:
                p[-1] += shift * n_levels
            p /= p.sum()
            cols.append(np.array(_TOKENS)[rng.choice(n_levels, size=n, p=p)])
    return Table(tuple(schema), tuple(cols))


def jitter(rng: np.random.Generator, table: Table, fraction: float = 0.01) -> Table:
    """Copy of ``table`` with each numeric cell moved by at most
    ``fraction`` of its column range; categorical cells are unchanged."""
    cols = []
    for spec, col in zip(table.schema, table.columns):
        if spec.kind == NUMERIC:
            width = float(col.max() - col.min())
            cols.append(col + rng.uniform(-fraction, fraction, len(col)) * width)
        else:
            cols.append(col)
    return Table(table.schema, tuple(cols))


def separable_bundle(n: int = 1000, seed: int = 0, n_features: int = 6, shift: float = 2.0) -> Bundle:
    """Synthetic rows are jittered copies of the training rows; unseen rows
    come from a shifted distribution."""
    rng = np.random.default_rng(seed)
    schema = random_schema(rng, n_features)
    r = sample_table(rng, schema, n)
    u = sample_table(rng, schema, n, shift=shift)
    return Bundle(r, u, jitter(rng, r))


def iid_bundle(n: int = 5000, n_synthetic: int | None = None, seed: int = 0, n_features: int = 6) -> Bundle:
    """Training, unseen and synthetic rows all drawn from one distribution."""
    rng = np.random.default_rng(seed)
    schema = random_schema(rng, n_features)
    return Bundle(
        sample_table(rng, schema, n),
        sample_table(rng, schema, n),
        sample_table(rng, schema, n_synthetic or n),
    )


def write_bundle(bundle: Bundle, directory: str) -> dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name in ("train", "unseen", "synthetic"):
        path = os.path.join(directory, f"{name}.csv")
        write_table(getattr(bundle, name), path)
        paths[name] = path
    schema_path = os.path.join(directory, "schema.txt")
    with open(schema_path, "w", encoding="utf-8") as fh:
        fh.write(format_schema(bundle.train.schema))
    paths["schema"] = schema_path
    return paths


def toy_bundle_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "toy")


def make_toy_bundle(seed: int = 7) -> Bundle:
    """Small mixed-type bundle: partly memorising generator (half of the
    synthetic rows are near-copies of training rows)."""
    rng = np.random.default_rng(seed)
    schema = (
        FeatureSpec("age", NUMERIC),
        FeatureSpec("income", NUMERIC),
        FeatureSpec("sex", CATEGORICAL),
        FeatureSpec("region", CATEGORICAL),
        FeatureSpec("visits", NUMERIC),
    )
    n = 300

    def draw(k):
        return Table(
            schema,
            (
                np.round(rng.normal(45, 12, k)),
                np.round(rng.lognormal(10, 0.4, k), 2),
                np.array(["F", "M"])[rng.integers(0, 2, k)],
                np.array(["north", "south", "east", "west"])[rng.integers(0, 4, k)],
                rng.poisson(3, k).astype(float),
            ),
        )

    r, u = draw(n), draw(n)
    copies = jitter(rng, r.take(rng.choice(n, n // 2, replace=False)), 0.01)
    fresh = draw(n - n // 2)

    s = concat_tables([copies, fresh])
    s = Table(
        schema,
        tuple(np.round(c, 2) if spec.is_numeric else c for spec, c in zip(schema, s.columns)),
    )
    return Bundle(r, u, s)
