"""Categorical covariate schemas, dummy encoding, and grouped coefficient vectors.

Every covariate (factor) has levels coded ``0 .. num_levels-1`` where level 0
is the reference category and carries no parameter.  The design matrix puts an
intercept column first, followed by the dummy columns of each factor in schema
order; factor ``j`` with ``num_levels`` levels contributes ``num_levels - 1``
columns, one per non-reference level.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DimensionError, SchemaError

SCALES = ("nominal", "ordinal")


@dataclass(frozen=True)
class FactorSpec:
    """One categorical covariate.

    Parameters
    ----------
    name : str
        Column name used in CSV files and reports.
    num_levels : int
        Number of observed categories (>= 2), coded ``0 .. num_levels-1``.
    scale : {"nominal", "ordinal"}
        Measurement scale.  Nominal factors compare every pair of levels
        when fusing; ordinal factors compare adjacent levels only.
    """

    name: str
    num_levels: int
    scale: str = "nominal"

    def __post_init__(self):
        if int(self.num_levels) != self.num_levels or self.num_levels < 2:
            raise SchemaError(
                f"factor {self.name!r}: num_levels must be an integer >= 2, "
                f"got {self.num_levels!r}"
            )
        if self.scale not in SCALES:
            raise SchemaError(
                f"factor {self.name!r}: scale must be one of {SCALES}, got {self.scale!r}"
            )

    @property
    def num_params(self) -> int:
        """Coefficients carried by this factor (levels minus the reference)."""
        return self.num_levels - 1


@dataclass(frozen=True)
class ModelSchema:
    """Ordered collection of factors defining the design-matrix layout.

    The flattened parameter vector is ``(intercept, block_1, ..., block_J)``
    and has length ``1 + num_params``.
    """

    factors: tuple[FactorSpec, ...]

    def __init__(self, factors: Iterable[FactorSpec]):
        object.__setattr__(self, "factors", tuple(factors))

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    @property
    def num_params(self) -> int:
        """Total number of non-intercept coefficients."""
        return sum(f.num_params for f in self.factors)

    def block_slice(self, j: int) -> slice:
        """Slice of factor ``j``'s coefficients in the flattened (p+1) layout."""
        start = 1 + sum(f.num_params for f in self.factors[:j])
        return slice(start, start + self.factors[j].num_params)

    def column_names(self) -> list[str]:
        names = ["(intercept)"]
        for f in self.factors:
            names.extend(f"{f.name}_{k}" for k in range(1, f.num_levels))
        return names

    def to_jsonable(self) -> list[dict]:
        return [
            {"name": f.name, "num_levels": f.num_levels, "scale": f.scale}
            for f in self.factors
        ]

    @classmethod
    def from_jsonable(cls, items: Sequence[dict]) -> "ModelSchema":
        try:
            factors = [
                FactorSpec(d["name"], int(d["num_levels"]), d.get("scale", "nominal"))
                for d in items
            ]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema entry: {exc}") from exc
        return cls(factors)


@lru_cache(maxsize=None)
def _pairs(num_params: int, scale: str) -> tuple[tuple[int, int], ...]:
    if scale == "ordinal":
        return tuple((r - 1, r) for r in range(1, num_params + 1))
    return tuple(
        (r, s) for r in range(num_params + 1) for s in range(r + 1, num_params + 1)
    )


def difference_set(schema: ModelSchema, j: int) -> list[tuple[int, int]]:
    """Level pairs ``(r, s)``, ``r < s``, compared by the fusion penalty.

    Nominal factors yield all ``p_j (p_j + 1) / 2`` pairs including the
    reference level 0; ordinal factors yield the ``p_j`` adjacent pairs.
    """
    f = schema.factors[j]
    return list(_pairs(f.num_params, f.scale))


@lru_cache(maxsize=None)
def _difference_rows(num_params: int, scale: str) -> np.ndarray:
    """Rows mapping a coefficient block to its level differences.

    Row ``l`` for pair ``(r, s)`` has ``+1`` at position ``r-1`` (absent when
    ``r`` is the reference) and ``-1`` at position ``s-1``, so that
    ``rows @ block`` gives ``beta_r - beta_s`` with ``beta_0 = 0``.
    """
    pairs = _pairs(num_params, scale)
    rows = np.zeros((len(pairs), num_params))
    for l, (r, s) in enumerate(pairs):
        if r > 0:
            rows[l, r - 1] = 1.0
        rows[l, s - 1] = -1.0
    rows.flags.writeable = False
    return rows


def difference_rows(schema: ModelSchema, j: int) -> np.ndarray:
    """Difference matrix for factor ``j`` (one row per ``difference_set`` pair)."""
    f = schema.factors[j]
    return _difference_rows(f.num_params, f.scale)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded design matrix plus the raw level codes it was built from.

    Immutable after construction; all arrays are marked read-only so a
    dataset can be shared across concurrent fits.
    """

    X: np.ndarray
    y: np.ndarray
    schema: ModelSchema
    raw_levels: np.ndarray

    def __post_init__(self):
        for arr in (self.X, self.y, self.raw_levels):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def level_counts(self, j: int) -> np.ndarray:
        """Observation counts per level of factor ``j``, reference included."""
        return np.bincount(
            self.raw_levels[:, j], minlength=self.schema.factors[j].num_levels
        )

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Row subset (used for cross-validation folds)."""
        return Dataset(
            self.X[idx].copy(), self.y[idx].copy(), self.schema, self.raw_levels[idx].copy()
        )


def encode(raw_levels: np.ndarray, schema: ModelSchema, y: np.ndarray) -> Dataset:
    """Dummy-encode integer level codes into a design matrix with intercept.

    Parameters
    ----------
    raw_levels : (n, J) integer array
        Observed level codes, ``0 <= raw_levels[i, j] < num_levels_j``.
    schema : ModelSchema
    y : (n,) array of {0, 1}
        Binary responses.

    Returns
    -------
    Dataset

    Raises
    ------
    DimensionError
        If shapes do not line up with the schema.
    SchemaError
        If a level code is out of range or ``y`` is not binary.
    """
    raw_levels = np.asarray(raw_levels, dtype=np.int64)
    if raw_levels.ndim == 1:
        raw_levels = raw_levels[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    n = raw_levels.shape[0]
    if raw_levels.shape[1] != schema.num_factors:
        raise DimensionError(
            f"raw_levels has {raw_levels.shape[1]} columns, schema has "
            f"{schema.num_factors} factors"
        )
    if y.shape[0] != n:
        raise DimensionError(f"y has length {y.shape[0]}, expected {n}")
    if not np.all((y == 0) | (y == 1)):
        raise SchemaError("response values must be 0 or 1")

    X = np.zeros((n, 1 + schema.num_params))
    X[:, 0] = 1.0
    for j, f in enumerate(schema.factors):
        codes = raw_levels[:, j]
        if codes.min(initial=0) < 0 or codes.max(initial=0) >= f.num_levels:
            raise SchemaError(
                f"factor {f.name!r}: level codes must lie in [0, {f.num_levels - 1}]"
            )
        sl = schema.block_slice(j)
        for r in range(1, f.num_levels):
            X[:, sl.start + r - 1] = codes == r
    return Dataset(X, y, schema, raw_levels)


@dataclass(eq=False)
class CoefVector:
    """Intercept plus per-factor coefficient blocks."""

    intercept: float
    blocks: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros(cls, schema: ModelSchema) -> "CoefVector":
        return cls(0.0, [np.zeros(f.num_params) for f in schema.factors])

    @classmethod
    def from_flat(cls, vec: np.ndarray, schema: ModelSchema) -> "CoefVector":
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.shape[0] != 1 + schema.num_params:
            raise DimensionError(
                f"flat vector has length {vec.shape[0]}, expected {1 + schema.num_params}"
            )
        blocks = [vec[schema.block_slice(j)].copy() for j in range(schema.num_factors)]
        return cls(float(vec[0]), blocks)

    def flatten(self) -> np.ndarray:
        parts = [np.array([self.intercept])]
        parts.extend(np.asarray(b, dtype=np.float64) for b in self.blocks)
        return np.concatenate(parts)

    def copy(self) -> "CoefVector":
        return CoefVector(self.intercept, [b.copy() for b in self.blocks])

    def validate(self, schema: ModelSchema) -> None:
        if len(self.blocks) != schema.num_factors:
            raise DimensionError(
                f"{len(self.blocks)} blocks for a schema with {schema.num_factors} factors"
            )
        for j, f in enumerate(schema.factors):
            if len(self.blocks[j]) != f.num_params:
                raise DimensionError(
                    f"block {j} has length {len(self.blocks[j])}, expected {f.num_params}"
                )

    def to_jsonable(self) -> dict:
        return {
            "intercept": float(self.intercept),
            "blocks": [[float(v) for v in b] for b in self.blocks],
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "CoefVector":
        return cls(float(d["intercept"]), [np.asarray(b, dtype=np.float64) for b in d["blocks"]])


def load_schema_json(path: str) -> ModelSchema:
    """Read a schema sidecar: a JSON list of {name, num_levels, scale}."""
    with open(path) as fh:
        items = json.load(fh)
    if not isinstance(items, list):
        raise SchemaError("schema JSON must be a list of factor objects")
    return ModelSchema.from_jsonable(items)


def load_dataset_csv(path: str, schema: ModelSchema, response: str = "y") -> Dataset:
    """Read a dataset CSV: one integer-coded column per factor plus a 0/1 response."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise DimensionError(f"{path}: no data rows")
    missing = [f.name for f in schema.factors if f.name not in rows[0]]
    if response not in rows[0]:
        missing.append(response)
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    try:
        raw = np.array(
            [[int(row[f.name]) for f in schema.factors] for row in rows], dtype=np.int64
        ).reshape(len(rows), schema.num_factors)
        y = np.array([int(row[response]) for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-integer cell value ({exc})") from exc
    return encode(raw, schema, y)


def save_dataset_csv(dataset: Dataset, path: str, response: str = "y") -> None:
    """Write the raw level codes and response of a dataset to CSV."""
    names = [f.name for f in dataset.schema.factors] + [response]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(dataset.n):
            writer.writerow(list(dataset.raw_levels[i]) + [int(dataset.y[i])])
