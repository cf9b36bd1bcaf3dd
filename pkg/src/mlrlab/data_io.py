"""Real-data ingestion: CSV parsing, nominal-field handling, normalization.

Every kept column, response included, is mean-centered and scaled to unit
Euclidean norm.  An optional all-ones bias column is appended afterwards
and left as is.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Union

import numpy as np
import pandas as pd

from .core import Dataset
from .exceptions import ConstantColumn, UnknownDataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IngestConfig:
    response_column: Union[str, int] = -1
    drop_columns: tuple = ()
    add_bias: bool = True
    nan_policy: str = "drop-row"
    delimiter: str = ","

    def __post_init__(self):
        if self.nan_policy != "drop-row":
            raise ValueError("only the 'drop-row' NaN policy is supported")
        object.__setattr__(self, "drop_columns", tuple(self.drop_columns))


@dataclass(frozen=True)
class DatasetRegistryEntry:
    name: str
    expected_n: int
    expected_d: int
    add_bias: bool = True
    title: str = ""
    response: str = ""


@dataclass
class ValidationReport:
    ok: bool
    discrepancies: list = field(default_factory=list)


def load_registry() -> dict:
    text = resources.files("mlrlab").joinpath("registry.json").read_text(encoding="utf-8")
    return {name: DatasetRegistryEntry(name=name, **fields) for name, fields in json.loads(text).items()}


def registry_entry(name) -> DatasetRegistryEntry:
    reg = load_registry()
    if name not in reg:
        raise UnknownDataset(f"unknown dataset {name!r}; known: {', '.join(sorted(reg))}")
    return reg[name]


def normalize_column(v):
    """Center and scale to unit Euclidean norm; ``None`` for a constant column."""
    c = np.asarray(v, dtype=float) - np.mean(v)
    norm = np.linalg.norm(c)
    if norm == 0:
        return None
    return c / norm


def _binary_codes(col):
    # first category seen maps to 0
    cats = list(dict.fromkeys(col.tolist()))
    return col.map({cats[0]: 0.0, cats[1]: 1.0}).astype(float)


def ingest_frame(df: pd.DataFrame, cfg: IngestConfig) -> Dataset:
    """Apply the preprocessing pipeline to an already parsed table."""
    resp = cfg.response_column
    if isinstance(resp, int):
        try:
            resp = df.columns[resp]
        except IndexError:
            raise KeyError(f"response column index {cfg.response_column} out of range") from None
    if resp not in df.columns:
        raise KeyError(f"response column {resp!r} not found")
    missing = [c for c in cfg.drop_columns if c not in df.columns]
    if missing:
        logger.warning("drop_columns not present: %s", missing)
    df = df.drop(columns=[c for c in cfg.drop_columns if c in df.columns])
    df = df.dropna(axis=0, how="any").reset_index(drop=True)

    kept = {}
    for name in df.columns:
        col = df[name]
        if pd.api.types.is_bool_dtype(col):
            col = col.astype(float)
        elif not pd.api.types.is_numeric_dtype(col):
            numeric = pd.to_numeric(col, errors="coerce")
            if numeric.notna().all():
                col = numeric
            elif col.nunique() == 2:
                col = _binary_codes(col)
            elif name == resp:
                raise ValueError(f"response column {resp!r} is not numeric")
            else:
                logger.warning("dropping nominal column %r with %d categories", name, col.nunique())
                continue
        kept[name] = col.to_numpy(dtype=float)

    columns = []
    X_cols = []
    for name, values in kept.items():
        normed = normalize_column(values)
        if normed is None:
            raise ConstantColumn(name)
        if name == resp:
            y = normed
        else:
            X_cols.append(normed)
            columns.append(name)
    n = len(df)
    if cfg.add_bias:
        X_cols.append(np.ones(n))
        columns.append("bias")
    X = np.column_stack(X_cols) if X_cols else np.empty((n, 0))
    return Dataset(X, y, columns=tuple(columns))


def ingest_csv(path, cfg: IngestConfig = IngestConfig()) -> Dataset:
    """Read a headed CSV (RFC 4180 quoting) and preprocess it for fitting."""
    df = pd.read_csv(path, sep=cfg.delimiter, skipinitialspace=False)
    return ingest_frame(df, cfg)


def validate_against_registry(data: Dataset, entry) -> ValidationReport:
    """Compare ``(n, d)`` of an ingested dataset with the registry values."""
    if isinstance(entry, str):
        entry = registry_entry(entry)
    problems = []
    if data.n != entry.expected_n:
        problems.append(f"{entry.name}: n={data.n}, expected {entry.expected_n}")
    if data.d != entry.expected_d:
        problems.append(f"{entry.name}: d={data.d}, expected {entry.expected_d}")
    return ValidationReport(ok=not problems, discrepancies=problems)
