"""Data model for partially observed numeric tables.

A table is an N x D float64 matrix with a {0, 1} observation mask; missing
cells carry NaN. Loading, masking, column-wise standardization, and
missing-entry initialization all live here. Everything is value-semantic:
operations return new objects and never mutate their inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

STD_FLOOR = 1e-12

# Tokens accepted as "missing" on input regardless of the configured one.
_MISSING_TOKENS = {"", "nan"}


class CsvFormatError(ValueError):
    """Raised when a CSV file violates the expected numeric-table format."""


@dataclass(frozen=True)
class StandardizationStats:
    """Per-column mean and standard deviation computed from observed cells.

    std uses the sample formula (ddof=1) when a column has >= 2 observed
    entries and is floored at STD_FLOOR so constant columns stay invertible.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or std.shape != mean.shape:
            raise ValueError("mean and std must be 1-D vectors of equal length")
        if not np.all(std > 0.0):
            raise ValueError("std entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """(values - mean) / std on every finite entry; NaNs pass through."""
        values = np.asarray(values, dtype=np.float64)
        self._check_width(values)
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        """Exact inverse of apply on every finite entry."""
        values = np.asarray(values, dtype=np.float64)
        self._check_width(values)
        return values * self.std + self.mean

    def _check_width(self, values: np.ndarray) -> None:
        if values.ndim != 2 or values.shape[1] != self.mean.shape[0]:
            raise ValueError(
                f"expected {self.mean.shape[0]} columns, got shape {values.shape}"
            )


@dataclass(frozen=True)
class TabularDataset:
    """N x D numeric table with observation mask and optional ground truth.

    values[i, d] is NaN exactly where mask[i, d] == 0. truth, when present,
    is fully observed and aligned with values. Instances are treated as
    immutable; all operations hand back new arrays.
    """

    values: np.ndarray
    mask: np.ndarray
    truth: Optional[np.ndarray] = None
    column_names: Optional[list[str]] = field(default=None)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"values must be a non-empty 2-D matrix, got {values.shape}")
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        if not np.array_equal(np.isnan(values), mask == 0.0):
            raise ValueError("values must be NaN exactly where mask == 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=np.float64)
            if truth.shape != values.shape:
                raise ValueError(f"truth shape {truth.shape} != values shape {values.shape}")
            if not np.all(np.isfinite(truth)):
                raise ValueError("truth must not contain missing or non-finite values")
            object.__setattr__(self, "truth", truth)
        if self.column_names is not None and len(self.column_names) != values.shape[1]:
            raise ValueError(
                f"{len(self.column_names)} column names for {values.shape[1]} columns"
            )

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def observed_column_counts(self) -> np.ndarray:
        return self.mask.sum(axis=0)


def from_complete(
    truth: np.ndarray,
    mask: np.ndarray,
    column_names: Optional[Sequence[str]] = None,
) -> TabularDataset:
    """Build a dataset by hiding entries of a complete matrix under mask."""
    truth = np.asarray(truth, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    values = np.where(mask == 1.0, truth, np.nan)
    names = list(column_names) if column_names is not None else None
    return TabularDataset(values=values, mask=mask, truth=truth, column_names=names)


def _parse_cell(cell: str, missing_token: str, row: int, col: int) -> float:
    text = cell.strip()
    if text == missing_token or text.lower() in _MISSING_TOKENS:
        return np.nan
    try:
        value = float(text)
    except ValueError:
        raise CsvFormatError(
            f"cell at row {row}, column {col} is not numeric: {text!r}"
        ) from None
    if not np.isfinite(value):
        raise CsvFormatError(f"cell at row {row}, column {col} is not finite: {text!r}")
    return value


def load_csv(
    path: str,
    has_header: bool = False,
    missing_token: str = "",
) -> TabularDataset:
    """Read a numeric CSV; empty/NaN cells become missing entries.

    Rows are 1-indexed in error messages, counted after the header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    names: Optional[list[str]] = None
    if has_header:
        if not rows:
            raise CsvFormatError(f"{path}: empty file")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(
                f"{path}: row {i + 1} has {len(row)} cells, expected {width}"
            )
        for j, cell in enumerate(row):
            data[i, j] = _parse_cell(cell, missing_token, i + 1, j + 1)
    mask = (~np.isnan(data)).astype(np.float64)
    return TabularDataset(values=data, mask=mask, column_names=names)


def _format_value(v: float) -> str:
    if np.isnan(v):
        return ""
    return repr(float(v))


def write_csv(
    path: str,
    values: np.ndarray,
    column_names: Optional[Sequence[str]] = None,
) -> None:
    """Write a numeric matrix as CSV; NaN cells become empty strings.

    Values are formatted with shortest round-trip precision so that
    load_csv(write_csv(x)) reproduces x exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if column_names is not None:
            writer.writerow(list(column_names))
        for row in values:
            writer.writerow([_format_value(v) for v in row])


def load_mask_csv(path: str) -> np.ndarray:
    """Read a 0/1 mask CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty mask file")
    width = len(rows[0])
    mask = np.empty((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(
                f"{path}: row {i + 1} has {len(row)} cells, expected {width}"
            )
        for j, cell in enumerate(row):
            text = cell.strip()
            if text not in ("0", "1"):
                raise CsvFormatError(
                    f"{path}: mask cell at row {i + 1}, column {j + 1} "
                    f"must be 0 or 1, got {text!r}"
                )
            mask[i, j] = float(text)
    return mask


def write_mask_csv(path: str, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in mask:
            writer.writerow([str(int(v)) for v in row])


def _observed_stats(ds: TabularDataset) -> StandardizationStats:
    counts = ds.observed_column_counts()
    if np.any(counts < 1):
        bad = int(np.argmin(counts))
        raise ValueError(f"column {bad} has no observed entries")
    mean = np.nanmean(ds.values, axis=0)
    std = np.empty(ds.n_cols, dtype=np.float64)
    for d in range(ds.n_cols):
        col = ds.values[ds.mask[:, d] == 1.0, d]
        std[d] = col.std(ddof=1) if col.size >= 2 else 0.0
    std = np.maximum(std, STD_FLOOR)
    return StandardizationStats(mean=mean, std=std)


def standardize(ds: TabularDataset) -> tuple[TabularDataset, StandardizationStats]:
    """Column-wise z-scoring from observed entries only.

    Missing cells stay NaN; truth (when present) is transformed with the
    same statistics so metric comparisons stay in one space.
    """
    stats = _observed_stats(ds)
    values = stats.apply(ds.values)
    truth = stats.apply(ds.truth) if ds.truth is not None else None
    return (
        replace(ds, values=values, truth=truth),
        stats,
    )


def destandardize(ds: TabularDataset, stats: StandardizationStats) -> TabularDataset:
    """Inverse of standardize for a dataset produced with the same stats."""
    values = stats.invert(ds.values)
    truth = stats.invert(ds.truth) if ds.truth is not None else None
    return replace(ds, values=values, truth=truth)


def initialize_missing(
    ds: TabularDataset,
    seed: int,
    noise_scale: float = 0.1,
) -> np.ndarray:
    """Dense starting matrix: observed cells verbatim, missing cells set to
    the observed column mean plus N(0, noise_scale^2) jitter.

    The jitter keeps initial particles distinct so kernel interactions are
    non-degenerate. Deterministic for a fixed seed.
    """
    counts = ds.observed_column_counts()
    if np.any(counts < 1):
        bad = int(np.argmin(counts))
        raise ValueError(f"column {bad} has no observed entries")
    rng = np.random.default_rng(seed)
    means = np.nanmean(ds.values, axis=0)
    noise = noise_scale * rng.standard_normal(ds.values.shape)
    filled = np.broadcast_to(means, ds.values.shape) + noise
    return np.where(ds.mask == 1.0, ds.values, filled)
