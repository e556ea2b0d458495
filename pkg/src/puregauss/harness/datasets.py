"""Count series: CSV ingestion, normalisation and a synthetic generator."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import os

import numpy as np

from puregauss.errors import DataError, DomainError
from puregauss.mechanisms import make_rng


@dataclasses.dataclass(frozen=True)
class SeriesDataset:
    """Daily counts and their ``[0, 1]`` normalisation by the user count.

    Each user contributes at most one unit to each count, so the normalised
    queries have sensitivity ``1 / n_users``.
    """

    name: str
    raw_counts: np.ndarray
    n_users: int
    normalized: np.ndarray
    delta_sens: float

    @classmethod
    def from_counts(cls, counts, n_users: int,
                    name: str = "series") -> SeriesDataset:
        if n_users < 1:
            raise DomainError(f"n_users must be >= 1, got {n_users}")
        raw = np.asarray(counts, dtype=float)
        if (raw < 0).any():
            raise DataError("counts must be non-negative")
        normalized = np.minimum(raw / n_users, 1.0)
        return cls(name, raw, int(n_users), normalized, 1.0 / n_users)

    def __len__(self) -> int:
        return self.raw_counts.size


def _parse_float(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def ingest_series(path: str | os.PathLike, n_users: int,
                  name: str | None = None) -> SeriesDataset:
    """Reads one non-negative count per line; a non-numeric first line is
    taken as a header. Blank lines are ignored.

    Raises:
        DataError: on a malformed or negative row (message carries the
          1-based line number) or an empty file.
        FileNotFoundError: if ``path`` does not exist.
    """
    if n_users < 1:
        raise DomainError(f"n_users must be >= 1, got {n_users}")
    counts = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 1:
                raise DataError(f"{path}:{lineno}: expected one value per "
                                f"line, got {len(row)}")
            value = _parse_float(row[0].strip())
            if value is None:
                if lineno == 1:
                    continue
                raise DataError(f"{path}:{lineno}: not a number: {row[0]!r}")
            if value < 0:
                raise DataError(f"{path}:{lineno}: negative count {value}")
            counts.append(value)
    if not counts:
        raise DataError(f"{path}: no data rows")
    if name is None:
        name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return SeriesDataset.from_counts(counts, n_users, name)


def generate_synthetic_series(length: int,
                              seasonality_period: float,
                              amplitude: float,
                              n_users: int,
                              seed: int,
                              level: float = 0.5,
                              noise_scale: float = 0.25) -> SeriesDataset:
    """Integer counts ``n_users * (level + amplitude * (sin(2 pi i / period)
    + noise_scale * N(0, 1)))``, clipped to ``[0, n_users]``.

    The noise is proportional to ``amplitude``, so ``amplitude=0`` gives a
    constant series.
    """
    if length < 1:
        raise DomainError(f"length must be >= 1, got {length}")
    if not seasonality_period > 0:
        raise DomainError("seasonality_period must be > 0")
    if n_users < 1:
        raise DomainError(f"n_users must be >= 1, got {n_users}")
    i = np.arange(length)
    wave = np.sin(2.0 * np.pi * i / seasonality_period)
    jitter = noise_scale * make_rng(seed).standard_normal(length)
    frac = np.clip(level + amplitude * (wave + jitter), 0.0, 1.0)
    counts = np.rint(frac * n_users)
    return SeriesDataset.from_counts(counts, n_users, "synthetic")


def series_csv_text(dataset: SeriesDataset) -> str:
    buf = io.StringIO()
    buf.write("count\n")
    for value in dataset.raw_counts:
        buf.write(f"{int(value)}\n" if float(value).is_integer() else
                  f"{value:.17g}\n")
    return buf.getvalue()
