"""CSV ingestion, windowing, and normalization."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    """Malformed input data; message carries row/column coordinates."""


LABEL_COLUMN = "label"


@dataclass
class LabeledSeries:
    values: np.ndarray               # (T, D)
    labels: np.ndarray | None = None  # (T,) of {0,1}
    feature_names: tuple = ()
    tick: float = 1.0                # abstract sampling interval

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"series must be 2-D, got shape {self.values.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.values.shape[0],):
                raise DataError(
                    f"labels length {self.labels.shape} does not match "
                    f"T={self.values.shape[0]}"
                )
            bad = ~np.isin(self.labels, (0, 1))
            if bad.any():
                raise DataError(
                    f"labels must be 0/1; first bad row {int(np.argmax(bad))}"
                )
            self.labels = self.labels.astype(np.int8)
        if not self.feature_names:
            self.feature_names = tuple(
                f"f{i}" for i in range(self.values.shape[1])
            )

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def load_csv(path: str) -> LabeledSeries:
    """Read a header CSV of real-valued feature columns.

    A column named "label" (exactly) is split off as the 0/1 anomaly flags.
    Non-numeric or non-finite cells are rejected with their row and column;
    row numbers count from 1 at the header.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or all(not h for h in header):
            raise DataError(f"{path}: header row is empty")
        try:
            label_idx = header.index(LABEL_COLUMN)
        except ValueError:
            label_idx = None
        feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)
        if not feature_names:
            raise DataError(f"{path}: no feature columns besides '{LABEL_COLUMN}'")

        rows, labels = [], []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(cells)} cells, "
                    f"expected {len(header)}"
                )
            vals = []
            for i, cell in enumerate(cells):
                if i == label_idx:
                    if cell.strip() not in ("0", "1"):
                        raise DataError(
                            f"{path}: row {lineno}, column '{header[i]}': "
                            f"label must be 0 or 1, got '{cell.strip()}'"
                        )
                    labels.append(int(cell))
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column '{header[i]}': "
                        f"non-numeric value '{cell.strip()}'"
                    ) from None
                if not np.isfinite(v):
                    raise DataError(
                        f"{path}: row {lineno}, column '{header[i]}': "
                        f"non-finite value '{cell.strip()}'"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return LabeledSeries(
        values=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int8) if label_idx is not None else None,
        feature_names=feature_names,
    )


def write_csv(series: LabeledSeries, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(series.feature_names)
        if series.labels is not None:
            header.append(LABEL_COLUMN)
        writer.writerow(header)
        for t in range(series.length):
            row = [repr(float(v)) for v in series.values[t]]
            if series.labels is not None:
                row.append(str(int(series.labels[t])))
            writer.writerow(row)


def feature_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std; constant features get std 1 (no-op scaling)."""
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    return mean, std


def standardize(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (values - mean) / std


def make_windows(values: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Overlapping windows (n, window, D); the ragged tail is dropped.

    Starts run 0, stride, 2*stride, ... while a full window fits, giving
    floor((T - window)/stride) + 1 windows.  Standardization is the caller's
    job (statistics must come from the training split, never from test).
    """
    total = values.shape[0]
    if window > total:
        raise DataError(f"window {window} exceeds series length {total}")
    if window < 1 or stride < 1:
        raise DataError(f"window and stride must be positive, got {window}/{stride}")
    count = (total - window) // stride + 1
    return np.stack([values[i * stride:i * stride + window] for i in range(count)])


def split_series(series: LabeledSeries, ratio: float) -> tuple[LabeledSeries, LabeledSeries]:
    """Chronological train/test split at floor(ratio * T)."""
    if not (0.0 < ratio < 1.0):
        raise DataError(f"split ratio must lie in (0, 1), got {ratio}")
    cut = int(series.length * ratio)
    if cut == 0 or cut == series.length:
        raise DataError(f"split ratio {ratio} leaves an empty side for T={series.length}")
    lab = series.labels
    return (
        LabeledSeries(series.values[:cut],
                      None if lab is None else lab[:cut],
                      series.feature_names, series.tick),
        LabeledSeries(series.values[cut:],
                      None if lab is None else lab[cut:],
                      series.feature_names, series.tick),
    )
