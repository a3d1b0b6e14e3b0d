"""Locality / energy / high-frequency-ratio scoring and fusion.

Three per-timestep indicators are computed from model features (or from raw
inputs for ablation), z-normalized against stream statistics, and combined
with fixed weights.  Locality enters the fusion negated: low similarity to
the local neighborhood indicates an anomaly, so flipping its sign makes all
three components point the same way (higher = more anomalous).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import FkmadModel
from .spectral import dft_many, high_frequency_ratio
from .tensor import no_grad


class DegenerateStatsError(ValueError):
    """A fusion stream has zero variance; z-normalization is undefined."""


@dataclass
class FusionConfig:
    w_locality: float = 0.45
    w_energy: float = 0.20
    w_hfr: float = 0.05
    band: int = 3               # locality neighborhood half-width, timesteps
    cutoff: float = 0.5         # HFR cutoff as a fraction of the half-spectrum
    hfr_window: int = 32        # centered sub-window for per-timestep HFR
    source: str = "model"       # "model" or "input" (ablation)

    def validate(self) -> None:
        for name in ("w_locality", "w_energy", "w_hfr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.band < 1:
            raise ValueError(f"band must be >= 1, got {self.band}")
        if not (0.0 < self.cutoff < 1.0):
            raise ValueError(f"cutoff must lie in (0, 1), got {self.cutoff}")
        if self.hfr_window < 2:
            raise ValueError(f"hfr_window must be >= 2, got {self.hfr_window}")
        if self.source not in ("model", "input"):
            raise ValueError(f"unknown scoring source '{self.source}'")


@dataclass
class StreamStats:
    mean: np.ndarray  # (3,), over (neg-locality, energy, hfr)
    std: np.ndarray   # (3,)


@dataclass
class ScoreResult:
    locality: np.ndarray
    energy: np.ndarray
    hfr: np.ndarray
    fused: np.ndarray
    stats: StreamStats
    coverage: int  # timesteps covered by full windows


class RunningStats:
    """Welford accumulator for streaming-mode normalization."""

    def __init__(self, width: int):
        self.count = 0
        self.mean = np.zeros(width)
        self._m2 = np.zeros(width)

    def update(self, row: np.ndarray) -> None:
        self.count += 1
        delta = row - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (row - self.mean)

    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self._m2 / self.count)


def similarity_matrix(rows: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of the rows of (L, D).

    Zero-norm rows get 0 off-diagonal and 1 on the diagonal, the convention
    "a silent timestep resembles nothing but itself".
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] < 2:
        raise ValueError(f"need at least two rows, got {rows.shape[0]}")
    norms = np.linalg.norm(rows, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = rows / safe[:, None]
    sim = unit @ unit.T
    dead = norms == 0
    if dead.any():
        sim[dead, :] = 0.0
        sim[:, dead] = 0.0
    np.fill_diagonal(sim, 1.0)
    return sim


def locality(sim: np.ndarray, band: int) -> np.ndarray:
    """Band-mean minus off-band-mean of similarities, per timestep.

    Band: 0 < |i - j| <= band; off: |i - j| > band; the diagonal belongs to
    neither.  An empty region contributes 0 to the difference (only happens
    for the off region when L <= band + 1).
    """
    length = sim.shape[0]
    if not (1 <= band < length):
        raise ValueError(f"band {band} out of range for length {length}")
    dist = np.abs(np.subtract.outer(np.arange(length), np.arange(length)))
    band_mask = (dist > 0) & (dist <= band)
    off_mask = dist > band
    band_counts = band_mask.sum(axis=0)
    off_counts = off_mask.sum(axis=0)
    band_mean = np.where(band_counts > 0,
                         (sim * band_mask).sum(axis=0) / np.maximum(band_counts, 1),
                         0.0)
    off_mean = np.where(off_counts > 0,
                        (sim * off_mask).sum(axis=0) / np.maximum(off_counts, 1),
                        0.0)
    return band_mean - off_mean


def log_energy(rows: np.ndarray) -> np.ndarray:
    """log(1 + mean_i x_i^2) per row; rows (L, N) -> (L,)."""
    rows = np.asarray(rows, dtype=np.float64)
    return np.log1p((rows * rows).mean(axis=1))


def hfr_stream(values: np.ndarray, cutoff: float, window: int) -> np.ndarray:
    """Per-timestep high-frequency ratio on a centered sliding sub-window.

    values is (T, C); spectral power is pooled over channels inside each
    sub-window before the ratio.  Windows are clamped at the stream edges;
    a stream shorter than the sub-window falls back to one full-stream
    window shared by every timestep.
    """
    values = np.asarray(values, dtype=np.float64)
    total = values.shape[0]
    if total < 2:
        return np.zeros(total)
    window = min(window, total)
    n_win = total - window + 1
    # (n_win, window, C) view, no copy
    slid = np.lib.stride_tricks.sliding_window_view(values, window, axis=0)
    slid = np.moveaxis(slid, -1, 1)  # (n_win, window, C)
    spectra = dft_many(np.moveaxis(slid, 1, 2))  # (n_win, C, window)
    power = (np.abs(spectra) ** 2).sum(axis=1)   # pooled over channels
    ratios = np.array([high_frequency_ratio(p, cutoff) for p in power])
    half = window // 2
    pos = np.clip(np.arange(total) - half, 0, n_win - 1)
    return ratios[pos]


def fuse(neg_locality: np.ndarray, energy: np.ndarray, hfr: np.ndarray,
         cfg: FusionConfig, stats: StreamStats | None = None
         ) -> tuple[np.ndarray, StreamStats]:
    """Weighted sum of z-normalized streams; locality must arrive negated.

    Stats are fitted on the streams themselves unless supplied (e.g. from a
    held-out normal segment or a running estimator).
    """
    streams = np.stack([neg_locality, energy, hfr], axis=1)  # (T, 3)
    if stats is None:
        stats = StreamStats(mean=streams.mean(axis=0), std=streams.std(axis=0))
    bad = np.nonzero(stats.std <= 0)[0]
    if bad.size:
        names = np.array(["locality", "energy", "hfr"])[bad]
        raise DegenerateStatsError(
            f"zero variance in stream(s): {', '.join(names)}"
        )
    z = (streams - stats.mean) / stats.std
    weights = np.array([cfg.w_locality, cfg.w_energy, cfg.w_hfr])
    return z @ weights, stats


def score_series(model: FkmadModel, values: np.ndarray, cfg: FusionConfig,
                 window: int, stats: StreamStats | None = None,
                 batch: int = 64) -> ScoreResult:
    """Score a standardized series (T, D) with non-overlapping window tiling.

    Energy comes from the gated scan output; locality (per window) and HFR
    (on the concatenated stream) come from the projected hidden features.
    With source="input" all three are computed on the raw window values.
    The tail that does not fill a window is not scored.
    """
    cfg.validate()
    values = np.asarray(values, dtype=np.float64)
    total = values.shape[0]
    if window > total:
        raise ValueError(f"window {window} exceeds series length {total}")
    n_win = total // window
    coverage = n_win * window

    loc_parts = []
    en_parts = []
    feat_parts = []
    with no_grad():
        for start in range(0, n_win, batch):
            stack = np.stack([
                values[i * window:(i + 1) * window]
                for i in range(start, min(start + batch, n_win))
            ])
            if cfg.source == "model":
                fwd = model.forward(stack)
                y = fwd.trace.y_gated.data
                hidden = fwd.hidden.data
            else:
                y = stack
                hidden = stack
            for b in range(stack.shape[0]):
                loc_parts.append(locality(similarity_matrix(hidden[b]),
                                          min(cfg.band, window - 1)))
                en_parts.append(log_energy(y[b]))
                feat_parts.append(hidden[b])

    loc = np.concatenate(loc_parts)
    energy = np.concatenate(en_parts)
    feats = np.concatenate(feat_parts, axis=0)
    hfr = hfr_stream(feats, cfg.cutoff, cfg.hfr_window)
    fused, fitted = fuse(-loc, energy, hfr, cfg, stats)
    return ScoreResult(locality=loc, energy=energy, hfr=hfr, fused=fused,
                       stats=fitted, coverage=coverage)
