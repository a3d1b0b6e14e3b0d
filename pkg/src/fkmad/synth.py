"""Synthetic benchmark series with labeled anomaly injections.

Base signals are deliberately desk-scale: independent AR(1) channels, sums
of low-frequency sines, or their mixture.  Anomalies are injected as
events - contiguous labeled stretches - rather than isolated points, so
detectors that exploit temporal context have something to win on: a spike
event is a one-step impulse followed by a geometric ring-down that decays
back into the noise floor, and every step of the event carries a label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataError, LabeledSeries

BASE_KINDS = ("ar1", "multisine", "mixed")
ANOMALY_KINDS = ("spike", "level-shift", "frequency-shift", "variance-burst")


@dataclass
class AnomalySpec:
    kinds: tuple = ("spike",)
    density: float = 0.01       # target fraction of labeled timesteps
    magnitude: float = 10.0     # impulse height in units of feature std
    event_len: int = 10
    min_gap: int = 64           # clean steps enforced between events
    decay: float = 0.55         # spike ring-down ratio per step
    osc_period: int = 4         # ring-down oscillation period in steps

    def validate(self) -> None:
        for k in self.kinds:
            if k not in ANOMALY_KINDS:
                raise DataError(
                    f"unknown anomaly kind '{k}' (choose from {ANOMALY_KINDS})"
                )
        if not self.kinds:
            raise DataError("anomaly spec needs at least one kind")
        if self.density >= 0.5:
            raise DataError(
                f"anomaly density {self.density} too high; the benchmark must "
                "stay anomaly-sparse (< 50%)"
            )
        if self.density < 0:
            raise DataError(f"anomaly density must be nonnegative, got {self.density}")
        if self.event_len < 1 or self.min_gap < 0:
            raise DataError("event_len must be >= 1 and min_gap >= 0")
        if self.osc_period < 2:
            raise DataError(f"osc_period must be >= 2, got {self.osc_period}")


def _base_ar1(total: int, width: int, rng: np.random.Generator,
              rho: float = 0.9) -> np.ndarray:
    noise = rng.standard_normal((total, width)) * np.sqrt(1.0 - rho * rho)
    out = np.empty((total, width))
    state = rng.standard_normal(width)
    for t in range(total):
        state = rho * state + noise[t]
        out[t] = state
    return out


def _base_multisine(total: int, width: int, rng: np.random.Generator,
                    noise_scale: float = 0.03) -> np.ndarray:
    """Sum of tones with slow amplitude envelopes and random-walk phase.

    The drift keeps nearby timesteps strongly correlated while distant ones
    decorrelate, so neighborhood-similarity statistics carry signal; tone
    periods stay >= 48 steps and the drift is slow, keeping the clean
    spectrum in the low-frequency half.
    """
    t = np.arange(total, dtype=np.float64)
    out = np.zeros((total, width))
    for c in range(width):
        n_tones = rng.integers(2, 4)
        periods = rng.uniform(48.0, 160.0, n_tones)
        phases = rng.uniform(0, 2 * np.pi, n_tones)
        amps = rng.uniform(0.5, 1.0, n_tones)
        env_periods = rng.uniform(total / 6.0, total / 2.0, n_tones)
        env_phases = rng.uniform(0, 2 * np.pi, n_tones)
        acc = np.zeros(total)
        for a, p, ph, ep, eph in zip(amps, periods, phases,
                                     env_periods, env_phases):
            drift = np.cumsum(0.03 * rng.standard_normal(total))
            envelope = 1.0 + 0.15 * np.sin(2 * np.pi * t / ep + eph)
            acc += a * envelope * np.sin(2 * np.pi * t / p + ph + drift)
        out[:, c] = acc
    if noise_scale > 0:
        out += noise_scale * rng.standard_normal((total, width))
    return out


def _place_events(total: int, spec: AnomalySpec, rng: np.random.Generator) -> list[int]:
    """Sample event start positions respecting the gap and the density budget."""
    budget = int(spec.density * total)
    n_events = max(0, budget // spec.event_len)
    if n_events == 0:
        return []
    starts: list[int] = []
    taken = np.zeros(total, dtype=bool)
    margin = spec.event_len + spec.min_gap
    attempts = 0
    while len(starts) < n_events and attempts < 200 * n_events:
        attempts += 1
        s = int(rng.integers(spec.min_gap, total - margin))
        lo, hi = max(0, s - margin), min(total, s + margin)
        if taken[lo:hi].any():
            continue
        taken[lo:hi] = True
        starts.append(s)
    return sorted(starts)


def _inject(values: np.ndarray, labels: np.ndarray, start: int, kind: str,
            spec: AnomalySpec, sigma: np.ndarray, rng: np.random.Generator) -> None:
    total, width = values.shape
    length = min(spec.event_len, total - start)
    seg = slice(start, start + length)
    if kind == "spike":
        # struck resonance: the impulse rings down as a damped oscillation,
        # so the tail stays spectrally abnormal after the peak has faded
        c = int(rng.integers(width))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        k = np.arange(length)
        ramp = spec.magnitude * spec.decay ** k
        values[seg, c] += sign * sigma[c] * ramp * np.cos(
            2 * np.pi * k / spec.osc_period)
    elif kind == "level-shift":
        c = int(rng.integers(width))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        values[seg, c] += sign * rng.uniform(2.0, 4.0) * sigma[c]
    elif kind == "frequency-shift":
        c = int(rng.integers(width))
        t = np.arange(length)
        values[seg, c] += 2.0 * sigma[c] * np.sin(2 * np.pi * 0.4 * t)
    elif kind == "variance-burst":
        values[seg] += 3.0 * sigma * rng.standard_normal((length, width))
    labels[seg] = 1


def synth_benchmark(kind: str, total: int, width: int, spec: AnomalySpec,
                    seed: int = 0) -> LabeledSeries:
    """Deterministic labeled benchmark series.

    kind selects the base signal; spec describes the anomaly injections.
    The same (kind, total, width, spec, seed) always produces the same data.
    """
    if kind not in BASE_KINDS:
        raise DataError(f"unknown base kind '{kind}' (choose from {BASE_KINDS})")
    if total < 2 or width < 1:
        raise DataError(f"degenerate series size T={total}, D={width}")
    spec.validate()
    rng = np.random.default_rng(seed)
    if kind == "ar1":
        values = _base_ar1(total, width, rng)
    elif kind == "multisine":
        values = _base_multisine(total, width, rng)
    else:
        values = _base_ar1(total, width, rng) * 0.5 \
            + _base_multisine(total, width, rng) * 0.7
    sigma = values.std(axis=0)
    labels = np.zeros(total, dtype=np.int8)
    for start in _place_events(total, spec, rng):
        kind_pick = spec.kinds[int(rng.integers(len(spec.kinds)))]
        _inject(values, labels, start, kind_pick, spec, sigma, rng)
    return LabeledSeries(values=values, labels=labels)
