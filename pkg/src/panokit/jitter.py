"""Vertical-acceleration jitter analysis: detrend, smooth, downsample, and
summary statistics for walking-induced oscillation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EvenWindow, InvariantViolation, ParseError, TooShort


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    rate: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).reshape(-1)
        if len(s) < 1:
            raise InvariantViolation("time series needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise InvariantViolation("non-finite sample")
        if not self.rate > 0:
            raise InvariantViolation("sample rate must be positive")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "rate", float(self.rate))

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class JitterStats:
    rms: float
    peak_to_peak: float
    dominant_frequency: float | None

    def to_json_dict(self) -> dict:
        return {"rms": self.rms, "peak_to_peak": self.peak_to_peak,
                "dominant_frequency": self.dominant_frequency}


def detrend_mean(s: TimeSeries) -> TimeSeries:
    """Subtract the arithmetic mean."""
    return TimeSeries(s.samples - s.samples.mean(), s.rate)


def moving_average(s: TimeSeries, window: int) -> TimeSeries:
    """Centered mean over `window` samples; near the edges the window
    truncates to the available samples so the length is preserved."""
    if window < 1:
        raise InvariantViolation("window must be >= 1")
    if window % 2 == 0:
        raise EvenWindow(f"window must be odd, got {window}")
    n = len(s)
    k = window // 2
    csum = np.concatenate([[0.0], np.cumsum(s.samples)])
    lo = np.maximum(np.arange(n) - k, 0)
    hi = np.minimum(np.arange(n) + k + 1, n)
    out = (csum[hi] - csum[lo]) / (hi - lo)
    return TimeSeries(out, s.rate)


def downsample(s: TimeSeries, factor: int) -> TimeSeries:
    """Keep every factor-th sample starting at index 0."""
    if factor < 1:
        raise InvariantViolation("factor must be >= 1")
    return TimeSeries(s.samples[::factor], s.rate / factor)


def jitter_stats(s: TimeSeries) -> JitterStats:
    """RMS and peak-to-peak of the mean-detrended series, plus the frequency
    of the strongest positive DFT bin (None for a constant series)."""
    if len(s) < 4:
        raise TooShort(f"need at least 4 samples, got {len(s)}")
    d = s.samples - s.samples.mean()
    rms = float(np.sqrt(np.mean(d ** 2)))
    ptp = float(np.max(d) - np.min(d))
    if ptp == 0.0:
        return JitterStats(rms=rms, peak_to_peak=ptp, dominant_frequency=None)
    spectrum = np.abs(np.fft.rfft(d))
    bin_idx = 1 + int(np.argmax(spectrum[1:]))  # skip DC
    freq = bin_idx * s.rate / len(s)
    return JitterStats(rms=rms, peak_to_peak=ptp, dominant_frequency=float(freq))


def load_imu_csv(path, column: str = "az") -> TimeSeries:
    """CSV with header "timestamp,ax,ay,az"; the rate comes from the span of
    the timestamps."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "timestamp" not in reader.fieldnames:
            raise ParseError(f"{path}: missing CSV header with 'timestamp'")
        if column not in reader.fieldnames:
            raise ParseError(f"{path}: no column {column!r} in header "
                             f"{reader.fieldnames}")
        times, values = [], []
        for i, row in enumerate(reader):
            try:
                times.append(float(row["timestamp"]))
                values.append(float(row[column]))
            except (TypeError, ValueError) as e:
                raise ParseError(f"{path}: row {i + 2}: {e}") from e
    if len(times) < 2:
        raise TooShort(f"{path}: need at least 2 rows to infer the rate")
    t = np.array(times)
    if np.any(np.diff(t) <= 0):
        raise InvariantViolation(f"{path}: timestamps not strictly increasing")
    rate = (len(t) - 1) / (t[-1] - t[0])
    return TimeSeries(np.array(values), rate)
