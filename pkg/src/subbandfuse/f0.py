"""Autocorrelation F0 tracking and F0 distribution histograms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .records import Waveform


@dataclass(frozen=True)
class F0Config:
    frame_s: float = 0.040
    hop_s: float = 0.010
    min_hz: float = 50.0
    max_hz: float = 500.0
    voicing_threshold: float = 0.3
    silence_dbfs: float = -60.0
    # lowest lag whose peak reaches this fraction of the best peak wins;
    # guards against picking a multiple of the true period
    octave_ratio: float = 0.9


@dataclass
class F0Contour:
    values: np.ndarray
    frame_hop_s: float
    search_range_hz: tuple[float, float] = (50.0, 500.0)

    @property
    def voiced(self) -> np.ndarray:
        return self.values[self.values > 0]


@dataclass
class F0Histogram:
    bin_edges_hz: np.ndarray
    counts: np.ndarray
    n_utterances: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class HistogramSummary:
    fraction_below_400: float
    modal_bin_hz: tuple[float, float]
    smoothness: float
    total: int = field(default=0)


def _lag_bounds(rate: int, cfg: F0Config) -> tuple[int, int]:
    if rate < 2 * cfg.max_hz:
        raise ValueError(f"sample rate {rate} Hz too low for a {cfg.max_hz} Hz search ceiling")
    return int(np.floor(rate / cfg.max_hz)), int(np.ceil(rate / cfg.min_hz))


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    if len(x) < frame_len:
        x = np.concatenate([x, np.zeros(frame_len - len(x))])
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]


def nccf(frame: np.ndarray, lags: np.ndarray, window: int) -> np.ndarray:
    """Normalized cross-correlation of ``frame[:window]`` with its lagged copies."""
    head = frame[:window]
    segs = np.lib.stride_tricks.sliding_window_view(frame, window)[lags]
    denom = np.sqrt((head @ head) * np.einsum("ij,ij->i", segs, segs))
    num = segs @ head
    out = np.zeros(len(lags))
    np.divide(num, denom, out=out, where=denom > 0)
    return out


def _pick_lag(r: np.ndarray, ratio: float) -> int | None:
    """Index of the chosen interior local peak of ``r``."""
    peaks = [i for i in range(1, len(r) - 1) if r[i] >= r[i - 1] and r[i] >= r[i + 1]]
    if not peaks:
        return None
    best = max(r[i] for i in peaks)
    for i in peaks:
        if r[i] >= ratio * best:
            return i
    return None


def estimate_f0(w: Waveform, cfg: F0Config = F0Config()) -> F0Contour:
    """Frame-wise F0 by normalized autocorrelation with parabolic refinement.

    Returns 0 for frames that are silent (below ``silence_dbfs``) or whose
    best correlation peak is below ``voicing_threshold``.
    """
    rate = w.sample_rate_hz
    lo, hi = _lag_bounds(rate, cfg)
    frame_len = int(round(cfg.frame_s * rate))
    hop = int(round(cfg.hop_s * rate))
    window = frame_len - (hi + 1)
    if window <= 0:
        raise ValueError("frame too short for the lag search range")
    lags = np.arange(lo - 1, hi + 2)
    x = np.asarray(w.samples, dtype=np.float64)
    frames = frame_signal(x, frame_len, hop)

    values = np.zeros(len(frames))
    for t, frame in enumerate(frames):
        rms = np.sqrt(np.mean(frame**2))
        if rms <= 0 or 20 * np.log10(rms) < cfg.silence_dbfs:
            continue
        r = nccf(frame, lags, window)
        i = _pick_lag(r, cfg.octave_ratio)
        if i is None or r[i] < cfg.voicing_threshold:
            continue
        denom = r[i - 1] - 2 * r[i] + r[i + 1]
        shift = 0.5 * (r[i - 1] - r[i + 1]) / denom if denom < 0 else 0.0
        f0 = rate / (lags[i] + shift)
        if cfg.min_hz <= f0 <= cfg.max_hz:
            values[t] = f0
    return F0Contour(values=values, frame_hop_s=hop / rate, search_range_hz=(cfg.min_hz, cfg.max_hz))


def default_edges() -> np.ndarray:
    return np.arange(0.0, 505.0, 5.0)


def accumulate_histogram(contours, edges=None) -> F0Histogram:
    edges = default_edges() if edges is None else np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("histogram edges must be strictly increasing")
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    hops = {c.frame_hop_s for c in contours}
    if len(hops) > 1:
        raise ValueError(f"contours disagree on frame hop: {sorted(hops)}")
    for c in contours:
        counts += np.histogram(c.voiced, bins=edges)[0]
    return F0Histogram(bin_edges_hz=edges, counts=counts, n_utterances=len(contours))


def merge_histograms(a: F0Histogram, b: F0Histogram) -> F0Histogram:
    if not np.array_equal(a.bin_edges_hz, b.bin_edges_hz):
        raise ValueError("cannot merge histograms with different edges")
    return F0Histogram(a.bin_edges_hz, a.counts + b.counts, a.n_utterances + b.n_utterances)


def histogram_summary(h: F0Histogram, split_hz: float = 400.0) -> HistogramSummary:
    total = h.total
    if total == 0:
        raise ValueError("empty histogram")
    p = h.counts / total
    lo, hi = h.bin_edges_hz[:-1], h.bin_edges_hz[1:]
    # bins straddling the split contribute pro rata
    overlap = np.clip((np.minimum(hi, split_hz) - lo) / (hi - lo), 0.0, 1.0)
    mode = int(np.argmax(h.counts))
    smooth = float(np.mean(np.abs(np.diff(p)))) if len(p) > 1 else 0.0
    return HistogramSummary(
        fraction_below_400=float(np.sum(p * overlap)),
        modal_bin_hz=(float(lo[mode]), float(hi[mode])),
        smoothness=smooth,
        total=total,
    )


def histogram_csv_rows(h: F0Histogram):
    for a, b, c in zip(h.bin_edges_hz[:-1], h.bin_edges_hz[1:], h.counts):
        yield f"{a:g},{b:g},{int(c)}"
