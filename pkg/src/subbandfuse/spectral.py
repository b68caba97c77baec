"""STFT front end and the LPS / phase / real / imaginary feature views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .records import FeatureKind, FeatureMatrix, SubbandSpec, Waveform, full_band

LOG_FLOOR = 1e-10
TARGET_FRAMES = 600


@dataclass(frozen=True)
class StftConfig:
    window: str = "blackman"
    window_len: int = 1728
    hop: int = 130
    fft_len: int | None = None
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len:
            raise ValueError(f"need 0 < hop <= window_len, got hop={self.hop}, window_len={self.window_len}")
        if self.n_fft < self.window_len:
            raise ValueError("fft_len must be >= window_len")

    @property
    def n_fft(self) -> int:
        return self.window_len if self.fft_len is None else self.fft_len

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass
class ComplexSpectrogram:
    real: np.ndarray
    imag: np.ndarray
    config: StftConfig
    trial_id: str = ""

    @property
    def shape(self):
        return self.real.shape


def analysis_window(cfg: StftConfig) -> np.ndarray:
    # periodic (DFT-even) variant, as used by common STFT front ends
    return get_window(cfg.window, cfg.window_len, fftbins=True)


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    padded = max(n_samples, cfg.window_len)
    return (padded - cfg.window_len) // cfg.hop + 1


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform without centering.

    Frame ``t`` covers samples ``[t*hop, t*hop + window_len)``. Signals
    shorter than one window are zero-padded at the tail.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("waveform must be one-dimensional")
    if len(x) < cfg.hop:
        raise ValueError(f"waveform of {len(x)} samples is shorter than one hop ({cfg.hop})")
    if w.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(f"sample rate {w.sample_rate_hz} Hz does not match config {cfg.sample_rate_hz} Hz")
    if len(x) < cfg.window_len:
        x = np.concatenate([x, np.zeros(cfg.window_len - len(x))])
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[:: cfg.hop]
    spec = np.fft.rfft(frames * analysis_window(cfg), n=cfg.n_fft, axis=1).T
    return ComplexSpectrogram(
        real=np.ascontiguousarray(spec.real),
        imag=np.ascontiguousarray(spec.imag),
        config=cfg,
        trial_id=w.source_id,
    )


def _full(spec: ComplexSpectrogram, data: np.ndarray, kind: FeatureKind) -> FeatureMatrix:
    return FeatureMatrix(data=data, kind=kind, band=full_band(spec.real.shape[0]), trial_id=spec.trial_id)


def to_magnitude(spec: ComplexSpectrogram) -> FeatureMatrix:
    return _full(spec, np.hypot(spec.real, spec.imag), FeatureKind.MAGNITUDE)


def to_lps(spec: ComplexSpectrogram, floor: float = LOG_FLOOR) -> FeatureMatrix:
    """Natural-log magnitude with an additive floor so silence stays finite."""
    return _full(spec, np.log(np.hypot(spec.real, spec.imag) + floor), FeatureKind.LPS)


def to_phase_angle(spec: ComplexSpectrogram) -> FeatureMatrix:
    # np.arctan2 gives 0 at (0, 0) and pi at (-0.0 < x, +0.0); -0.0 imaginary
    # parts would map to -pi, so they are folded to +0.0 to stay in (-pi, pi].
    imag = spec.imag + 0.0
    return _full(spec, np.arctan2(imag, spec.real), FeatureKind.PA)


def to_real_imag(spec: ComplexSpectrogram) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Rebuild real and imaginary views from magnitude and phase angle."""
    mag = to_magnitude(spec).data
    theta = to_phase_angle(spec).data
    return (
        _full(spec, mag * np.cos(theta), FeatureKind.REAL),
        _full(spec, mag * np.sin(theta), FeatureKind.IMAG),
    )


def feature_view(spec: ComplexSpectrogram, kind: FeatureKind) -> FeatureMatrix:
    kind = FeatureKind(kind)
    if kind is FeatureKind.LPS:
        return to_lps(spec)
    if kind is FeatureKind.PA:
        return to_phase_angle(spec)
    if kind is FeatureKind.MAGNITUDE:
        return to_magnitude(spec)
    real, imag = to_real_imag(spec)
    return real if kind is FeatureKind.REAL else imag


def fix_frames(m: FeatureMatrix, target_frames: int = TARGET_FRAMES) -> FeatureMatrix:
    """Truncate to the first ``target_frames`` frames, or tile from the start."""
    if target_frames <= 0:
        raise ValueError(f"target frame count must be positive, got {target_frames}")
    n = m.data.shape[1]
    if n == 0:
        raise ValueError("feature matrix has no frames")
    if n >= target_frames:
        data = m.data[:, :target_frames]
    else:
        reps = -(-target_frames // n)
        data = np.tile(m.data, (1, reps))[:, :target_frames]
    return FeatureMatrix(np.ascontiguousarray(data), m.kind, m.band, m.trial_id)


def slice_subband(m: FeatureMatrix, band: SubbandSpec) -> FeatureMatrix:
    if m.band.start_bin != 0 or m.band.name != "Full":
        raise ValueError(f"expected a Full-band matrix, got band {m.band.name}")
    band.check(m.data.shape[0])
    data = m.data[band.start_bin : band.end_bin]
    return FeatureMatrix(np.ascontiguousarray(data), m.kind, band, m.trial_id)


def extract_feature(
    w: Waveform,
    kind: FeatureKind,
    band: SubbandSpec,
    cfg: StftConfig = StftConfig(),
    target_frames: int = TARGET_FRAMES,
) -> FeatureMatrix:
    """Waveform -> band-limited feature of exactly ``target_frames`` frames."""
    full = feature_view(stft(w, cfg), kind)
    return fix_frames(slice_subband(full, band), target_frames)
