"""Synthetic two-class corpus for desk-scale end-to-end runs.

Bonafide utterances are harmonic tones whose F0 follows a bounded random
walk; spoof utterances hold a constant F0 and carry a little white noise.
The class difference lives almost entirely below 400 Hz, which is what the
F0-subband features look at.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import write_protocol, write_wav
from .records import Label, TrialRecord

F0_LOW = 100.0
F0_HIGH = 300.0


@dataclass(frozen=True)
class SynthConfig:
    sample_rate_hz: int = 16000
    duration_s: float = 2.0
    max_harmonic_hz: float = 3500.0
    walk_step_hz: float = 3.0
    control_s: float = 0.010
    noise_rms: float = 0.003
    peak: float = 0.5


def _walk(rng, n_ctrl: int, start: float, step: float) -> np.ndarray:
    """Random walk reflected into [F0_LOW, F0_HIGH]."""
    out = np.empty(n_ctrl)
    f = start
    for i in range(n_ctrl):
        out[i] = f
        f += rng.normal(0.0, step)
        if f < F0_LOW:
            f = 2 * F0_LOW - f
        if f > F0_HIGH:
            f = 2 * F0_HIGH - f
    return out


def harmonic_tone(f0_track: np.ndarray, rate: int, max_hz: float, phase0: float = 0.0) -> np.ndarray:
    """Sum of harmonics with 1/k amplitudes following a per-sample F0 track."""
    phase = phase0 + 2 * np.pi * np.cumsum(f0_track) / rate
    n_harm = max(1, int(max_hz // f0_track.max()))
    y = np.zeros_like(f0_track)
    for k in range(1, n_harm + 1):
        y += np.sin(k * phase) / k
    return y


def synth_utterance(rng: np.random.Generator, label: Label, cfg: SynthConfig = SynthConfig()) -> np.ndarray:
    n = int(round(cfg.duration_s * cfg.sample_rate_hz))
    base = rng.uniform(120.0, 260.0)
    if label is Label.BONAFIDE:
        n_ctrl = int(np.ceil(cfg.duration_s / cfg.control_s)) + 1
        ctrl = _walk(rng, n_ctrl, base, cfg.walk_step_hz)
        t_ctrl = np.arange(n_ctrl) * cfg.control_s
        track = np.interp(np.arange(n) / cfg.sample_rate_hz, t_ctrl, ctrl)
    else:
        track = np.full(n, base)
    y = harmonic_tone(track, cfg.sample_rate_hz, cfg.max_harmonic_hz, rng.uniform(0, 2 * np.pi))
    y *= cfg.peak / np.max(np.abs(y))
    if label is Label.SPOOF:
        y += rng.normal(0.0, cfg.noise_rms, size=n)
    return np.clip(y, -1.0, 1.0)


def synth_corpus(out_dir, n_per_class: int, seed: int, split: str = "train",
                 cfg: SynthConfig = SynthConfig()) -> list[TrialRecord]:
    """Write ``2 * n_per_class`` WAV files and ``protocol.txt`` into ``out_dir``."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(2 * n_per_class):
        label = Label.BONAFIDE if i % 2 == 0 else Label.SPOOF
        trial = f"SYN_{split}_{i:06d}"
        speaker = f"SYN_{i // 2 % 20:04d}"
        write_wav(out / f"{trial}.wav", synth_utterance(rng, label, cfg), cfg.sample_rate_hz)
        records.append(TrialRecord(speaker, trial, "-" if label is Label.BONAFIDE else "A01", label))
    write_protocol(out / "protocol.txt", records)
    return records
