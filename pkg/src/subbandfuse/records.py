"""Plain data records shared across the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

#: Number of STFT bins for the default 1728-point transform.
DEFAULT_BINS = 865


class Label(str, enum.Enum):
    BONAFIDE = "bonafide"
    SPOOF = "spoof"


class FeatureKind(str, enum.Enum):
    LPS = "LPS"
    PA = "PA"
    REAL = "Real"
    IMAG = "Imag"
    MAGNITUDE = "Magnitude"


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int
    source_id: str = ""

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class TrialRecord:
    speaker_id: str
    trial_id: str
    attack_id: str
    label: Label

    def __post_init__(self):
        if (self.label is Label.BONAFIDE) != (self.attack_id == "-"):
            raise ValueError(
                f"{self.trial_id}: label {self.label.value} inconsistent with attack {self.attack_id!r}"
            )


@dataclass(frozen=True)
class SubbandSpec:
    """Half-open frequency-bin range ``[start_bin, end_bin)``."""

    name: str
    start_bin: int
    end_bin: int

    @property
    def bin_count(self) -> int:
        return self.end_bin - self.start_bin

    def check(self, n_bins: int) -> None:
        if not 0 <= self.start_bin < self.end_bin <= n_bins:
            raise ValueError(
                f"subband {self.name} [{self.start_bin}, {self.end_bin}) invalid for {n_bins} bins"
            )


def full_band(n_bins: int = DEFAULT_BINS) -> SubbandSpec:
    return SubbandSpec("Full", 0, n_bins)


def named_subband(name: str, n_bins: int = DEFAULT_BINS) -> SubbandSpec:
    """Return one of the standard subbands of an ``n_bins`` spectrogram.

    ``F0`` is the first 45 bins, ``Rest`` its complement, ``Low``/``High``
    split at ``n_bins // 2`` (433 for 865 bins, matching 0-4 kHz / 4-8 kHz).
    """
    half = n_bins // 2 + n_bins % 2
    table = {
        "F0": (0, 45),
        "Rest": (45, n_bins),
        "Low": (0, half),
        "High": (half, n_bins),
        "Full": (0, n_bins),
    }
    try:
        start, end = table[name]
    except KeyError:
        raise ValueError(f"unknown subband {name!r}; choose from {sorted(table)}") from None
    spec = SubbandSpec(name, start, end)
    spec.check(n_bins)
    return spec


@dataclass
class FeatureMatrix:
    data: np.ndarray
    kind: FeatureKind
    band: SubbandSpec
    trial_id: str = ""

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] != self.band.bin_count:
            raise ValueError(
                f"{self.data.shape[0]} rows do not match band {self.band.name} "
                f"({self.band.bin_count} bins)"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass
class ScoreEntry:
    score: float
    label: Label | None = None


@dataclass
class ScoreSet:
    """Ordered mapping trial_id -> ScoreEntry."""

    entries: dict[str, ScoreEntry] = field(default_factory=dict)

    def add(self, trial_id: str, score: float, label: Label | None = None) -> None:
        if trial_id in self.entries:
            raise ValueError(f"duplicate trial id {trial_id!r}")
        if not np.isfinite(score):
            raise ValueError(f"non-finite score for {trial_id!r}")
        self.entries[trial_id] = ScoreEntry(float(score), label)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, trial_id):
        return trial_id in self.entries

    def __getitem__(self, trial_id) -> ScoreEntry:
        return self.entries[trial_id]

    def ids(self) -> list[str]:
        return list(self.entries)

    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries.values()], dtype=np.float64)

    def with_labels(self, trials) -> ScoreSet:
        """Copy with labels taken from an iterable of TrialRecord."""
        lookup = {t.trial_id: t.label for t in trials}
        out = ScoreSet()
        for tid, e in self.entries.items():
            out.add(tid, e.score, lookup.get(tid, e.label))
        return out

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (bonafide_scores, spoof_scores); every entry must be labeled."""
        bona, spoof = [], []
        for tid, e in self.entries.items():
            if e.label is None:
                raise ValueError(f"trial {tid!r} has no label")
            (bona if e.label is Label.BONAFIDE else spoof).append(e.score)
        return np.array(bona, dtype=np.float64), np.array(spoof, dtype=np.float64)

    @classmethod
    def from_arrays(cls, ids, scores, labels=None) -> ScoreSet:
        out = cls()
        labels = [None] * len(ids) if labels is None else labels
        for tid, s, lab in zip(ids, scores, labels):
            out.add(tid, s, lab)
        return out
