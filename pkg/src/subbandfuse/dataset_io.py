"""Audio decoding, protocol parsing, and feature / score file formats.

Feature file layout (little-endian)::

    offset  size  field
    0       4     magic b"SBSF"
    4       2     version (u16, currently 1)
    6       2     dtype tag (u16, 1 = float32)
    8       4     rows (u32)
    12      4     cols (u32)
    16      1     feature kind code (u8)
    17      1     band name code (u8)
    18      2     reserved, zero
    20      4     band start bin (u32)
    24      ...   rows * cols float32, row-major

The trial id is not stored; it is the file stem.
"""

from __future__ import annotations

import math
import os
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .records import (
    FeatureKind,
    FeatureMatrix,
    Label,
    ScoreSet,
    SubbandSpec,
    TrialRecord,
    Waveform,
)

FEATURE_MAGIC = b"SBSF"
FEATURE_VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHHIIBBHI")
FEATURE_HEADER_SIZE = _HEADER.size
FEATURE_SUFFIX = ".sbsf"

_KIND_CODES = {k: i for i, k in enumerate(FeatureKind)}
_BAND_NAMES = ["Full", "F0", "Rest", "Low", "High", "Custom"]
_MAX_DIM = 2**32 - 1


class AudioDecodeError(Exception):
    pass


class ProtocolError(ValueError):
    pass


class FeatureFileError(Exception):
    pass


# --- audio -----------------------------------------------------------------


def flac_available() -> bool:
    try:
        import soundfile  # noqa: F401
    except ImportError:
        return False
    return True


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit samples, so one scale serves both widths
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioDecodeError(f"unsupported sample type {data.dtype}")


def decode_audio(path, expected_rate: int | None = None) -> Waveform:
    """Decode a WAV (or FLAC, when soundfile is installed) file to mono.

    Multi-channel audio is averaged across channels. Raises
    AudioDecodeError for unreadable, unsupported, or empty files, and for
    a sample rate different from ``expected_rate`` (no resampling is done).
    """
    path = Path(path)
    if not path.is_file():
        raise AudioDecodeError(f"{path}: no such file")
    if path.suffix.lower() == ".flac":
        if not flac_available():
            raise AudioDecodeError(f"{path}: FLAC decoding requires the 'soundfile' package")
        import soundfile

        try:
            samples, rate = soundfile.read(str(path), dtype="float64", always_2d=False)
        except RuntimeError as exc:
            raise AudioDecodeError(f"{path}: {exc}") from exc
    else:
        try:
            rate, raw = wavfile.read(path)
        except (ValueError, OSError, EOFError) as exc:
            raise AudioDecodeError(f"{path}: {exc}") from exc
        samples = _pcm_to_float(raw)

    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioDecodeError(f"{path}: zero-length audio")
    if expected_rate is not None and rate != expected_rate:
        raise AudioDecodeError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return Waveform(samples=np.clip(samples, -1.0, 1.0), sample_rate_hz=int(rate), source_id=path.stem)


def write_wav(path, samples: np.ndarray, sample_rate_hz: int, bits: int = 16) -> None:
    """Write float samples in [-1, 1] as integer PCM (16 or 32 bit) or float32."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    if bits == 16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif bits == 32:
        data = np.clip(np.round(x * 2147483648.0), -(2**31), 2**31 - 1).astype(np.int32)
    elif bits == 0:
        data = x.astype(np.float32)
    else:
        raise ValueError(f"unsupported bit depth {bits}")
    wavfile.write(path, sample_rate_hz, data)


# --- protocol ----------------------------------------------------------------


def parse_protocol_lines(lines) -> list[TrialRecord]:
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        cols = line.split()
        if not cols:
            continue
        if len(cols) != 5:
            raise ProtocolError(f"expected 5 columns at line {lineno}, got {len(cols)}")
        speaker, trial, _system, attack, key = cols
        try:
            label = Label(key)
        except ValueError:
            raise ProtocolError(f"unknown key {key!r} at line {lineno}") from None
        if trial in seen:
            raise ProtocolError(f"duplicate trial id {trial!r} at line {lineno}")
        try:
            rec = TrialRecord(speaker, trial, attack, label)
        except ValueError as exc:
            raise ProtocolError(f"{exc} at line {lineno}") from None
        seen.add(trial)
        records.append(rec)
    return records


def parse_protocol(path) -> list[TrialRecord]:
    """Parse a 5-column ASVspoof LA protocol file.

    Columns: speaker_id, trial_id, system (ignored), attack_id, key.
    """
    with open(path, encoding="utf-8", newline=None) as f:
        return parse_protocol_lines(f)


def write_protocol(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(f"{r.speaker_id} {r.trial_id} - {r.attack_id} {r.label.value}\n")


# --- feature files -----------------------------------------------------------


def write_feature_file(matrix: FeatureMatrix, path) -> None:
    data = np.ascontiguousarray(matrix.data, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise FeatureFileError(f"{matrix.trial_id}: feature matrix has non-finite entries")
    rows, cols = data.shape
    if rows > _MAX_DIM or cols > _MAX_DIM:
        raise FeatureFileError(f"dimension overflow: {rows}x{cols}")
    band = matrix.band
    band_code = _BAND_NAMES.index(band.name) if band.name in _BAND_NAMES else _BAND_NAMES.index("Custom")
    header = _HEADER.pack(
        FEATURE_MAGIC, FEATURE_VERSION, DTYPE_F32, rows, cols,
        _KIND_CODES[FeatureKind(matrix.kind)], band_code, 0, band.start_bin,
    )
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(data.tobytes(order="C"))
    os.replace(tmp, path)


def read_feature_file(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(FEATURE_HEADER_SIZE)
        if len(head) < FEATURE_HEADER_SIZE:
            raise FeatureFileError(f"{path}: truncated header")
        magic, version, dtype, rows, cols, kind, band_code, _, start = _HEADER.unpack(head)
        if magic != FEATURE_MAGIC:
            raise FeatureFileError(f"{path}: bad magic {magic!r}")
        if version != FEATURE_VERSION:
            raise FeatureFileError(f"{path}: unsupported version {version}")
        if dtype != DTYPE_F32:
            raise FeatureFileError(f"{path}: unsupported dtype tag {dtype}")
        try:
            kind = list(FeatureKind)[kind]
            band_name = _BAND_NAMES[band_code]
        except IndexError:
            raise FeatureFileError(f"{path}: bad kind/band code") from None
        n_bytes = rows * cols * 4
        payload = f.read(n_bytes)
        if len(payload) != n_bytes:
            raise FeatureFileError(f"{path}: unexpected end of payload")
        if f.read(1):
            raise FeatureFileError(f"{path}: trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
    band = SubbandSpec(band_name, start, start + rows)
    return FeatureMatrix(data=data, kind=kind, band=band, trial_id=path.stem)


def feature_path(directory, trial_id: str) -> Path:
    return Path(directory) / f"{trial_id}{FEATURE_SUFFIX}"


# --- score files -------------------------------------------------------------


def read_scores(path) -> ScoreSet:
    out = ScoreSet()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'trial_id<TAB>score'")
            tid, raw = parts
            try:
                score = float(raw)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric score {raw!r}") from None
            if tid in out:
                raise ValueError(f"{path}:{lineno}: duplicate trial id {tid!r}")
            if not math.isfinite(score):
                raise ValueError(f"{path}:{lineno}: non-finite score")
            out.add(tid, score)
    return out


def write_scores(scores: ScoreSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for tid, e in scores.entries.items():
            f.write(f"{tid}\t{e.score:.17g}\n")
