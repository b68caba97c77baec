import numpy as np
import pytest
from scipy.io import wavfile

from subbandfuse import dataset_io as dio
from subbandfuse.records import FeatureKind, FeatureMatrix, Label, ScoreSet, TrialRecord, named_subband


def test_wav_header_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 64600)
    path = tmp_path / "a.wav"
    dio.write_wav(path, x, 16000)
    w = dio.decode_audio(path)
    assert len(w) == 64600
    assert w.sample_rate_hz == 16000
    assert w.source_id == "a"
    # within one LSB of the 16-bit encoding
    assert np.max(np.abs(w.samples - x)) <= 1.0 / 32768


def test_zero_payload(tmp_path):
    path = tmp_path / "z.wav"
    wavfile.write(path, 16000, np.zeros(16000, dtype=np.int16))
    w = dio.decode_audio(path)
    assert len(w) == 16000 and np.all(w.samples == 0.0)


def test_stereo_averaged_to_mono(tmp_path):
    path = tmp_path / "s.wav"
    data = np.tile(np.array([[16384, -16384]], dtype=np.int16), (800, 1))
    wavfile.write(path, 16000, data)
    w = dio.decode_audio(path)
    assert w.samples.shape == (800,)
    assert np.all(w.samples == 0.0)


@pytest.mark.parametrize("bits", [16, 32, 0])
def test_pcm_depths_within_one_lsb(tmp_path, rng, bits):
    x = rng.uniform(-1, 1, 1000)
    path = tmp_path / f"d{bits}.wav"
    dio.write_wav(path, x, 16000, bits=bits)
    lsb = {16: 1 / 32768, 32: 1 / 2**31, 0: 1e-7}[bits]
    assert np.max(np.abs(dio.decode_audio(path).samples - x)) <= lsb


def test_24_bit_pcm(tmp_path):
    import wave

    vals = [0, 2**22, -(2**23), 2**23 - 1]
    with wave.open(str(tmp_path / "p24.wav"), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(3)
        f.setframerate(16000)
        f.writeframes(b"".join(v.to_bytes(3, "little", signed=True) for v in vals))
    got = dio.decode_audio(tmp_path / "p24.wav").samples
    np.testing.assert_allclose(got, np.array(vals) / 2**23, atol=1 / 2**23)


def test_decode_errors(tmp_path):
    with pytest.raises(dio.AudioDecodeError, match="no such file"):
        dio.decode_audio(tmp_path / "missing.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wav at all")
    with pytest.raises(dio.AudioDecodeError):
        dio.decode_audio(tmp_path / "junk.wav")
    wavfile.write(tmp_path / "empty.wav", 16000, np.zeros(0, dtype=np.int16))
    with pytest.raises(dio.AudioDecodeError, match="zero-length"):
        dio.decode_audio(tmp_path / "empty.wav")
    dio.write_wav(tmp_path / "r8k.wav", np.zeros(100), 8000)
    with pytest.raises(dio.AudioDecodeError, match="sample rate"):
        dio.decode_audio(tmp_path / "r8k.wav", expected_rate=16000)


def test_flac_round_trip(tmp_path, rng):
    sf = pytest.importorskip("soundfile")
    x = np.round(rng.uniform(-0.5, 0.5, 4000) * 32767) / 32768
    sf.write(tmp_path / "x.flac", x, 16000, subtype="PCM_16")
    w = dio.decode_audio(tmp_path / "x.flac")
    assert w.sample_rate_hz == 16000
    np.testing.assert_allclose(w.samples, x, atol=1 / 32767)


# --- protocol ----------------------------------------------------------------


def test_parse_protocol_examples(tmp_path):
    path = tmp_path / "p.txt"
    path.write_bytes(b"LA_0079 LA_T_1138215 - - bonafide\r\n\nLA_0001 LA_E_5916365 - A17 spoof\n")
    recs = dio.parse_protocol(path)
    assert recs == [
        TrialRecord("LA_0079", "LA_T_1138215", "-", Label.BONAFIDE),
        TrialRecord("LA_0001", "LA_E_5916365", "A17", Label.SPOOF),
    ]


@pytest.mark.parametrize(
    "lines, message",
    [
        (["a b - - bonafide", "x y - - genuine"], "unknown key 'genuine' at line 2"),
        (["a b - bonafide"], "expected 5 columns at line 1"),
        (["a b - - bonafide", "a b - - bonafide"], "duplicate trial id 'b' at line 2"),
        (["a b - A01 bonafide"], "at line 1"),
    ],
)
def test_protocol_errors_name_line(lines, message):
    with pytest.raises(dio.ProtocolError, match=message):
        dio.parse_protocol_lines(lines)


def test_protocol_write_parse_round_trip(tmp_path):
    recs = [TrialRecord(f"S{i}", f"T{i}", "-" if i % 2 else "A0" + str(i), Label.BONAFIDE if i % 2 else Label.SPOOF)
            for i in range(1, 8)]
    dio.write_protocol(tmp_path / "p.txt", recs)
    assert dio.parse_protocol(tmp_path / "p.txt") == recs


# --- feature files -------------------------------------------------------------


def test_feature_file_size_and_identity(tmp_path, rng):
    m = FeatureMatrix(rng.standard_normal((45, 600)).astype(np.float32), FeatureKind.LPS, named_subband("F0"), "t1")
    path = tmp_path / "t1.sbsf"
    dio.write_feature_file(m, path)
    assert path.stat().st_size == dio.FEATURE_HEADER_SIZE + 45 * 600 * 4
    assert path.read_bytes()[:4] == b"SBSF"
    back = dio.read_feature_file(path)
    assert back.data.tobytes() == m.data.tobytes()
    assert back.kind is FeatureKind.LPS and back.band == m.band and back.trial_id == "t1"


def test_feature_round_trip_full_band(tmp_path, rng):
    data = rng.standard_normal((865, 600)).astype(np.float32)
    m = FeatureMatrix(data, FeatureKind.IMAG, named_subband("Full"), "x")
    dio.write_feature_file(m, tmp_path / "x.sbsf")
    assert np.array_equal(dio.read_feature_file(tmp_path / "x.sbsf").data, data)


def test_feature_band_offset_preserved(tmp_path, rng):
    band = named_subband("High")
    m = FeatureMatrix(rng.standard_normal((432, 5)).astype(np.float32), FeatureKind.REAL, band, "h")
    dio.write_feature_file(m, tmp_path / "h.sbsf")
    assert dio.read_feature_file(tmp_path / "h.sbsf").band == band


def test_feature_file_rejections(tmp_path, rng):
    m = FeatureMatrix(rng.standard_normal((45, 10)).astype(np.float32), FeatureKind.LPS, named_subband("F0"), "t")
    path = tmp_path / "t.sbsf"
    dio.write_feature_file(m, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(dio.FeatureFileError, match="unexpected end of payload"):
        dio.read_feature_file(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(dio.FeatureFileError, match="magic"):
        dio.read_feature_file(path)
    path.write_bytes(raw[:4] + b"\x09\x00" + raw[6:])
    with pytest.raises(dio.FeatureFileError, match="version"):
        dio.read_feature_file(path)
    bad = FeatureMatrix(np.full((45, 2), np.nan, dtype=np.float32), FeatureKind.LPS, named_subband("F0"), "n")
    with pytest.raises(dio.FeatureFileError, match="non-finite"):
        dio.write_feature_file(bad, tmp_path / "n.sbsf")


# --- score files ---------------------------------------------------------------


def test_score_line_parses(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("LA_E_1027220\t-3.25\n")
    s = dio.read_scores(path)
    assert s.ids() == ["LA_E_1027220"] and s["LA_E_1027220"].score == -3.25


def test_empty_score_file(tmp_path):
    (tmp_path / "e.txt").write_text("")
    assert len(dio.read_scores(tmp_path / "e.txt")) == 0


def test_score_round_trip_exact(tmp_path, rng):
    vals = rng.standard_normal(200) * 10.0 ** rng.integers(-8, 8, 200)
    s = ScoreSet.from_arrays([f"t{i}" for i in range(200)], vals)
    dio.write_scores(s, tmp_path / "s.txt")
    back = dio.read_scores(tmp_path / "s.txt")
    assert back.ids() == s.ids()
    assert np.array_equal(back.scores(), vals)


def test_score_errors(tmp_path):
    (tmp_path / "d.txt").write_text("a\t1\na\t2\n")
    with pytest.raises(ValueError, match="duplicate"):
        dio.read_scores(tmp_path / "d.txt")
    (tmp_path / "n.txt").write_text("a\tabc\n")
    with pytest.raises(ValueError, match="non-numeric"):
        dio.read_scores(tmp_path / "n.txt")
