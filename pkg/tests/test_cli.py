import json

import numpy as np
import pytest

from subbandfuse import dataset_io as dio
from subbandfuse.cli import main
from subbandfuse.f0 import estimate_f0
from subbandfuse.records import Label, ScoreSet
from subbandfuse.scoring import compute_eer, compute_min_tdcf, load_cost_model
from subbandfuse.synth import SynthConfig, synth_corpus

from .test_scoring import labeled, random_sets


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert run("synth-corpus", "--out", root, "--n-per-class", 3, "--seed", 11, "--duration", 1.0) == 0
    return root


def test_synth_corpus_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("synth-corpus", "--out", d, "--n-per-class", 10, "--seed", 7) == 0
    wavs = sorted(p.name for p in a.glob("*.wav"))
    assert len(wavs) == 20
    lines = (a / "protocol.txt").read_text().splitlines()
    assert len(lines) == 20
    assert (a / "protocol.txt").read_bytes() == (b / "protocol.txt").read_bytes()
    assert all((a / w).read_bytes() == (b / w).read_bytes() for w in wavs)
    labels = [r.label for r in dio.parse_protocol(a / "protocol.txt")]
    assert labels.count(Label.BONAFIDE) == labels.count(Label.SPOOF) == 10


def test_synth_contour_ranges(tmp_path):
    records = synth_corpus(tmp_path, 4, seed=3, cfg=SynthConfig(duration_s=1.5))
    for r in records:
        v = estimate_f0(dio.decode_audio(tmp_path / f"{r.trial_id}.wav")).voiced
        spread = v.max() - v.min()
        if r.label is Label.BONAFIDE:
            assert spread > 5.0
        else:
            assert spread < 2.0


@pytest.mark.parametrize("kind, band, rows", [("LPS", "F0", 45), ("Real", "High", 432), ("Imag", "Low", 433)])
def test_extract_shapes(corpus, tmp_path, kind, band, rows, capsys):
    out = tmp_path / "feats"
    code = run("extract", "--protocol", corpus / "protocol.txt", "--audio-dir", corpus,
               "--out-dir", out, "--kind", kind, "--band", band)
    assert code == 0
    files = sorted(out.glob("*.sbsf"))
    assert len(files) == 6
    m = dio.read_feature_file(files[0])
    assert m.data.shape == (rows, 600) and m.kind.value == kind and m.band.name == band
    assert f"{rows}x600" in capsys.readouterr().out


def test_extract_parallel_matches_serial(corpus, tmp_path):
    for jobs, d in ((1, "s"), (2, "p")):
        assert run("extract", "--protocol", corpus / "protocol.txt", "--audio-dir", corpus,
                   "--out-dir", tmp_path / d, "--jobs", jobs) == 0
    for f in (tmp_path / "s").glob("*.sbsf"):
        assert f.read_bytes() == (tmp_path / "p" / f.name).read_bytes()


def test_extract_missing_audio(corpus, tmp_path, capsys):
    proto = tmp_path / "p.txt"
    proto.write_text((corpus / "protocol.txt").read_text() + "LA_0001 NOPE_000001 - - bonafide\n")
    code = run("extract", "--protocol", proto, "--audio-dir", corpus, "--out-dir", tmp_path / "f")
    err = capsys.readouterr().err
    assert code == 1 and "NOPE_000001" in err
    assert len(list((tmp_path / "f").glob("*.sbsf"))) == 6


def _write(tmp_path, name, ids, values):
    s = ScoreSet()
    for tid, v in zip(ids, values):
        s.add(tid, float(v))
    dio.write_scores(s, tmp_path / name)
    return tmp_path / name


def test_fuse_chain_matches_closed_form(tmp_path, rng):
    ids = [f"T{i}" for i in range(30)]
    a, b, c = (rng.standard_normal(30) for _ in range(3))
    pa, pb, pc = (_write(tmp_path, n, ids, v) for n, v in (("a", a), ("b", b), ("c", c)))
    assert run("fuse", "--a", pa, "--b", pb, "--weight", 0.5, "--out", tmp_path / "q1") == 0
    assert run("fuse", "--a", tmp_path / "q1", "--b", pc, "--weight", 0.5, "--out", tmp_path / "q2") == 0
    got = dio.read_scores(tmp_path / "q2")
    assert got.ids() == ids
    assert np.array_equal(got.scores(), 0.25 * a + 0.25 * b + 0.5 * c)


def test_fuse_errors(tmp_path, capsys):
    pa = _write(tmp_path, "a", ["X", "Y"], [1, 2])
    pb = _write(tmp_path, "b", ["Z", "W"], [1, 2])
    assert run("fuse", "--a", pa, "--b", pa, "--weight", 1.5, "--out", tmp_path / "o") == 1
    assert run("fuse", "--a", pa, "--b", pb, "--out", tmp_path / "o") == 1
    assert "'X'" in capsys.readouterr().err


def _protocol(tmp_path, bona_ids, spoof_ids):
    lines = [f"LA_0001 {t} - - bonafide" for t in bona_ids] + [f"LA_0001 {t} - A01 spoof" for t in spoof_ids]
    (tmp_path / "proto.txt").write_text("\n".join(lines) + "\n")
    return tmp_path / "proto.txt"


def test_evaluate_reports(tmp_path, capsys):
    proto = _protocol(tmp_path, ["B0", "B1"], ["S0", "S1"])
    sep = _write(tmp_path, "sep", ["B0", "B1", "S0", "S1"], [0.9, 0.8, 0.1, 0.2])
    same = _write(tmp_path, "same", ["B0", "B1", "S0", "S1"], [0.3, 0.6, 0.3, 0.6])
    assert run("evaluate", "--scores", sep, "--protocol", proto) == 0
    out = capsys.readouterr().out
    assert "EER 0.00%" in out and "min t-DCF 0.0000" in out
    assert run("evaluate", "--scores", same, "--protocol", proto, "--det-csv", tmp_path / "det.csv") == 0
    assert "EER 50.00%" in capsys.readouterr().out
    det = (tmp_path / "det.csv").read_text().splitlines()
    assert det[0] == "threshold,far,frr" and len(det) == 1 + 3  # two levels: one midpoint plus both infinities


def test_evaluate_matches_oracle(tmp_path, rng, capsys):
    bona, spoof = random_sets(rng, 5, 40)
    ref = labeled(bona, spoof)
    proto = _protocol(tmp_path, [f"B{i}" for i in range(len(bona))], [f"S{i}" for i in range(len(spoof))])
    dio.write_scores(ref, tmp_path / "s")
    cfg = tmp_path / "cost.cfg"
    cfg.write_text("p_target=0.9405\np_nontarget=0.0095\np_spoof=0.05\nc_miss_asv=1\nc_fa_asv=10\n"
                   "c_miss_cm=1\nc_fa_cm=10\np_miss_asv=0.05\np_fa_asv=0.01\np_miss_spoof_asv=0.3\n")
    assert run("--format", "jsonl", "evaluate", "--scores", tmp_path / "s", "--protocol", proto,
               "--cost-config", cfg) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["eer"] == compute_eer(ref)[0]
    assert rec["min_tdcf"] == compute_min_tdcf(ref, load_cost_model(cfg))[0]


def test_evaluate_unlabeled_trial(tmp_path, capsys):
    proto = _protocol(tmp_path, ["B0"], ["S0"])
    s = _write(tmp_path, "s", ["B0", "S0", "Q9"], [1, 0, 0.5])
    assert run("evaluate", "--scores", s, "--protocol", proto) == 1
    assert "Q9" in capsys.readouterr().err


def test_f0_hist_single_bin(tmp_path, capsys):
    t = np.arange(16000) / 16000
    ids = [f"TONE{i}" for i in range(3)]
    for tid in ids:
        dio.write_wav(tmp_path / f"{tid}.wav", 0.5 * np.sin(2 * np.pi * 222 * t), 16000)
    proto = _protocol(tmp_path, ids, [])
    assert run("f0-hist", "--protocol", proto, "--audio-dir", tmp_path, "--out", tmp_path / "h.csv") == 0
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "bin_start_hz,bin_end_hz,count"
    counts = np.array([int(r.split(",")[2]) for r in rows[1:]])
    assert counts.argmax() == 44 and counts[44] == counts.sum()
    assert "mode 220-225 Hz" in capsys.readouterr().out


def test_f0_hist_split_by_label(corpus, tmp_path, capsys):
    code = run("f0-hist", "--protocol", corpus / "protocol.txt", "--audio-dir", corpus,
               "--out", tmp_path / "hist.csv", "--split-by-label")
    assert code == 0
    assert (tmp_path / "hist_bonafide.csv").exists() and (tmp_path / "hist_spoof.csv").exists()
    out = capsys.readouterr().out
    smooth = {line.split(":")[0]: float(line.rsplit(" ", 1)[1]) for line in out.splitlines()}
    # drifting F0 spreads mass over neighbouring bins
    assert smooth["bonafide"] < smooth["spoof"]


def test_train_and_score_cycle(corpus, tmp_path, capsys):
    feats = tmp_path / "f"
    assert run("extract", "--protocol", corpus / "protocol.txt", "--audio-dir", corpus, "--out-dir", feats) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# shared settings\nwidth-multiplier=0.25\nepochs=5\nbatch_size=4\n")
    logs = []
    for run_id in range(2):
        ckpt = tmp_path / f"m{run_id}.ckpt"
        code = run("--config", cfg, "train", "--features-dir", feats, "--train-protocol", corpus / "protocol.txt",
                   "--dev-protocol", corpus / "protocol.txt", "--checkpoint", ckpt)
        assert code == 0
        logs.append((tmp_path / f"m{run_id}.ckpt.log.csv").read_text())
    assert logs[0] == logs[1]
    assert len(logs[0].splitlines()) == 1 + 5
    assert run("score", "--checkpoint", tmp_path / "m0.ckpt", "--features-dir", feats,
               "--protocol", corpus / "protocol.txt", "--out", tmp_path / "s0") == 0
    assert run("score", "--checkpoint", tmp_path / "m1.ckpt", "--features-dir", feats,
               "--protocol", corpus / "protocol.txt", "--out", tmp_path / "s1") == 0
    assert (tmp_path / "s0").read_bytes() == (tmp_path / "s1").read_bytes()
    assert len(dio.read_scores(tmp_path / "s0")) == 6


def test_config_flag_overridden_by_cli(corpus, tmp_path, capsys):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("n-per-class=2\nseed=5\n")
    assert run("--config", cfg, "synth-corpus", "--out", tmp_path / "c", "--n-per-class", 1, "--duration", 0.5) == 0
    assert len(list((tmp_path / "c").glob("*.wav"))) == 2


def test_train_epochs_zero(corpus, tmp_path, capsys):
    code = run("train", "--features-dir", tmp_path, "--train-protocol", corpus / "protocol.txt",
               "--dev-protocol", corpus / "protocol.txt", "--checkpoint", tmp_path / "m", "--epochs", 0)
    assert code == 1 and "epochs must be >= 1" in capsys.readouterr().err


def test_missing_required_option(capsys):
    assert run("score", "--checkpoint", "x") == 1
    assert "--features-dir" in capsys.readouterr().err


def test_csv_format(tmp_path, capsys):
    pa = _write(tmp_path, "a", ["X"], [1])
    assert run("--format", "csv", "fuse", "--a", pa, "--b", pa, "--out", tmp_path / "o") == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header.split(",")[0] == "command" and row.split(",")[0] == "fuse"
