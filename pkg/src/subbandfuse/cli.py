"""Batch command-line front end.

Subcommands: synth-corpus, extract, train, score, fuse, evaluate, f0-hist.
Any long flag may also be given in a ``--config`` file as ``key=value``
(dashes or underscores); explicit flags override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import dataset_io as dio
from . import scoring
from .f0 import F0Config, accumulate_histogram, estimate_f0, histogram_csv_rows, histogram_summary
from .net import SenetConfig, TrainConfig, init_model, load_checkpoint, save_checkpoint, score_trials, train
from .net.train import write_log
from .records import FeatureKind, Label, named_subband
from .spectral import StftConfig, extract_feature
from .synth import SynthConfig, synth_corpus


class CommandError(Exception):
    pass


# --- report output -----------------------------------------------------------


def emit(fmt: str, record: dict, text: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "jsonl":
        out.write(json.dumps(record, sort_keys=True) + "\n")
    elif fmt == "csv":
        keys = list(record)
        out.write(",".join(keys) + "\n")
        out.write(",".join(str(record[k]) for k in keys) + "\n")
    else:
        out.write(text + "\n")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise CommandError(f"missing required option(s): {flags}")


# --- helpers -----------------------------------------------------------------


def stft_config(args) -> StftConfig:
    return StftConfig(window=args.window, window_len=args.window_len, hop=args.hop,
                      fft_len=args.fft_len, sample_rate_hz=args.sample_rate)


def senet_config(args) -> SenetConfig:
    return SenetConfig(width_multiplier=args.width_multiplier, se_reduction=args.se_reduction)


def train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
                       margin=args.margin, seed=args.seed, weight_decay=args.weight_decay)


def find_audio(audio_dir: Path, trial_id: str, ext: str | None) -> Path:
    if ext:
        return audio_dir / f"{trial_id}{ext}"
    for candidate in (".wav", ".flac"):
        path = audio_dir / f"{trial_id}{candidate}"
        if path.exists():
            return path
    return audio_dir / f"{trial_id}.wav"


def load_features(features_dir, records):
    out = []
    for r in records:
        path = dio.feature_path(features_dir, r.trial_id)
        if not path.exists():
            raise CommandError(f"missing feature file {path}")
        out.append(dio.read_feature_file(path))
    return out


def _extract_one(job):
    audio_path, out_path, kind, band_name, cfg, frames = job
    try:
        w = dio.decode_audio(audio_path, expected_rate=cfg.sample_rate_hz)
        band = named_subband(band_name, cfg.n_bins)
        m = extract_feature(w, FeatureKind(kind), band, cfg, frames)
        m.data = m.data.astype(np.float32)
        dio.write_feature_file(m, out_path)
        return None, m.data.shape
    except Exception as exc:  # collected per file, reported at the end
        return f"{audio_path}: {exc}", None


# --- commands ----------------------------------------------------------------


def cmd_synth_corpus(args) -> int:
    _require(args, "out")
    cfg = SynthConfig(duration_s=args.duration)
    records = synth_corpus(args.out, args.n_per_class, args.seed, split=args.split, cfg=cfg)
    emit(args.format, {"command": "synth-corpus", "trials": len(records), "out": str(args.out)},
         f"wrote {len(records)} utterances and protocol.txt to {args.out}")
    return 0


def cmd_extract(args) -> int:
    _require(args, "protocol", "audio_dir", "out_dir")
    cfg = stft_config(args)
    named_subband(args.band, cfg.n_bins)
    records = dio.parse_protocol(args.protocol)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    audio_dir = Path(args.audio_dir)
    jobs = [
        (find_audio(audio_dir, r.trial_id, args.audio_ext), dio.feature_path(out_dir, r.trial_id),
         args.kind, args.band, cfg, args.frames)
        for r in records
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs, chunksize=8))
    else:
        results = [_extract_one(j) for j in jobs]
    failures = [err for err, _ in results if err]
    shapes = sorted({shape for _, shape in results if shape})
    ok = len(results) - len(failures)
    for err in failures:
        print(f"failed: {err}", file=sys.stderr)
    shape_txt = ", ".join(f"{r}x{c}" for r, c in shapes) or "-"
    emit(args.format,
         {"command": "extract", "kind": args.kind, "band": args.band, "written": ok,
          "failed": len(failures), "shape": shape_txt},
         f"extracted {ok} {args.kind}({args.band}) features of shape {shape_txt}; {len(failures)} failed")
    return 1 if failures else 0


def cmd_train(args) -> int:
    _require(args, "features_dir", "train_protocol", "dev_protocol", "checkpoint")
    tc = train_config(args)
    train_rec = dio.parse_protocol(args.train_protocol)
    dev_rec = dio.parse_protocol(args.dev_protocol)
    train_feats = load_features(args.features_dir, train_rec)
    dev_feats = load_features(args.dev_features_dir or args.features_dir, dev_rec)
    state = init_model(senet_config(args), seed=tc.seed)
    best, history = train(
        state,
        list(zip(train_feats, [r.label for r in train_rec])),
        list(zip(dev_feats, [r.label for r in dev_rec])),
        tc,
    )
    save_checkpoint(best, args.checkpoint)
    log_path = args.log or f"{args.checkpoint}.log.csv"
    write_log(history, log_path)
    best_rec = min(history, key=lambda r: r.dev_eer)
    emit(args.format,
         {"command": "train", "epochs": len(history), "best_epoch": best_rec.epoch,
          "best_dev_eer": best_rec.dev_eer, "checkpoint": str(args.checkpoint), "log": str(log_path)},
         f"trained {len(history)} epochs; best dev EER {100 * best_rec.dev_eer:.2f}% at epoch "
         f"{best_rec.epoch}; checkpoint {args.checkpoint}")
    return 0


def cmd_score(args) -> int:
    _require(args, "checkpoint", "features_dir", "protocol", "out")
    state = load_checkpoint(args.checkpoint)
    records = dio.parse_protocol(args.protocol)
    scores = score_trials(state, load_features(args.features_dir, records))
    dio.write_scores(scores, args.out)
    emit(args.format, {"command": "score", "trials": len(scores), "out": str(args.out)},
         f"scored {len(scores)} trials -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    _require(args, "a", "b", "out")
    fused = scoring.fuse(dio.read_scores(args.a), dio.read_scores(args.b), args.weight)
    dio.write_scores(fused, args.out)
    emit(args.format, {"command": "fuse", "trials": len(fused), "weight": args.weight, "out": str(args.out)},
         f"fused {len(fused)} trials with weight {args.weight} -> {args.out}")
    return 0


def default_cost_config() -> Path:
    return Path(str(resources.files("subbandfuse") / "data" / "asvspoof2019_la_tdcf.cfg"))


def cmd_evaluate(args) -> int:
    _require(args, "scores", "protocol")
    records = {r.trial_id: r for r in dio.parse_protocol(args.protocol)}
    scores = dio.read_scores(args.scores)
    unlabeled = [tid for tid in scores.ids() if tid not in records]
    if unlabeled:
        raise CommandError(f"{len(unlabeled)} scored trials are not in the protocol, first {unlabeled[0]!r}")
    labeled = scores.with_labels(records.values())
    eer, eer_thr = scoring.compute_eer(labeled)
    cost = scoring.load_cost_model(args.cost_config or default_cost_config())
    tdcf, tdcf_thr = scoring.compute_min_tdcf(labeled, cost)
    if args.det_csv:
        det = scoring.det_points(labeled)
        with open(args.det_csv, "w", encoding="utf-8", newline="\n") as f:
            f.write("threshold,far,frr\n")
            for t, a, r in zip(det.thresholds, det.far, det.frr):
                f.write(f"{t:.17g},{a:.17g},{r:.17g}\n")
    emit(args.format,
         {"command": "evaluate", "trials": len(labeled), "eer": eer, "eer_threshold": eer_thr,
          "min_tdcf": tdcf, "min_tdcf_threshold": tdcf_thr},
         f"EER {100 * eer:.2f}% (threshold {eer_thr:.6g})\nmin t-DCF {tdcf:.4f} (threshold {tdcf_thr:.6g})")
    return 0


def _write_hist(path, hist) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("bin_start_hz,bin_end_hz,count\n")
        for row in histogram_csv_rows(hist):
            f.write(row + "\n")


def cmd_f0_hist(args) -> int:
    _require(args, "protocol", "audio_dir", "out")
    records = dio.parse_protocol(args.protocol)
    cfg = F0Config(min_hz=args.min_hz, max_hz=args.max_hz, voicing_threshold=args.voicing_threshold)
    edges = np.arange(0.0, args.max_hz + args.bin_width, args.bin_width)
    groups = {lab: [] for lab in Label} if args.split_by_label else {None: []}
    for r in records:
        w = dio.decode_audio(find_audio(Path(args.audio_dir), r.trial_id, args.audio_ext))
        groups[r.label if args.split_by_label else None].append(estimate_f0(w, cfg))
    out = Path(args.out)
    for lab, contours in groups.items():
        hist = accumulate_histogram(contours, edges)
        path = out if lab is None else out.with_name(f"{out.stem}_{lab.value}{out.suffix or '.csv'}")
        _write_hist(path, hist)
        name = "all" if lab is None else lab.value
        rec = {"command": "f0-hist", "group": name, "utterances": hist.n_utterances,
               "voiced_frames": hist.total, "csv": str(path)}
        text = f"{name}: {hist.n_utterances} utterances, {hist.total} voiced frames -> {path}"
        if hist.total:
            s = histogram_summary(hist)
            rec.update(fraction_below_400=s.fraction_below_400, modal_bin_start_hz=s.modal_bin_hz[0],
                       smoothness=s.smoothness)
            text += (f"; {100 * s.fraction_below_400:.1f}% below 400 Hz, mode "
                     f"{s.modal_bin_hz[0]:g}-{s.modal_bin_hz[1]:g} Hz, smoothness {s.smoothness:.5f}")
        emit(args.format, rec, text)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="subbandfuse", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file supplying defaults for any flag")
    parser.add_argument("--format", choices=("text", "csv", "jsonl"), default="text")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("synth-corpus", cmd_synth_corpus, "generate a synthetic two-class corpus")
    p.add_argument("--out")
    p.add_argument("--n-per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train", help="tag embedded in trial ids")
    p.add_argument("--duration", type=float, default=2.0, help="utterance length in seconds")

    p = add("extract", cmd_extract, "compute subband features for every protocol trial")
    p.add_argument("--protocol")
    p.add_argument("--audio-dir")
    p.add_argument("--out-dir")
    p.add_argument("--audio-ext", default=None, help="audio file suffix (default: .wav, then .flac)")
    p.add_argument("--kind", choices=[k.value for k in FeatureKind], default="LPS")
    p.add_argument("--band", choices=["F0", "Rest", "Low", "High", "Full"], default="F0")
    p.add_argument("--window", default="blackman")
    p.add_argument("--window-len", type=int, default=1728)
    p.add_argument("--hop", type=int, default=130)
    p.add_argument("--fft-len", type=int, default=None)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--frames", type=int, default=600)
    p.add_argument("--jobs", type=int, default=1)

    p = add("train", cmd_train, "train a SENet on extracted features")
    p.add_argument("--features-dir")
    p.add_argument("--dev-features-dir", default=None)
    p.add_argument("--train-protocol")
    p.add_argument("--dev-protocol")
    p.add_argument("--checkpoint")
    p.add_argument("--log", default=None, help="epoch CSV (default: <checkpoint>.log.csv)")
    p.add_argument("--epochs", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--margin", type=int, default=4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width-multiplier", type=float, default=1.0)
    p.add_argument("--se-reduction", type=int, default=16)

    p = add("score", cmd_score, "score protocol trials with a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--features-dir")
    p.add_argument("--protocol")
    p.add_argument("--out")

    p = add("fuse", cmd_fuse, "weight * A + (1 - weight) * B per trial")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--out")

    p = add("evaluate", cmd_evaluate, "EER and min t-DCF of a score file")
    p.add_argument("--scores")
    p.add_argument("--protocol")
    p.add_argument("--cost-config", default=None, help="t-DCF key=value file (default: bundled ASVspoof 2019 LA plan)")
    p.add_argument("--det-csv", default=None)

    p = add("f0-hist", cmd_f0_hist, "F0 distribution histogram(s) as CSV")
    p.add_argument("--protocol")
    p.add_argument("--audio-dir")
    p.add_argument("--audio-ext", default=None)
    p.add_argument("--out")
    p.add_argument("--split-by-label", action="store_true")
    p.add_argument("--bin-width", type=float, default=5.0)
    p.add_argument("--min-hz", type=float, default=50.0)
    p.add_argument("--max-hz", type=float, default=500.0)
    p.add_argument("--voicing-threshold", type=float, default=0.3)
    return parser, subs


def _config_defaults(subparser, path) -> dict:
    values = scoring.read_key_value(path)
    actions = {a.dest: a for a in subparser._actions}
    out = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("help", "config", "command"):
            continue
        if isinstance(action, argparse._StoreTrueAction):
            out[dest] = raw.lower() in ("1", "true", "yes", "on")
        else:
            out[dest] = action.type(raw) if action.type else raw
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        parser.set_defaults(**_config_defaults(parser, args.config))
        subs[args.command].set_defaults(**_config_defaults(subs[args.command], args.config))
        args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ValueError, OSError, dio.AudioDecodeError, dio.FeatureFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
