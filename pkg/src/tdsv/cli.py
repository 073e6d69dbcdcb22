"""Command-line pipeline driver.

    tdsv [--config FILE] [--seed N] [--threads N] [--output-dir DIR] <command> ...

Commands: synth, train, embed, score, eval, fuse, project.  Each command
reads only documented artifacts, writes only into --output-dir (atomically:
temp file + rename), and exits nonzero with a one-line ``error: ...`` message
on failure.

Heavy imports happen after argument parsing so --threads can pin the BLAS
thread pools via environment variables before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

_GLOBAL_FLAGS = (
    ("--config", dict(metavar="FILE", help="pipeline config file (svconfig 1)")),
    ("--seed", dict(type=int, metavar="N", help="master RNG seed (default 0)")),
    ("--threads", dict(type=int, metavar="N",
                       help="BLAS/OpenMP thread cap (default 1)")),
    ("--output-dir", dict(metavar="DIR", help="artifact directory (default .)")),
)

_GLOBAL_DEFAULTS = {"config": None, "seed": 0, "threads": 1, "output_dir": "."}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    for flag, kwargs in _GLOBAL_FLAGS:
        common.add_argument(flag, default=argparse.SUPPRESS, **kwargs)

    parser = argparse.ArgumentParser(
        prog="tdsv",
        description="Text-dependent speaker verification pipeline.")
    for flag, kwargs in _GLOBAL_FLAGS:
        parser.add_argument(flag, default=_GLOBAL_DEFAULTS[
            flag.lstrip("-").replace("-", "_")], **kwargs)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic corpus into --output-dir")
    p.add_argument("--speakers", type=int, default=10)
    p.add_argument("--phrases", type=int, default=2)
    p.add_argument("--utterances", type=int, default=20,
                   help="per speaker, split across phrases")
    p.add_argument("--noise", type=float, default=0.03)

    p = sub.add_parser("train", parents=[common],
                       help="train the speaker classifier on the bg split")
    p.add_argument("--corpus", required=True, metavar="DIR")

    p = sub.add_parser("embed", parents=[common],
                       help="extract embeddings for every corpus utterance")
    p.add_argument("--corpus", required=True, metavar="DIR")
    p.add_argument("--model", required=True, metavar="DIR")

    p = sub.add_parser("score", parents=[common],
                       help="fit the backend on the bg split and score trials")
    p.add_argument("--corpus", required=True, metavar="DIR")
    p.add_argument("--embeddings", required=True, metavar="FILE")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.add_argument("--backend", metavar="DIR",
                   help="reuse previously fitted backend artifacts")

    p = sub.add_parser("eval", parents=[common],
                       help="EER / minDCF / DET points from a score file")
    p.add_argument("--scores", required=True, metavar="FILE")
    p.add_argument("--p-tar", type=float, default=1e-3)

    p = sub.add_parser("fuse", parents=[common],
                       help="fit logistic fusion on dev scores, apply to inputs")
    p.add_argument("--dev", required=True, nargs="+", metavar="FILE",
                   help="one labeled dev score file per system")
    p.add_argument("--inputs", required=True, nargs="+", metavar="FILE",
                   help="score files to fuse, same system order as --dev")

    p = sub.add_parser("project", parents=[common],
                       help="PCA projection of embeddings to CSV")
    p.add_argument("--embeddings", required=True, metavar="FILE")
    p.add_argument("--components", type=int, default=2)
    return parser


def _out(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_pipeline_config(args):
    from .config import PipelineConfig, load_config

    if args.config is None:
        return PipelineConfig()
    return load_config(args.config)


def _fixed_spectrogram(path, width):
    from .features import compute_spectrogram, fit_length, read_wav

    return fit_length(compute_spectrogram(read_wav(path)).bins, width)


def cmd_synth(args) -> int:
    from .synth import SynthSpec, generate_corpus

    spec = SynthSpec(num_speakers=args.speakers, num_phrases=args.phrases,
                     utterances_per_speaker=args.utterances,
                     noise_level=args.noise, seed=args.seed)
    entries = generate_corpus(spec, _out(args))
    print(f"wrote {len(entries)} utterances to {args.output_dir}")
    return 0


def cmd_train(args) -> int:
    import numpy as np

    from .resnet import PRESETS, Network, save_network
    from .train import TrainConfig, train, write_training_log
    from .trials import read_corpus
    from dataclasses import replace

    cfg = _load_pipeline_config(args)
    corpus_dir = Path(args.corpus)
    entries = [e for e in read_corpus(corpus_dir / "corpus.tsv")
               if e.split == "bg"]
    if not entries:
        from .errors import InsufficientDataError

        raise InsufficientDataError("corpus has no background utterances")
    speakers = sorted({e.speaker_id for e in entries})
    label_of = {s: i for i, s in enumerate(speakers)}
    net_cfg = replace(PRESETS[cfg.preset], num_speakers=len(speakers))
    inputs = np.stack([
        _fixed_spectrogram(corpus_dir / e.wav_path, net_cfg.input_width)
        for e in entries]).astype(np.float32)[:, :, :, None]
    labels = np.array([label_of[e.speaker_id] for e in entries])

    net = Network(net_cfg, seed=args.seed)
    out = _out(args)
    history = train(net, inputs, labels,
                    TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                learning_rate=cfg.learning_rate, seed=args.seed),
                    checkpoint_dir=out / "checkpoints")
    save_network(net, out / "model")
    write_training_log(out / "training_log.csv", history)
    last = history[-1]
    print(f"trained {cfg.epochs} epochs on {len(entries)} utterances; "
          f"final loss={last.loss:.4f} accuracy={last.accuracy:.4f}")
    return 0


def cmd_embed(args) -> int:
    from .resnet import extract_embedding, load_network
    from .trials import EmbeddingRecord, read_corpus, write_embeddings

    corpus_dir = Path(args.corpus)
    entries = sorted(read_corpus(corpus_dir / "corpus.tsv"),
                     key=lambda e: e.utterance_id)
    net = load_network(Path(args.model))
    records = []
    for e in entries:
        spec = _fixed_spectrogram(corpus_dir / e.wav_path,
                                  net.config.input_width)
        vec = extract_embedding(net, spec)
        records.append(EmbeddingRecord(e.utterance_id, e.speaker_id,
                                       e.phrase_id, vec))
    out = _out(args)
    write_embeddings(out / "embeddings.tsv", records)
    print(f"wrote {len(records)} embeddings to {out / 'embeddings.tsv'}")
    return 0


def cmd_score(args) -> int:
    from .backend import (fit_backends, load_backends, save_backends,
                          score_trials)
    from .trials import (read_corpus, read_embeddings, read_enroll_map,
                         read_trials, write_scores)

    cfg = _load_pipeline_config(args)
    corpus_dir = Path(args.corpus)
    records = read_embeddings(args.embeddings)
    enroll = read_enroll_map(corpus_dir / "enroll.tsv")
    trial_list = read_trials(args.trials)
    out = _out(args)

    if args.backend:
        backends = load_backends(Path(args.backend))
    else:
        cohort: dict[str, list[str]] = {}
        for e in read_corpus(corpus_dir / "corpus.tsv"):
            if e.split == "bg":
                cohort.setdefault(e.phrase_id, []).append(e.utterance_id)
        if cfg.cohort_size > 0:
            cohort = {p: sorted(u)[:cfg.cohort_size] for p, u in cohort.items()}
        backends = fit_backends(records, cohort)
        save_backends(out / "backend", backends)

    scores = score_trials(trial_list, records, enroll, backends,
                          snorm=cfg.snorm)
    write_scores(out / "scores.tsv", list(zip(trial_list, scores)))
    print(f"scored {len(scores)} trials to {out / 'scores.tsv'}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from .fileio import atomic_write_text
    from .metrics import (ScoredTrials, compute_det, det_csv_lines,
                          det_probit_csv_lines, summary_lines)
    from .trials import read_scores

    scored = [(t, s) for t, s in read_scores(args.scores) if t.label != "unk"]
    if not scored:
        from .errors import DegenerateError

        raise DegenerateError(f"no labeled trials in {args.scores}")
    trials = ScoredTrials(np.array([s for _, s in scored]),
                          np.array([t.label == "tgt" for t, _ in scored]))
    summary = summary_lines(trials, p_tar=args.p_tar)
    det = compute_det(trials)
    out = _out(args)
    atomic_write_text(out / "summary.txt", "\n".join(summary) + "\n")
    atomic_write_text(out / "det.csv", "\n".join(det_csv_lines(det)) + "\n")
    atomic_write_text(out / "det_probit.csv",
                      "\n".join(det_probit_csv_lines(det)) + "\n")
    print(f"{summary[0]} {summary[1]}")
    return 0


def _aligned_scores(paths):
    """Read several per-system score files and align them on trial keys."""
    import numpy as np

    from .errors import TrialFormatError
    from .trials import read_scores

    baseline = read_scores(paths[0])
    keys = [t.key for t, _ in baseline]
    columns = [np.array([s for _, s in baseline])]
    for path in paths[1:]:
        rows = {t.key: (t, s) for t, s in read_scores(path)}
        if set(rows) != set(keys):
            raise TrialFormatError(
                f"{path} covers different trials than {paths[0]}")
        columns.append(np.array([rows[k][1] for k in keys]))
    trials = [t for t, _ in baseline]
    return trials, np.stack(columns, axis=1)


def cmd_fuse(args) -> int:
    import numpy as np

    from .backend import apply_fusion, fit_fusion, save_fusion
    from .trials import write_scores

    cfg = _load_pipeline_config(args)
    if len(args.dev) != len(args.inputs):
        from .errors import ConfigError

        raise ConfigError("--dev and --inputs need one file per system")
    dev_trials, dev_scores = _aligned_scores(args.dev)
    labels = np.array([t.label == "tgt" for t in dev_trials
                       if t.label != "unk"])
    keep = [i for i, t in enumerate(dev_trials) if t.label != "unk"]
    model = fit_fusion(dev_scores[keep], labels, l2=cfg.fusion_l2)

    in_trials, in_scores = _aligned_scores(args.inputs)
    fused = apply_fusion(model, in_scores)
    out = _out(args)
    write_scores(out / "fused_scores.tsv", list(zip(in_trials, fused)))
    save_fusion(out / "fusion", model)
    weights = " ".join(f"{w:+.4f}" for w in model.weights)
    print(f"fused {len(in_trials)} trials; weights [{weights}] "
          f"bias {model.bias:+.4f}")
    return 0


def cmd_project(args) -> int:
    import numpy as np

    from .backend import pca_project
    from .fileio import atomic_write_text
    from .trials import read_embeddings

    records = sorted(read_embeddings(args.embeddings).values(),
                     key=lambda r: r.utterance_id)
    coords = pca_project(np.stack([r.vector for r in records]),
                         k=args.components)
    header = "utterance_id,speaker_id,phrase_id," + ",".join(
        f"pc{i + 1}" for i in range(args.components))
    lines = [header]
    for r, row in zip(records, coords):
        packed = ",".join(f"{v:.8e}" for v in row)
        lines.append(f"{r.utterance_id},{r.speaker_id},{r.phrase_id},{packed}")
    out = _out(args)
    atomic_write_text(out / "projection.csv", "\n".join(lines) + "\n")
    print(f"wrote {len(records)} projected points to {out / 'projection.csv'}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "embed": cmd_embed,
    "score": cmd_score,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "project": cmd_project,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    from .errors import TdsvError

    try:
        return _COMMANDS[args.command](args)
    except (TdsvError, OSError, KeyError, ValueError) as exc:
        message = str(exc).strip().replace("\n", " ") or type(exc).__name__
        print(f"error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
