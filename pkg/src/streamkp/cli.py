"""Command-line interface.

One flat JSON config file drives every subcommand; any config key can also
be overridden with a ``--key-name`` flag (flags win over the file, the file
wins over defaults). Unknown keys in the config file are rejected rather
than silently ignored. ``--show-config`` prints the effective configuration
and exits.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .augmentation import (
    DiscriminatorTrainConfig,
    DomainDiscriminator,
    annotate_samples,
    load_silver,
    train_discriminator,
    write_silver,
)
from .chitchat import DEFAULT_BETA, scan_paragraph, write_scans
from .corpus import (
    CorpusError,
    CorpusSample,
    load_general_corpus,
    load_transcripts,
    transcript_samples,
    write_general_corpus,
    write_transcripts,
)
from .encoder import EncoderConfig
from .evaluator import evaluate
from .model import (
    KeyphraseModel,
    extract_transcript,
    load_discriminator,
    load_keyphrase_model,
    save_checkpoint,
    write_extractions,
)
from .reinforcement import TrainConfig, train
from .synth import SynthConfig, generate_general, generate_transcripts


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Every tunable knob, flat, JSON-serializable."""

    # encoder
    vocab_hash_buckets: int = 4096
    hidden_dim: int = 32
    num_layers: int = 2
    num_heads: int = 4
    max_sequence_length: int = 512
    piece_length: int = 4
    max_pieces_per_word: int = 4
    # extractor training
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    alpha_weight: float = 0.5
    lambda_bridge: float = 1.0
    lambda_rl: float = 1.0
    beta: float = DEFAULT_BETA
    # discriminator training
    disc_epochs: int = 3
    disc_lr: float = 1e-3
    disc_batch_size: int = 16
    eval_fraction: float = 0.2
    # silver annotation
    eta: float = 0.05
    # synthetic corpus
    n_transcripts: int = 8
    paragraphs_per_transcript: int = 8
    n_general: int = 64
    min_sentences: int = 3
    max_sentences: int = 5
    min_words: int = 5
    max_words: int = 9
    chitchat_rate: float = 0.3
    overlap_rate: float = 0.4
    topic_vocab_size: int = 40
    filler_vocab_size: int = 60
    # shared
    seed: int = 0


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_run_config(path: str | Path) -> RunConfig:
    """Parse a flat JSON config file, rejecting unknown keys."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise CorpusError(f"{path}: config must be a JSON object")
    unknown = sorted(set(obj) - set(_FIELDS))
    if unknown:
        raise CorpusError(f"{path}: unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in obj.items():
        field_type = _FIELDS[key].type
        try:
            if field_type == "int":
                kwargs[key] = int(value)
            elif field_type == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        except (TypeError, ValueError) as exc:
            raise CorpusError(f"{path}: bad value for {key!r}: {value!r}") from exc
    return RunConfig(**kwargs)


def _apply_overrides(run: RunConfig, args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for name in _FIELDS:
        value = getattr(args, f"cfg_{name}", None)
        if value is not None:
            overrides[name] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    return dataclasses.replace(run, **overrides) if overrides else run


def encoder_config(run: RunConfig) -> EncoderConfig:
    return EncoderConfig(
        vocab_hash_buckets=run.vocab_hash_buckets,
        hidden_dim=run.hidden_dim,
        num_layers=run.num_layers,
        num_heads=run.num_heads,
        max_sequence_length=run.max_sequence_length,
        piece_length=run.piece_length,
        max_pieces_per_word=run.max_pieces_per_word,
        seed=run.seed,
    )


def train_config(run: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=run.epochs,
        batch_size=run.batch_size,
        lr=run.lr,
        alpha_weight=run.alpha_weight,
        lambda_bridge=run.lambda_bridge,
        lambda_rl=run.lambda_rl,
        beta=run.beta,
        eta=run.eta,
        seed=run.seed,
    )


def synth_config(run: RunConfig) -> SynthConfig:
    return SynthConfig(
        n_transcripts=run.n_transcripts,
        paragraphs_per_transcript=run.paragraphs_per_transcript,
        n_general=run.n_general,
        min_sentences=run.min_sentences,
        max_sentences=run.max_sentences,
        min_words=run.min_words,
        max_words=run.max_words,
        chitchat_rate=run.chitchat_rate,
        overlap_rate=run.overlap_rate,
        topic_vocab_size=run.topic_vocab_size,
        filler_vocab_size=run.filler_vocab_size,
        seed=run.seed,
    )


def _transcript_training_samples(path: str | Path) -> list[CorpusSample]:
    samples: list[CorpusSample] = []
    for transcript in load_transcripts(path):
        samples.extend(transcript_samples(transcript))
    return samples


def cmd_synth(args: argparse.Namespace, run: RunConfig) -> int:
    cfg = synth_config(run)
    transcripts = generate_transcripts(cfg)
    write_transcripts(args.transcripts_out, transcripts)
    written = {"transcripts": str(args.transcripts_out)}
    if args.general_out:
        write_general_corpus(args.general_out, generate_general(cfg))
        written["general"] = str(args.general_out)
    print(json.dumps(written))
    return 0


def cmd_train(args: argparse.Namespace, run: RunConfig) -> int:
    samples = _transcript_training_samples(args.transcripts)
    if args.general:
        samples.extend(load_general_corpus(args.general))
    silver = load_silver(args.silver) if args.silver else None
    model = KeyphraseModel(encoder_config(run))
    metrics = train(
        model,
        samples,
        train_config(run),
        silver=silver,
        metrics_path=args.metrics_out,
    )
    save_checkpoint(model, args.model_out)
    summary = {
        "steps": len(metrics),
        "samples": len(samples),
        "model": str(args.model_out),
    }
    if metrics:
        summary["final_l_kp"] = metrics[-1].l_kp
    print(json.dumps(summary))
    return 0


def cmd_extract(args: argparse.Namespace, run: RunConfig) -> int:
    model = load_keyphrase_model(args.model)
    extractions = {}
    for transcript in load_transcripts(args.transcripts):
        extractions.update(extract_transcript(model, transcript))
    write_extractions(args.out, extractions)
    print(json.dumps({"paragraphs": len(extractions), "out": str(args.out)}))
    return 0


def cmd_eval(args: argparse.Namespace, run: RunConfig) -> int:
    model = load_keyphrase_model(args.model)
    try:
        ks = tuple(int(part) for part in args.k.split(",") if part.strip())
    except ValueError as exc:
        raise CorpusError(f"--k must be comma-separated integers: {args.k!r}") from exc
    report = evaluate(model, load_transcripts(args.transcripts), ks=ks, beta=run.beta)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_json())
    return 0


def cmd_silver_annotate(args: argparse.Namespace, run: RunConfig) -> int:
    disc = load_discriminator(args.discriminator)
    samples = _transcript_training_samples(args.transcripts)
    if args.general:
        samples.extend(load_general_corpus(args.general))
    if not samples:
        raise CorpusError(f"{args.transcripts}: no paragraphs to annotate")
    records = annotate_samples(samples, disc, eta=run.eta)
    write_silver(args.out, records)
    print(json.dumps({"paragraphs": len(records), "out": str(args.out)}))
    return 0


def cmd_chitchat_scan(args: argparse.Namespace, run: RunConfig) -> int:
    model = load_keyphrase_model(args.model)
    scans = []
    for transcript in load_transcripts(args.transcripts):
        for paragraph in transcript.paragraphs:
            encoded = model.encode_words(paragraph.tokens)
            scans.append(scan_paragraph(encoded, paragraph, run.beta))
    write_scans(args.out, scans)
    print(json.dumps({"paragraphs": len(scans), "out": str(args.out)}))
    return 0


def cmd_train_discriminator(args: argparse.Namespace, run: RunConfig) -> int:
    samples = _transcript_training_samples(args.transcripts)
    samples.extend(load_general_corpus(args.general))
    disc = DomainDiscriminator(encoder_config(run))
    result = train_discriminator(
        samples,
        disc,
        DiscriminatorTrainConfig(
            epochs=run.disc_epochs,
            lr=run.disc_lr,
            batch_size=run.disc_batch_size,
            eval_fraction=run.eval_fraction,
            seed=run.seed,
        ),
    )
    save_checkpoint(disc, args.model_out)
    print(
        json.dumps(
            {
                "accuracy": result.accuracy,
                "n_train": result.n_train,
                "n_eval": result.n_eval,
                "model": str(args.model_out),
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamkp",
        description="Keyphrase extraction for noisy live-stream transcripts.",
    )
    parser.add_argument("--config", type=Path, help="flat JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument(
        "--show-config",
        action="store_true",
        help="print the effective config as JSON and exit",
    )
    for name, field in _FIELDS.items():
        if name == "seed":
            continue
        typ = {"int": int, "float": float}.get(field.type, str)
        parser.add_argument(
            f"--{name.replace('_', '-')}",
            type=typ,
            default=None,
            dest=f"cfg_{name}",
            help=argparse.SUPPRESS,
        )

    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic two-domain corpus")
    p.add_argument("--transcripts-out", type=Path, required=True)
    p.add_argument("--general-out", type=Path)

    p = sub.add_parser("train", help="train the keyphrase model")
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--general", type=Path)
    p.add_argument("--silver", type=Path)
    p.add_argument("--model-out", type=Path, required=True)
    p.add_argument("--metrics-out", type=Path)

    p = sub.add_parser("extract", help="extract keyphrases from transcripts")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="score a model against gold keyphrases")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--k", default="1,3,5", help="comma-separated cutoffs")

    p = sub.add_parser("silver-annotate", help="attention-filter silver labels")
    p.add_argument("--discriminator", type=Path, required=True)
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--general", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("chitchat-scan", help="per-sentence chitchat affinities")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train-discriminator", help="train the domain discriminator")
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--general", type=Path, required=True)
    p.add_argument("--model-out", type=Path, required=True)

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "extract": cmd_extract,
    "eval": cmd_eval,
    "silver-annotate": cmd_silver_annotate,
    "chitchat-scan": cmd_chitchat_scan,
    "train-discriminator": cmd_train_discriminator,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = load_run_config(args.config) if args.config else RunConfig()
        run = _apply_overrides(run, args)
        if args.show_config:
            print(json.dumps(dataclasses.asdict(run), indent=2, sort_keys=True))
            return 0
        if args.command is None:
            parser.error("a subcommand is required (or use --show-config)")
        return _COMMANDS[args.command](args, run)
    except (CorpusError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
