"""The assembled keyphrase model and checkpoint container.

``KeyphraseModel`` bundles the main encoder with the label head and the
bridge head. Extraction over a transcript runs paragraphs in stream order,
conditioning each paragraph on the phrases *predicted* for the previous one
(training conditions on gold phrases instead; see the trainer).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import torch
from torch import nn

from .augmentation import BridgeHead, DomainDiscriminator
from .corpus import CorpusError, Transcript
from .encoder import EncodedSequence, EncoderConfig, TransformerEncoder, build_sequence
from .extractor import ExtractorHead, decode_keyphrases, predict_label_distributions

CHECKPOINT_FORMAT = "streamkp-checkpoint"
CHECKPOINT_VERSION = 1


class KeyphraseModel(nn.Module):
    """Main encoder plus the label and bridge heads."""

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.config = config
        self.encoder = TransformerEncoder(config)
        self.extract_head = ExtractorHead(config.hidden_dim, seed=config.seed + 2)
        self.bridge_head = BridgeHead(config.hidden_dim, seed=config.seed + 3)

    def encode_words(
        self, words: Sequence[str], prev_keyphrases: Sequence[str] = ()
    ) -> EncodedSequence:
        build = build_sequence(words, prev_keyphrases, self.config)
        return self.encoder.encode(build)

    def label_distributions(self, encoded: EncodedSequence) -> torch.Tensor:
        return predict_label_distributions(encoded.word_vectors, self.extract_head)


@dataclass(frozen=True, slots=True)
class ExtractedKeyphrase:
    """One predicted phrase: token span, surface text, ranking score."""

    start: int
    end: int
    text: str
    score: float


def extract_paragraph(
    model: KeyphraseModel,
    words: Sequence[str],
    prev_keyphrases: Sequence[str] = (),
) -> list[ExtractedKeyphrase]:
    """Ranked keyphrases for one paragraph, conditioned on previous phrases."""
    with torch.no_grad():
        encoded = model.encode_words(words, prev_keyphrases)
        probs = model.label_distributions(encoded)
    return [
        ExtractedKeyphrase(
            start=sp.span.start,
            end=sp.span.end,
            text=" ".join(words[sp.span.start : sp.span.end]),
            score=sp.score,
        )
        for sp in decode_keyphrases(probs)
    ]


def extract_transcript(
    model: KeyphraseModel, transcript: Transcript
) -> dict[str, list[ExtractedKeyphrase]]:
    """Extract each paragraph in order, chaining predicted phrases forward.

    Paragraph i+1 is conditioned on the phrases extracted from paragraph i
    (best-first), mirroring how the model sees context at inference time.
    """
    results: dict[str, list[ExtractedKeyphrase]] = {}
    prev: tuple[str, ...] = ()
    for paragraph in transcript.paragraphs:
        phrases = extract_paragraph(model, paragraph.tokens, prev)
        results[paragraph.id] = phrases
        prev = tuple(p.text for p in phrases)
    return results


# --- extraction records ------------------------------------------------------

def write_extractions(
    path: str | Path, extractions: Mapping[str, Sequence[ExtractedKeyphrase]]
) -> None:
    """One JSONL record per paragraph: its id and ranked keyphrases."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for pid, phrases in extractions.items():
            obj = {
                "paragraph_id": pid,
                "keyphrases": [
                    {"start": p.start, "end": p.end, "text": p.text, "score": p.score}
                    for p in phrases
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_extractions(path: str | Path) -> dict[str, list[ExtractedKeyphrase]]:
    extractions: dict[str, list[ExtractedKeyphrase]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pid = str(obj["paragraph_id"])
                phrases = [
                    ExtractedKeyphrase(
                        start=int(kp["start"]),
                        end=int(kp["end"]),
                        text=str(kp["text"]),
                        score=float(kp["score"]),
                    )
                    for kp in obj["keyphrases"]
                ]
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CorpusError(
                    f"{path}: line {line_no}: bad extraction record: {exc}"
                ) from exc
            if pid in extractions:
                raise CorpusError(f"{path}: line {line_no}: duplicate paragraph id {pid!r}")
            extractions[pid] = phrases
    return extractions


# --- checkpoints -------------------------------------------------------------

_KINDS = {
    KeyphraseModel: "keyphrase-model",
    DomainDiscriminator: "domain-discriminator",
}


def save_checkpoint(model: KeyphraseModel | DomainDiscriminator, path: str | Path) -> None:
    """Serialize a model with enough metadata to rebuild it exactly."""
    kind = _KINDS.get(type(model))
    if kind is None:
        raise TypeError(f"cannot checkpoint a {type(model).__name__}")
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "encoder_config": dataclasses.asdict(model.config),
        "state_dict": model.state_dict(),
    }
    torch.save(payload, Path(path))


def _load_payload(path: str | Path, expected_kind: str) -> tuple[EncoderConfig, dict]:
    try:
        payload = torch.load(Path(path), weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CorpusError(f"{path}: unreadable checkpoint: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CorpusError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CorpusError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    if payload.get("kind") != expected_kind:
        raise CorpusError(
            f"{path}: checkpoint holds a {payload.get('kind')!r}, expected {expected_kind!r}"
        )
    try:
        config = EncoderConfig(**payload["encoder_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"{path}: bad encoder config in checkpoint: {exc}") from exc
    return config, payload["state_dict"]


def load_keyphrase_model(path: str | Path) -> KeyphraseModel:
    config, state = _load_payload(path, "keyphrase-model")
    model = KeyphraseModel(config)
    model.load_state_dict(state)
    return model


def load_discriminator(path: str | Path) -> DomainDiscriminator:
    config, state = _load_payload(path, "domain-discriminator")
    disc = DomainDiscriminator(config)
    disc.load_state_dict(state)
    return disc
