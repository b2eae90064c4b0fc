"""F1@k evaluation plus diagnostic rates for repetition and chitchat.

Phrases match by normalized surface string (lowercased, single-space
joined), never by position, and both sides are deduplicated before
counting. Scores are macro-averaged per paragraph. During evaluation each
paragraph is conditioned on the phrases *predicted* for the previous one,
mirroring the inference-time chaining in :func:`model.extract_transcript`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import torch

from .chitchat import DEFAULT_BETA, detect_chitchat
from .corpus import Paragraph, Span, Transcript, phrase_text
from .extractor import ScoredSpan, decode_keyphrases
from .model import ExtractedKeyphrase, KeyphraseModel

DEFAULT_KS = (1, 3, 5)


def normalize_phrase(text: str) -> str:
    """Lowercase and collapse whitespace to single spaces."""
    return " ".join(text.lower().split())


def _phrase_strings(
    items: Sequence[object], paragraph: Paragraph | None
) -> list[str]:
    """Surface strings for a mix of phrase representations.

    Accepts plain strings, :class:`Span`, :class:`ScoredSpan`, and
    :class:`ExtractedKeyphrase` (anything with ``text``). Span-like items
    need ``paragraph`` to resolve their tokens.
    """
    out: list[str] = []
    for item in items:
        if isinstance(item, str):
            out.append(item)
            continue
        if isinstance(item, ExtractedKeyphrase):
            out.append(item.text)
            continue
        span = item.span if isinstance(item, ScoredSpan) else item
        if not isinstance(span, Span):
            raise TypeError(f"cannot interpret {type(item).__name__} as a keyphrase")
        if paragraph is None:
            raise ValueError("span keyphrases need the paragraph to resolve text")
        out.append(phrase_text(paragraph, span))
    return out


def _dedup(phrases: Sequence[str]) -> list[str]:
    """Normalized phrases with first-occurrence order, duplicates dropped."""
    seen: set[str] = set()
    out: list[str] = []
    for p in phrases:
        norm = normalize_phrase(p)
        if norm and norm not in seen:
            seen.add(norm)
            out.append(norm)
    return out


def f1_at_k(
    predicted: Sequence[object],
    gold: Sequence[object],
    k: int,
    paragraph: Paragraph | None = None,
) -> float:
    """F1 between the top-k predictions and the gold phrases.

    Predictions are truncated to the top ``k`` *before* normalization and
    deduplication. A paragraph with no gold phrases scores 1 exactly when
    nothing is predicted, else 0.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    pred_k = _dedup(_phrase_strings(list(predicted)[:k], paragraph))
    gold_set = set(_dedup(_phrase_strings(gold, paragraph)))
    if not gold_set:
        return 1.0 if not pred_k else 0.0
    if not pred_k:
        return 0.0
    matches = sum(1 for p in pred_k if p in gold_set)
    precision = matches / len(pred_k)
    recall = matches / len(gold_set)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True, slots=True)
class ParagraphEval:
    """Per-paragraph scores inside an :class:`EvalReport`."""

    paragraph_id: str
    f1: Mapping[int, float]
    n_predicted: int
    n_gold: int


@dataclass(frozen=True, slots=True)
class EvalReport:
    """Corpus-level evaluation: macro F1@k plus diagnostic rates."""

    f1: Mapping[int, float]
    repetition_rate: float
    chitchat_violation_rate: float
    n_paragraphs: int
    n_predicted: int
    per_paragraph: tuple[ParagraphEval, ...]

    @property
    def f1_at_1(self) -> float:
        return self.f1[1]

    @property
    def f1_at_3(self) -> float:
        return self.f1[3]

    @property
    def f1_at_5(self) -> float:
        return self.f1[5]

    def to_json(self) -> str:
        obj = {
            "f1": {str(k): v for k, v in sorted(self.f1.items())},
            "repetition_rate": self.repetition_rate,
            "chitchat_violation_rate": self.chitchat_violation_rate,
            "n_paragraphs": self.n_paragraphs,
            "n_predicted": self.n_predicted,
            "per_paragraph": [
                {
                    "paragraph_id": pe.paragraph_id,
                    "f1": {str(k): v for k, v in sorted(pe.f1.items())},
                    "n_predicted": pe.n_predicted,
                    "n_gold": pe.n_gold,
                }
                for pe in self.per_paragraph
            ],
        }
        return json.dumps(obj)


def evaluate(
    model: KeyphraseModel,
    transcripts: Sequence[Transcript],
    *,
    ks: Sequence[int] = DEFAULT_KS,
    beta: float = DEFAULT_BETA,
) -> EvalReport:
    """Evaluate a model over whole transcripts with predicted-phrase chaining.

    ``repetition_rate`` is the fraction of predicted phrases whose tokens all
    already occur in the previous paragraph's predicted phrases;
    ``chitchat_violation_rate`` is the fraction of predicted phrases whose
    first word falls in a sentence flagged as chitchat at ``beta``.
    """
    if not transcripts or not any(t.paragraphs for t in transcripts):
        raise ValueError("cannot evaluate on an empty dataset")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks:
        raise ValueError("need at least one k")

    sums = {k: 0.0 for k in ks}
    paragraph_evals: list[ParagraphEval] = []
    n_paragraphs = 0
    n_predicted = 0
    n_repeated = 0
    n_flagged = 0

    for transcript in transcripts:
        prev_texts: tuple[str, ...] = ()
        for paragraph in transcript.paragraphs:
            with torch.no_grad():
                encoded = model.encode_words(paragraph.tokens, prev_texts)
                probs = model.label_distributions(encoded)
            scored = decode_keyphrases(probs)
            pred_texts = [phrase_text(paragraph, sp.span) for sp in scored]
            gold_texts = [phrase_text(paragraph, s) for s in paragraph.keyphrases]

            row = {k: f1_at_k(pred_texts, gold_texts, k) for k in ks}
            for k in ks:
                sums[k] += row[k]
            paragraph_evals.append(
                ParagraphEval(
                    paragraph_id=paragraph.id,
                    f1=row,
                    n_predicted=len(pred_texts),
                    n_gold=len(paragraph.keyphrases),
                )
            )
            n_paragraphs += 1
            n_predicted += len(pred_texts)

            prev_tokens = {
                tok for text in prev_texts for tok in normalize_phrase(text).split()
            }
            flags = detect_chitchat(paragraph, encoded, beta)
            for sp in scored:
                tokens = normalize_phrase(phrase_text(paragraph, sp.span)).split()
                if prev_tokens and all(t in prev_tokens for t in tokens):
                    n_repeated += 1
                if flags.flags[paragraph.sentence_index_of(sp.span.start)]:
                    n_flagged += 1

            prev_texts = tuple(pred_texts)

    f1 = {k: sums[k] / n_paragraphs for k in ks}
    return EvalReport(
        f1=f1,
        repetition_rate=n_repeated / n_predicted if n_predicted else 0.0,
        chitchat_violation_rate=n_flagged / n_predicted if n_predicted else 0.0,
        n_paragraphs=n_paragraphs,
        n_predicted=n_predicted,
        per_paragraph=tuple(paragraph_evals),
    )
