"""Synthetic bilingual-domain corpus generator.

Builds pseudo-word corpora with the failure modes this package targets:

* each transcript paragraph has exactly one gold keyphrase drawn from a
  transcript-topic vocabulary that is disjoint from the general-domain
  topic vocabulary (both share a filler vocabulary);
* with ``overlap_rate`` probability a paragraph repeats the previous
  paragraph's gold phrase verbatim as plain (non-gold) text — bait for an
  extractor that has learned phrase → keyphrase without noticing the
  phrase was already extracted;
* with ``chitchat_rate`` probability per sentence, a sentence is pure
  filler, and half of those smuggle in a topic word — chitchat bait.

Everything is driven by one ``random.Random`` seeded from the config, so a
given config always yields the same corpus.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import CorpusSample, Domain, Paragraph, Sentence, Span, Transcript

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True, slots=True)
class SynthConfig:
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
    seed: int = 0

    def __post_init__(self) -> None:
        if self.min_sentences < 1 or self.max_sentences < self.min_sentences:
            raise ValueError("bad sentence count range")
        if self.min_words < 3 or self.max_words < self.min_words:
            raise ValueError("sentences need at least 3 words for phrase planting")
        if not (0.0 <= self.chitchat_rate <= 1.0 and 0.0 <= self.overlap_rate <= 1.0):
            raise ValueError("rates must lie in [0, 1]")
        if self.topic_vocab_size < 4 or self.filler_vocab_size < 4:
            raise ValueError("vocabularies are too small")


def _make_word(rng: random.Random, n_syllables: int) -> str:
    return "".join(
        rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(n_syllables)
    )


def _make_vocab(rng: random.Random, size: int, taken: set[str]) -> list[str]:
    vocab: list[str] = []
    while len(vocab) < size:
        word = _make_word(rng, rng.randint(2, 4))
        if word not in taken:
            taken.add(word)
            vocab.append(word)
    return vocab


@dataclass(frozen=True, slots=True)
class SynthVocab:
    """Disjoint topic vocabularies plus the shared filler pool."""

    transcript_topics: tuple[str, ...]
    general_topics: tuple[str, ...]
    filler: tuple[str, ...]


def make_vocab(config: SynthConfig) -> SynthVocab:
    rng = random.Random(config.seed)
    taken: set[str] = set()
    return SynthVocab(
        transcript_topics=tuple(_make_vocab(rng, config.topic_vocab_size, taken)),
        general_topics=tuple(_make_vocab(rng, config.topic_vocab_size, taken)),
        filler=tuple(_make_vocab(rng, config.filler_vocab_size, taken)),
    )


def _filler_sentence(
    rng: random.Random, config: SynthConfig, vocab: SynthVocab, topics: tuple[str, ...]
) -> list[str]:
    n = rng.randint(config.min_words, config.max_words)
    words = [rng.choice(vocab.filler) for _ in range(n)]
    # half the chitchat sentences dangle a topic word as bait
    if rng.random() < 0.5:
        words[rng.randrange(n)] = rng.choice(topics)
    return words


def _topic_sentence(
    rng: random.Random, config: SynthConfig, vocab: SynthVocab, topics: tuple[str, ...]
) -> list[str]:
    n = rng.randint(config.min_words, config.max_words)
    return [
        rng.choice(topics) if rng.random() < 0.35 else rng.choice(vocab.filler)
        for _ in range(n)
    ]


def _plant(words: list[str], phrase: list[str], rng: random.Random) -> int:
    """Overwrite a random window with the phrase; returns the window start."""
    start = rng.randint(0, len(words) - len(phrase))
    words[start : start + len(phrase)] = phrase
    return start


def _build_paragraph(
    pid: str,
    rng: random.Random,
    config: SynthConfig,
    vocab: SynthVocab,
    topics: tuple[str, ...],
    prev_gold: list[str] | None,
) -> tuple[Paragraph, list[str]]:
    n_sentences = rng.randint(config.min_sentences, config.max_sentences)
    is_chitchat = [rng.random() < config.chitchat_rate for _ in range(n_sentences)]
    if all(is_chitchat):
        is_chitchat[rng.randrange(n_sentences)] = False

    sentences: list[list[str]] = []
    for i in range(n_sentences):
        if is_chitchat[i]:
            sentences.append(_filler_sentence(rng, config, vocab, topics))
        else:
            sentences.append(_topic_sentence(rng, config, vocab, topics))

    topical = [i for i in range(n_sentences) if not is_chitchat[i]]
    gold_phrase = [rng.choice(topics) for _ in range(rng.randint(1, 2))]
    gold_sentence = rng.choice(topical)
    gold_pos = _plant(sentences[gold_sentence], gold_phrase, rng)

    if prev_gold is not None and rng.random() < config.overlap_rate:
        candidates = [i for i in topical if i != gold_sentence] or [gold_sentence]
        echo_sentence = rng.choice(candidates)
        pos = _plant(sentences[echo_sentence], list(prev_gold), rng)
        if echo_sentence == gold_sentence and not (
            pos + len(prev_gold) <= gold_pos or gold_pos + len(gold_phrase) <= pos
        ):
            # the echo clobbered the gold phrase; replant the gold phrase
            gold_pos = _plant(sentences[gold_sentence], gold_phrase, rng)

    offset = sum(len(s) for s in sentences[:gold_sentence])
    span = Span(offset + gold_pos, offset + gold_pos + len(gold_phrase))
    paragraph = Paragraph(
        id=pid,
        sentences=tuple(Sentence(tuple(s)) for s in sentences),
        keyphrases=(span,),
    )
    return paragraph, gold_phrase


def generate_transcripts(config: SynthConfig, vocab: SynthVocab | None = None) -> list[Transcript]:
    """Transcripts of paragraphs with exactly one gold keyphrase each."""
    vocab = vocab or make_vocab(config)
    rng = random.Random(config.seed + 1)
    transcripts: list[Transcript] = []
    for t in range(config.n_transcripts):
        paragraphs: list[Paragraph] = []
        prev_gold: list[str] | None = None
        for p in range(config.paragraphs_per_transcript):
            paragraph, gold = _build_paragraph(
                pid=f"t{t:03d}-p{p:03d}",
                rng=rng,
                config=config,
                vocab=vocab,
                topics=vocab.transcript_topics,
                prev_gold=prev_gold,
            )
            paragraphs.append(paragraph)
            prev_gold = gold
        transcripts.append(Transcript(id=f"t{t:03d}", paragraphs=tuple(paragraphs)))
    return transcripts


def generate_general(config: SynthConfig, vocab: SynthVocab | None = None) -> list[CorpusSample]:
    """Standalone general-domain documents over the other topic vocabulary."""
    vocab = vocab or make_vocab(config)
    rng = random.Random(config.seed + 2)
    samples: list[CorpusSample] = []
    for d in range(config.n_general):
        paragraph, _ = _build_paragraph(
            pid=f"g{d:04d}",
            rng=rng,
            config=config,
            vocab=vocab,
            topics=vocab.general_topics,
            prev_gold=None,
        )
        samples.append(CorpusSample(paragraph=paragraph, domain=Domain.GENERAL))
    return samples
