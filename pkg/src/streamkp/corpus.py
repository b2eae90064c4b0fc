"""Data model for transcript and general-domain corpora.

The unit of extraction is the paragraph: a list of tokenized sentences with
gold keyphrases stored as token spans over the flattened token sequence.
Transcripts order their paragraphs by stream time, which is what gives
"previous paragraph" its meaning downstream.

All values here are immutable after construction and safe to share across
threads. Tokenization is whitespace-level; sub-word segmentation is an
encoder concern and never appears in this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Sequence


class CorpusError(ValueError):
    """Raised for malformed corpus files or invariant violations."""


class Label(IntEnum):
    """Per-token keyphrase tag: O outside, B begins a phrase, I continues one."""

    O = 0
    B = 1
    I = 2


LabelSequence = tuple[Label, ...]


class Domain(Enum):
    TRANSCRIPT = "transcript"
    GENERAL = "general"


@dataclass(frozen=True, slots=True)
class Span:
    """Half-open token range [start, end) over a flattened paragraph."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise CorpusError(f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, slots=True)
class Sentence:
    """One tokenized sentence. Tokens are non-empty and contain no whitespace."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise CorpusError("sentence must contain at least one token")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise CorpusError(f"bad token {tok!r}: empty or contains whitespace")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Paragraph:
    """A paragraph with gold keyphrase spans.

    ``keyphrases`` are token spans over the flattened token sequence, kept
    sorted by start and non-overlapping. ``tokens`` and ``sentence_offsets``
    are derived once at construction.
    """

    id: str
    sentences: tuple[Sentence, ...]
    keyphrases: tuple[Span, ...]
    tokens: tuple[str, ...] = field(init=False, repr=False)
    sentence_offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.sentences:
            raise CorpusError(f"paragraph {self.id!r} has no sentences")
        flat: list[str] = []
        offsets: list[int] = []
        for sent in self.sentences:
            offsets.append(len(flat))
            flat.extend(sent.tokens)
        object.__setattr__(self, "tokens", tuple(flat))
        object.__setattr__(self, "sentence_offsets", tuple(offsets))

        n = len(flat)
        prev_end = 0
        for span in self.keyphrases:
            if span.start < prev_end:
                raise CorpusError(
                    f"paragraph {self.id!r}: keyphrase spans overlap or are unsorted"
                )
            if span.end > n:
                raise CorpusError(
                    f"paragraph {self.id!r}: span [{span.start}, {span.end}) "
                    f"exceeds length {n}"
                )
            prev_end = span.end

    @property
    def n(self) -> int:
        return len(self.tokens)

    def sentence_bounds(self, index: int) -> tuple[int, int]:
        """Token range [start, end) of sentence ``index`` in the flattened sequence."""
        start = self.sentence_offsets[index]
        end = start + len(self.sentences[index])
        return start, end

    def sentence_index_of(self, token_index: int) -> int:
        """Index of the sentence containing the given flattened token position."""
        if not 0 <= token_index < self.n:
            raise CorpusError(f"token index {token_index} out of range 0..{self.n - 1}")
        idx = 0
        for i, off in enumerate(self.sentence_offsets):
            if off <= token_index:
                idx = i
            else:
                break
        return idx


@dataclass(frozen=True, slots=True)
class Transcript:
    """An ordered sequence of paragraphs from one stream."""

    id: str
    paragraphs: tuple[Paragraph, ...]


@dataclass(frozen=True, slots=True)
class CorpusSample:
    """One training sample: a paragraph, its domain, and the conditioning phrases.

    ``prev_keyphrases`` holds the previous paragraph's gold keyphrases as
    strings; it is empty for the first paragraph of a transcript and for all
    general-domain samples.
    """

    paragraph: Paragraph
    domain: Domain
    prev_keyphrases: tuple[str, ...] = ()


def phrase_text(paragraph: Paragraph, span: Span) -> str:
    """Surface string of a span: its tokens joined with single spaces."""
    return " ".join(paragraph.tokens[span.start : span.end])


def spans_to_bio(paragraph: Paragraph) -> LabelSequence:
    """Encode the paragraph's gold spans as one B/I/O label per token."""
    labels = [Label.O] * paragraph.n
    for span in paragraph.keyphrases:
        labels[span.start] = Label.B
        for i in range(span.start + 1, span.end):
            labels[i] = Label.I
    return tuple(labels)


def bio_to_spans(labels: Sequence[Label | int]) -> list[Span]:
    """Decode a label sequence into spans, tolerating ill-formed input.

    Maximal B(I)* runs become spans. An I with no live span to continue (no
    preceding B or I) opens a new span rather than being dropped, so no model
    signal is discarded. Output is sorted by start and never overlaps.
    """
    spans: list[Span] = []
    start: int | None = None
    for i, raw in enumerate(labels):
        label = Label(raw)
        if label == Label.B:
            if start is not None:
                spans.append(Span(start, i))
            start = i
        elif label == Label.I:
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append(Span(start, i))
                start = None
    if start is not None:
        spans.append(Span(start, len(labels)))
    return spans


# --- JSONL ingestion -------------------------------------------------------

def _parse_paragraph(obj: dict, *, line_no: int) -> Paragraph:
    try:
        pid = obj["id"]
        sentences = tuple(
            Sentence(tuple(str(t) for t in sent)) for sent in obj["sentences"]
        )
        spans = tuple(Span(int(s), int(e)) for s, e in obj.get("keyphrases", []))
    except CorpusError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"line {line_no}: malformed paragraph object: {exc}") from exc
    return Paragraph(id=str(pid), sentences=sentences, keyphrases=spans)


def _iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}: line {line_no}: expected a JSON object")
            yield line_no, obj


def load_transcripts(path: str | Path) -> list[Transcript]:
    """Load a transcript JSONL file, one transcript per line, in file order."""
    transcripts: list[Transcript] = []
    seen_ids: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        try:
            tid = str(obj["id"])
            raw_paragraphs = obj["paragraphs"]
        except KeyError as exc:
            raise CorpusError(f"line {line_no}: missing field {exc}") from exc
        if tid in seen_ids:
            raise CorpusError(f"line {line_no}: duplicate transcript id {tid!r}")
        seen_ids.add(tid)
        paragraphs = tuple(
            _parse_paragraph(p, line_no=line_no) for p in raw_paragraphs
        )
        pids = [p.id for p in paragraphs]
        if len(set(pids)) != len(pids):
            raise CorpusError(f"line {line_no}: duplicate paragraph ids in {tid!r}")
        transcripts.append(Transcript(id=tid, paragraphs=paragraphs))
    return transcripts


def load_general_corpus(path: str | Path) -> list[CorpusSample]:
    """Load a general-domain JSONL file, one document per line.

    Every sample comes back with ``domain=GENERAL`` and no conditioning
    phrases; zero-keyphrase documents are allowed.
    """
    samples: list[CorpusSample] = []
    seen_ids: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        paragraph = _parse_paragraph(obj, line_no=line_no)
        if paragraph.id in seen_ids:
            raise CorpusError(f"line {line_no}: duplicate document id {paragraph.id!r}")
        seen_ids.add(paragraph.id)
        samples.append(CorpusSample(paragraph=paragraph, domain=Domain.GENERAL))
    return samples


def transcript_samples(transcript: Transcript) -> list[CorpusSample]:
    """Turn a transcript into samples with gold previous-paragraph conditioning."""
    samples: list[CorpusSample] = []
    prev: tuple[str, ...] = ()
    for paragraph in transcript.paragraphs:
        samples.append(
            CorpusSample(
                paragraph=paragraph,
                domain=Domain.TRANSCRIPT,
                prev_keyphrases=prev,
            )
        )
        prev = tuple(phrase_text(paragraph, s) for s in paragraph.keyphrases)
    return samples


# --- JSONL serialization ---------------------------------------------------

def paragraph_to_obj(paragraph: Paragraph) -> dict:
    return {
        "id": paragraph.id,
        "sentences": [list(s.tokens) for s in paragraph.sentences],
        "keyphrases": [[s.start, s.end] for s in paragraph.keyphrases],
    }


def write_transcripts(path: str | Path, transcripts: Iterable[Transcript]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in transcripts:
            obj = {
                "id": t.id,
                "paragraphs": [paragraph_to_obj(p) for p in t.paragraphs],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_general_corpus(path: str | Path, samples: Iterable[CorpusSample]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(paragraph_to_obj(s.paragraph), ensure_ascii=False) + "\n")
