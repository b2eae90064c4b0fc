"""Corpus data model: spans, BIO codec, JSONL loaders and writers."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamkp.corpus import (
    CorpusError,
    CorpusSample,
    Domain,
    Label,
    Paragraph,
    Sentence,
    Span,
    Transcript,
    bio_to_spans,
    load_general_corpus,
    load_transcripts,
    paragraph_to_obj,
    phrase_text,
    spans_to_bio,
    transcript_samples,
    write_general_corpus,
    write_transcripts,
)


def make_paragraph(pid, sentence_tokens, keyphrases=()):
    return Paragraph(
        id=pid,
        sentences=tuple(Sentence(tuple(s)) for s in sentence_tokens),
        keyphrases=tuple(Span(s, e) for s, e in keyphrases),
    )


def random_paragraph(rng: random.Random, max_tokens: int = 64) -> Paragraph:
    """A random valid paragraph with random non-overlapping gold spans."""
    n = rng.randint(1, max_tokens)
    tokens = [f"w{i}" for i in range(n)]
    # split into random sentences
    cuts = sorted(rng.sample(range(1, n), min(rng.randint(0, 3), n - 1))) if n > 1 else []
    bounds = [0, *cuts, n]
    sentences = [tokens[a:b] for a, b in zip(bounds, bounds[1:])]
    # random sorted non-overlapping spans
    spans: list[tuple[int, int]] = []
    pos = 0
    while pos < n and len(spans) < 4:
        if rng.random() < 0.4:
            start = rng.randint(pos, n - 1)
            end = rng.randint(start + 1, min(n, start + 3))
            spans.append((start, end))
            pos = end
        else:
            pos += rng.randint(1, 3)
    return make_paragraph("p", sentences, spans)


# --- labels and spans --------------------------------------------------------

def test_label_values():
    assert (Label.O, Label.B, Label.I) == (0, 1, 2)


def test_span_rejects_empty_and_negative():
    with pytest.raises(CorpusError):
        Span(2, 2)
    with pytest.raises(CorpusError):
        Span(3, 1)
    with pytest.raises(CorpusError):
        Span(-1, 1)
    assert len(Span(2, 5)) == 3


def test_sentence_rejects_bad_tokens():
    with pytest.raises(CorpusError):
        Sentence(())
    with pytest.raises(CorpusError):
        Sentence(("a b",))
    with pytest.raises(CorpusError):
        Sentence(("",))


def test_paragraph_rejects_overlapping_and_out_of_range_spans():
    with pytest.raises(CorpusError):
        make_paragraph("p", [["a", "b", "c"]], [(0, 2), (1, 3)])
    with pytest.raises(CorpusError):
        make_paragraph("p", [["a", "b", "c"]], [(1, 1)])
    with pytest.raises(CorpusError):
        make_paragraph("p", [["a", "b"]], [(0, 3)])
    with pytest.raises(CorpusError):
        make_paragraph("p", [["a", "b", "c"]], [(1, 3), (0, 1)])  # unsorted
    with pytest.raises(CorpusError):
        Paragraph(id="p", sentences=(), keyphrases=())


def test_paragraph_derived_fields():
    p = make_paragraph("p", [["a", "b"], ["c"], ["d", "e", "f"]])
    assert p.tokens == ("a", "b", "c", "d", "e", "f")
    assert p.n == 6
    assert p.sentence_offsets == (0, 2, 3)
    assert p.sentence_bounds(1) == (2, 3)
    assert p.sentence_bounds(2) == (3, 6)
    assert [p.sentence_index_of(i) for i in range(6)] == [0, 0, 1, 2, 2, 2]
    with pytest.raises(CorpusError):
        p.sentence_index_of(6)
    with pytest.raises(CorpusError):
        p.sentence_index_of(-1)


def test_phrase_text_joins_tokens():
    p = make_paragraph("p", [["use", "the", "background", "layer"]])
    assert phrase_text(p, Span(2, 4)) == "background layer"


# --- BIO codec ---------------------------------------------------------------

def test_spans_to_bio_hand_case():
    p = make_paragraph("p", [["a", "b", "c", "d", "e"]], [(1, 3), (4, 5)])
    assert spans_to_bio(p) == (Label.O, Label.B, Label.I, Label.O, Label.B)


def test_spans_to_bio_no_spans_is_all_o():
    p = make_paragraph("p", [["a", "b"]])
    assert spans_to_bio(p) == (Label.O, Label.O)


def test_bio_to_spans_basic():
    assert bio_to_spans([Label.B, Label.I, Label.O, Label.B]) == [Span(0, 2), Span(3, 4)]


def test_bio_to_spans_adjacent_b_starts_new_span():
    assert bio_to_spans([Label.B, Label.B, Label.I]) == [Span(0, 1), Span(1, 3)]


def test_bio_to_spans_orphan_i_opens_span():
    assert bio_to_spans([Label.I, Label.O, Label.B]) == [Span(0, 1), Span(2, 3)]


def test_bio_to_spans_trailing_span_closed():
    assert bio_to_spans([Label.O, Label.B, Label.I]) == [Span(1, 3)]


def test_bio_to_spans_accepts_raw_ints():
    assert bio_to_spans([0, 1, 2, 2]) == [Span(1, 4)]


def test_bio_to_spans_empty():
    assert bio_to_spans([]) == []


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_bio_round_trip_random(seed):
    rng = random.Random(seed)
    p = random_paragraph(rng)
    decoded = bio_to_spans(spans_to_bio(p))
    assert decoded == list(p.keyphrases)


def test_bio_to_spans_output_sorted_nonoverlapping_fuzz():
    rng = random.Random(7)
    for _ in range(300):
        labels = [rng.choice([0, 1, 2]) for _ in range(rng.randint(0, 20))]
        spans = bio_to_spans(labels)
        for a, b in zip(spans, spans[1:]):
            assert a.end <= b.start


# --- JSONL round trips and loader errors --------------------------------------

def _write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def test_transcript_round_trip(tmp_path):
    t = Transcript(
        id="t0",
        paragraphs=(
            make_paragraph("p0", [["a", "b"], ["c"]], [(0, 2)]),
            make_paragraph("p1", [["d", "e"]], []),
        ),
    )
    path = tmp_path / "tr.jsonl"
    write_transcripts(path, [t])
    assert load_transcripts(path) == [t]


def test_general_round_trip(tmp_path):
    samples = [
        CorpusSample(make_paragraph("g0", [["x", "y"]], [(1, 2)]), Domain.GENERAL),
        CorpusSample(make_paragraph("g1", [["z"]], []), Domain.GENERAL),
    ]
    path = tmp_path / "gen.jsonl"
    write_general_corpus(path, samples)
    assert load_general_corpus(path) == samples


def test_empty_file_loads_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_transcripts(path) == []
    assert load_general_corpus(path) == []


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "tr.jsonl"
    obj = {"id": "t", "paragraphs": [paragraph_to_obj(make_paragraph("p", [["a"]]))]}
    _write_lines(path, ["", json.dumps(obj), "   "])
    assert len(load_transcripts(path)) == 1


def test_invalid_json_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    obj = {"id": "t", "paragraphs": []}
    _write_lines(path, [json.dumps(obj), "{not json"])
    with pytest.raises(CorpusError, match="line 2"):
        load_transcripts(path)


def test_non_object_line_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    _write_lines(path, ["[1, 2]"])
    with pytest.raises(CorpusError, match="line 1"):
        load_transcripts(path)


def test_duplicate_transcript_id_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    obj = {"id": "t", "paragraphs": []}
    _write_lines(path, [json.dumps(obj), json.dumps(obj)])
    with pytest.raises(CorpusError, match="duplicate transcript id"):
        load_transcripts(path)


def test_duplicate_paragraph_id_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    p = paragraph_to_obj(make_paragraph("p", [["a"]]))
    _write_lines(path, [json.dumps({"id": "t", "paragraphs": [p, p]})])
    with pytest.raises(CorpusError, match="duplicate paragraph ids"):
        load_transcripts(path)


def test_duplicate_general_id_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    p = json.dumps(paragraph_to_obj(make_paragraph("g", [["a"]])))
    _write_lines(path, [p, p])
    with pytest.raises(CorpusError, match="duplicate document id"):
        load_general_corpus(path)


def test_out_of_range_span_rejected_by_loader(tmp_path):
    path = tmp_path / "bad.jsonl"
    obj = {"id": "g", "sentences": [["a", "b"]], "keyphrases": [[0, 5]]}
    _write_lines(path, [json.dumps(obj)])
    with pytest.raises(CorpusError):
        load_general_corpus(path)


def test_missing_field_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    _write_lines(path, [json.dumps({"paragraphs": []})])
    with pytest.raises(CorpusError):
        load_transcripts(path)


def test_keyphrases_field_optional(tmp_path):
    path = tmp_path / "ok.jsonl"
    _write_lines(path, [json.dumps({"id": "g", "sentences": [["a"]]})])
    [sample] = load_general_corpus(path)
    assert sample.paragraph.keyphrases == ()


# --- sample construction -------------------------------------------------------

def test_transcript_samples_chain_gold_keyphrases():
    t = Transcript(
        id="t",
        paragraphs=(
            make_paragraph("p0", [["alpha", "beta", "gamma"]], [(0, 2)]),
            make_paragraph("p1", [["delta"]], []),
            make_paragraph("p2", [["eps", "zeta"]], [(1, 2)]),
        ),
    )
    samples = transcript_samples(t)
    assert [s.prev_keyphrases for s in samples] == [(), ("alpha beta",), ()]
    assert all(s.domain == Domain.TRANSCRIPT for s in samples)


def test_general_samples_have_no_conditioning(tmp_path):
    path = tmp_path / "gen.jsonl"
    write_general_corpus(
        path, [CorpusSample(make_paragraph("g", [["a"]]), Domain.GENERAL)]
    )
    [sample] = load_general_corpus(path)
    assert sample.prev_keyphrases == ()
