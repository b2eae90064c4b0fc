"""Word-level encoders for paragraphs with previous-keyphrase conditioning.

The input layout for a paragraph ``w_1 .. w_n`` conditioned on previous
keyphrases ``kp_1, kp_2, ...`` (best-ranked first) is::

    [CLS] w_1 .. w_n [SEP] kp_1 [SEP] kp_2 [SEP] kp_3 ...

with separators *between* phrases, none trailing. Each word is segmented
into fixed-width character pieces embedded via feature hashing; ``[CLS]``
and ``[SEP]`` own reserved embedding rows. ``TransformerEncoder`` runs a
small trainable post-layer-norm transformer in float64 over the piece
sequence, then averages piece states back into one vector per paragraph
word. The attention a word receives from the ``[CLS]`` query in the final
layer (mean over heads, mean over the word's pieces) is exposed alongside
the states and sums to at most 1 across paragraph words.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

import torch
from torch import Tensor, nn

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"


@dataclass(frozen=True, slots=True)
class EncoderConfig:
    """Hyperparameters shared by all encoder backends.

    ``vocab_hash_buckets`` counts the hashed-piece rows only; the embedding
    table has two extra reserved rows for the marker tokens.
    ``max_sequence_length`` caps the total piece count; longer inputs are
    truncated (appended keyphrases first, then the paragraph tail).
    """

    vocab_hash_buckets: int = 4096
    hidden_dim: int = 32
    num_layers: int = 2
    num_heads: int = 4
    max_sequence_length: int = 512
    piece_length: int = 4
    max_pieces_per_word: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_hash_buckets < 1:
            raise ValueError("vocab_hash_buckets must be positive")
        if self.hidden_dim < 1 or self.num_layers < 0 or self.num_heads < 1:
            raise ValueError("hidden_dim and num_heads must be positive, num_layers >= 0")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            )
        if self.max_sequence_length < 8:
            raise ValueError("max_sequence_length must be at least 8")
        if self.piece_length < 1 or self.max_pieces_per_word < 1:
            raise ValueError("piece_length and max_pieces_per_word must be positive")


def segment_word(word: str, *, piece_length: int = 4, max_pieces: int = 4) -> tuple[str, ...]:
    """Split a word into consecutive character chunks, capped at ``max_pieces``.

    The cap drops trailing characters of very long words, so two words that
    share a long-enough prefix collide on purpose.
    """
    if not word:
        raise ValueError("cannot segment an empty word")
    pieces = [word[i : i + piece_length] for i in range(0, len(word), piece_length)]
    return tuple(pieces[:max_pieces])


def hash_piece(piece: str, buckets: int) -> int:
    """Stable hash bucket for a piece (CRC-32 of its UTF-8 bytes)."""
    return zlib.crc32(piece.encode("utf-8")) % buckets


class EntryKind(Enum):
    CLS = "cls"
    WORD = "word"
    SEP = "sep"
    CONTEXT = "context"


@dataclass(frozen=True, slots=True)
class SequenceEntry:
    """One slot in the built sequence, covering one or more pieces."""

    kind: EntryKind
    text: str
    pieces: tuple[str, ...]
    word_index: int | None = None


@dataclass(frozen=True, slots=True)
class SequenceBuild:
    """A fully laid-out input sequence, after truncation.

    ``n_words`` counts the paragraph words kept; ``dropped_words`` and
    ``dropped_phrases`` record what truncation removed (phrases are dropped
    lowest-rank-first before any paragraph word is touched).
    """

    entries: tuple[SequenceEntry, ...]
    n_words: int
    n_phrases: int
    dropped_words: int
    dropped_phrases: int

    @property
    def total_pieces(self) -> int:
        return sum(len(e.pieces) for e in self.entries)

    @property
    def tokens(self) -> tuple[str, ...]:
        """The laid-out sequence at token level, markers included."""
        return tuple(e.text for e in self.entries)

    def piece_spans(self) -> tuple[tuple[int, int], ...]:
        """Per-entry half-open piece index ranges, in sequence order."""
        spans: list[tuple[int, int]] = []
        offset = 0
        for entry in self.entries:
            spans.append((offset, offset + len(entry.pieces)))
            offset += len(entry.pieces)
        return tuple(spans)


def _marker_entry(kind: EntryKind, text: str) -> SequenceEntry:
    return SequenceEntry(kind=kind, text=text, pieces=(text,))


def build_sequence(
    words: Sequence[str],
    prev_keyphrases: Sequence[str],
    config: EncoderConfig,
) -> SequenceBuild:
    """Lay out ``[CLS] words [SEP] kp_1 [SEP] kp_2 ...`` within the length budget.

    ``prev_keyphrases`` must be ordered best-first; when the sequence exceeds
    ``max_sequence_length`` pieces, whole phrases are dropped starting from
    the worst-ranked, and only then is the paragraph truncated from its tail.
    """
    if not words:
        raise ValueError("build_sequence requires at least one paragraph word")
    seg = lambda w: segment_word(
        w, piece_length=config.piece_length, max_pieces=config.max_pieces_per_word
    )
    word_pieces = [seg(w) for w in words]
    phrase_words: list[list[tuple[str, tuple[str, ...]]]] = []
    for phrase in prev_keyphrases:
        toks = phrase.split()
        if toks:
            phrase_words.append([(t, seg(t)) for t in toks])

    budget = config.max_sequence_length
    word_cost = [len(p) for p in word_pieces]
    # first phrase follows the paragraph's own [SEP]; later ones add a [SEP]
    phrase_cost = [
        sum(len(p) for _, p in ph) + (1 if i > 0 else 0)
        for i, ph in enumerate(phrase_words)
    ]

    n_words = len(words)
    n_phrases = len(phrase_words)
    total = 1 + sum(word_cost) + 1 + sum(phrase_cost)
    while total > budget and n_phrases > 0:
        n_phrases -= 1
        total -= phrase_cost[n_phrases]
    while total > budget and n_words > 1:
        n_words -= 1
        total -= word_cost[n_words]
    if total > budget:
        raise ValueError(
            f"a single word needs {total} positions but max_sequence_length is {budget}"
        )

    entries: list[SequenceEntry] = [_marker_entry(EntryKind.CLS, CLS_TOKEN)]
    for i in range(n_words):
        entries.append(
            SequenceEntry(
                kind=EntryKind.WORD,
                text=words[i],
                pieces=word_pieces[i],
                word_index=i,
            )
        )
    entries.append(_marker_entry(EntryKind.SEP, SEP_TOKEN))
    for j, ph in enumerate(phrase_words[:n_phrases]):
        if j > 0:
            entries.append(_marker_entry(EntryKind.SEP, SEP_TOKEN))
        for text, pieces in ph:
            entries.append(SequenceEntry(kind=EntryKind.CONTEXT, text=text, pieces=pieces))

    return SequenceBuild(
        entries=tuple(entries),
        n_words=n_words,
        n_phrases=n_phrases,
        dropped_words=len(words) - n_words,
        dropped_phrases=len(phrase_words) - n_phrases,
    )


def piece_ids(build: SequenceBuild, config: EncoderConfig) -> list[int]:
    """Embedding row per piece; markers use the two reserved trailing rows."""
    cls_id = config.vocab_hash_buckets
    sep_id = config.vocab_hash_buckets + 1
    ids: list[int] = []
    for entry in build.entries:
        if entry.kind == EntryKind.CLS:
            ids.append(cls_id)
        elif entry.kind == EntryKind.SEP:
            ids.append(sep_id)
        else:
            ids.extend(hash_piece(p, config.vocab_hash_buckets) for p in entry.pieces)
    return ids


@dataclass
class EncodedSequence:
    """Encoder output for one built sequence.

    ``word_vectors`` has one row per kept paragraph word (piece-averaged).
    ``paragraph_vector`` is the final-layer [CLS] state. ``cls_attention``
    is each word's share of the final-layer [CLS]-query attention; it sums
    to at most 1 over words. ``appended_kp_vectors`` holds the states of the
    appended previous-keyphrase tokens (piece-averaged, excluded from
    ``word_vectors``), one row per kept context token.
    """

    build: SequenceBuild
    word_vectors: Tensor
    paragraph_vector: Tensor
    cls_attention: Tensor
    appended_kp_vectors: Tensor

    @property
    def n_words(self) -> int:
        return self.build.n_words


def aggregate_pieces(
    build: SequenceBuild, hidden: Tensor, cls_attention_row: Tensor
) -> EncodedSequence:
    """Reduce per-piece states back to per-word states.

    ``hidden`` is (total_pieces, dim); ``cls_attention_row`` is the
    (total_pieces,) attention distribution of the [CLS] query. Word states
    average their pieces' rows; word attention averages its pieces' shares.
    """
    dim = hidden.shape[1]
    word_vecs: list[Tensor] = []
    word_att: list[Tensor] = []
    context_vecs: list[Tensor] = []
    for entry, (lo, hi) in zip(build.entries, build.piece_spans()):
        if entry.kind == EntryKind.WORD:
            word_vecs.append(hidden[lo:hi].mean(dim=0))
            word_att.append(cls_attention_row[lo:hi].mean())
        elif entry.kind == EntryKind.CONTEXT:
            context_vecs.append(hidden[lo:hi].mean(dim=0))
    return EncodedSequence(
        build=build,
        word_vectors=torch.stack(word_vecs),
        paragraph_vector=hidden[0],
        cls_attention=torch.stack(word_att),
        appended_kp_vectors=(
            torch.stack(context_vecs)
            if context_vecs
            else hidden.new_zeros((0, dim))
        ),
    )


def attention_scores(encoded: EncodedSequence) -> Tensor:
    """Per-word [CLS] attention shares (non-negative, summing to at most 1)."""
    return encoded.cls_attention


class Encoder(Protocol):
    """Anything that maps a built sequence to per-word states."""

    config: EncoderConfig

    def encode(self, build: SequenceBuild) -> EncodedSequence: ...


class _TransformerLayer(nn.Module):
    """Post-LN block: self-attention then a ReLU feed-forward, each residual."""

    def __init__(self, dim: int, num_heads: int) -> None:
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.o_proj = nn.Linear(dim, dim)
        self.attn_norm = nn.LayerNorm(dim, eps=1e-5)
        self.ff_in = nn.Linear(dim, 2 * dim)
        self.ff_out = nn.Linear(2 * dim, dim)
        self.ff_norm = nn.LayerNorm(dim, eps=1e-5)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        n = x.shape[0]
        shape = (n, self.num_heads, self.head_dim)
        q = self.q_proj(x).view(shape).transpose(0, 1)
        k = self.k_proj(x).view(shape).transpose(0, 1)
        v = self.v_proj(x).view(shape).transpose(0, 1)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        probs = torch.softmax(scores, dim=-1)
        context = (probs @ v).transpose(0, 1).reshape(n, -1)
        x = self.attn_norm(x + self.o_proj(context))
        x = self.ff_norm(x + self.ff_out(torch.relu(self.ff_in(x))))
        return x, probs


class TransformerEncoder(nn.Module):
    """Small trainable transformer over hashed pieces, float64 throughout.

    Parameter initialization is fully determined by ``config.seed`` and
    independent of global RNG state: parameters are re-drawn in sorted name
    order from a dedicated generator.
    """

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(
            config.vocab_hash_buckets + 2, config.hidden_dim
        )
        self.position_embedding = nn.Embedding(
            config.max_sequence_length, config.hidden_dim
        )
        self.layers = nn.ModuleList(
            _TransformerLayer(config.hidden_dim, config.num_heads)
            for _ in range(config.num_layers)
        )
        self.to(torch.float64)
        self.reset_parameters(config.seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, param in sorted(self.named_parameters()):
                if "norm" in name:
                    param.fill_(1.0 if name.endswith("weight") else 0.0)
                elif name.endswith("bias"):
                    param.zero_()
                else:
                    param.copy_(
                        torch.randn(param.shape, generator=gen, dtype=param.dtype) * 0.02
                    )

    def encode(self, build: SequenceBuild) -> EncodedSequence:
        ids = torch.tensor(piece_ids(build, self.config), dtype=torch.long)
        positions = torch.arange(len(ids), dtype=torch.long)
        x = self.token_embedding(ids) + self.position_embedding(positions)
        if self.layers:
            cls_row: Tensor | None = None
            for layer in self.layers:
                x, probs = layer(x)
                cls_row = probs.mean(dim=0)[0]
            assert cls_row is not None
        else:
            # degenerate but useful for debugging: uniform attention
            cls_row = torch.full((len(ids),), 1.0 / len(ids), dtype=torch.float64)
        return aggregate_pieces(build, x, cls_row)

    def forward(self, build: SequenceBuild) -> EncodedSequence:
        return self.encode(build)


class BagOfWordsEncoder(nn.Module):
    """Order-invariant baseline encoder: a word's state is the mean of its
    piece embeddings, untouched by any mixing across positions.

    [CLS] attention is a uniform distribution over sequence entries, so each
    word's share is 1/len(entries). Mainly used to pin down order-invariance
    properties in tests.
    """

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(
            config.vocab_hash_buckets + 2, config.hidden_dim
        )
        self.to(torch.float64)
        gen = torch.Generator().manual_seed(config.seed)
        with torch.no_grad():
            self.token_embedding.weight.copy_(
                torch.randn(
                    self.token_embedding.weight.shape, generator=gen, dtype=torch.float64
                )
                * 0.02
            )

    def _entry_vector(self, entry: SequenceEntry) -> Tensor:
        ids = torch.tensor(
            [hash_piece(p, self.config.vocab_hash_buckets) for p in entry.pieces],
            dtype=torch.long,
        )
        return self.token_embedding(ids).mean(dim=0)

    def encode(self, build: SequenceBuild) -> EncodedSequence:
        uniform = 1.0 / len(build.entries)
        word_vecs = [
            self._entry_vector(e) for e in build.entries if e.kind == EntryKind.WORD
        ]
        context_vecs = [
            self._entry_vector(e) for e in build.entries if e.kind == EntryKind.CONTEXT
        ]
        cls_id = torch.tensor([self.config.vocab_hash_buckets], dtype=torch.long)
        return EncodedSequence(
            build=build,
            word_vectors=torch.stack(word_vecs),
            paragraph_vector=self.token_embedding(cls_id)[0],
            cls_attention=torch.full((len(word_vecs),), uniform, dtype=torch.float64),
            appended_kp_vectors=(
                torch.stack(context_vecs)
                if context_vecs
                else torch.zeros((0, self.config.hidden_dim), dtype=torch.float64)
            ),
        )

    def forward(self, build: SequenceBuild) -> EncodedSequence:
        return self.encode(build)


class PieceModel(Protocol):
    """Adapter contract for an external piece-level model.

    Given the piece strings of a built sequence, returns final-layer hidden
    states of shape (total_pieces, dim) and the [CLS] query's attention
    distribution of shape (total_pieces,), already averaged over heads.
    """

    def __call__(self, pieces: Sequence[str]) -> tuple[Tensor, Tensor]: ...


class PretrainedEncoderAdapter:
    """Wraps an externally supplied piece-level model as an :class:`Encoder`.

    The wrapped model is injected, never loaded from disk or network here;
    this class only owns the piece layout and word aggregation.
    """

    def __init__(self, config: EncoderConfig, model: PieceModel) -> None:
        self.config = config
        self._model = model

    def encode(self, build: SequenceBuild) -> EncodedSequence:
        pieces = [p for entry in build.entries for p in entry.pieces]
        hidden, cls_row = self._model(pieces)
        hidden = torch.as_tensor(hidden, dtype=torch.float64)
        cls_row = torch.as_tensor(cls_row, dtype=torch.float64)
        if hidden.shape != (len(pieces), self.config.hidden_dim):
            raise ValueError(
                f"adapter model returned hidden states of shape {tuple(hidden.shape)}, "
                f"expected {(len(pieces), self.config.hidden_dim)}"
            )
        if cls_row.shape != (len(pieces),):
            raise ValueError(
                f"adapter model returned attention of shape {tuple(cls_row.shape)}, "
                f"expected {(len(pieces),)}"
            )
        return aggregate_pieces(build, hidden, cls_row)
