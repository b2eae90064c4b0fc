"""Per-word label head, its loss, and span decoding.

The head maps each word state through two stacked affine layers (no
activation in between, by design) and a softmax into a distribution over
the three word labels. Decoding takes per-word argmax labels, groups them
into spans, and scores each span by the probability that its first word
begins a phrase.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import Tensor, nn

from .corpus import Label, Span, bio_to_spans

PROB_FLOOR = 1e-12


class ExtractorHead(nn.Module):
    """softmax(W2 (W1 h + b1) + b2) over the three word labels."""

    def __init__(self, dim: int, *, seed: int = 0) -> None:
        super().__init__()
        self.hidden = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, len(Label))
        self.to(torch.float64)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for _, param in sorted(self.named_parameters()):
                if param.dim() >= 2:
                    param.copy_(
                        torch.randn(param.shape, generator=gen, dtype=param.dtype) * 0.02
                    )
                else:
                    param.zero_()

    def forward(self, word_vectors: Tensor) -> Tensor:
        return self.out(self.hidden(word_vectors))


def predict_label_distributions(word_vectors: Tensor, head: ExtractorHead) -> Tensor:
    """(n, 3) label probabilities for each word state; rows sum to 1."""
    return torch.softmax(head(word_vectors), dim=-1)


def keyphrase_loss(probs: Tensor, labels: Sequence[Label | int]) -> Tensor:
    """Negative log-likelihood of the gold labels, summed over words.

    Probabilities are floored at 1e-12 before the log so a confidently wrong
    model yields a large finite loss rather than an infinity.
    """
    if probs.shape[0] != len(labels):
        raise ValueError(
            f"got {probs.shape[0]} distributions for {len(labels)} labels"
        )
    idx = torch.tensor([int(l) for l in labels], dtype=torch.long)
    gold = probs[torch.arange(len(labels)), idx]
    return -torch.log(gold.clamp_min(PROB_FLOOR)).sum()


@dataclass(frozen=True, slots=True)
class ScoredSpan:
    """A decoded keyphrase span with its ranking score."""

    span: Span
    score: float


def decode_keyphrases(probs: Tensor) -> list[ScoredSpan]:
    """Greedy decode: per-word argmax labels, then spans ranked by the
    begin-probability of each span's first word (ties broken by earlier
    start)."""
    labels = [Label(int(i)) for i in probs.argmax(dim=-1)]
    spans = bio_to_spans(labels)
    scored = [
        ScoredSpan(span=s, score=float(probs[s.start, Label.B])) for s in spans
    ]
    scored.sort(key=lambda sp: (-sp.score, sp.span.start))
    return scored


def argmax_labels(probs: Tensor) -> list[Label]:
    """Per-word argmax label sequence (the greedy roll-out)."""
    return [Label(int(i)) for i in probs.argmax(dim=-1)]
