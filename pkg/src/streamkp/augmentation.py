"""Cross-domain augmentation: domain discriminator, attention-based document
filtering, and the bridge (domain-specific phrase) head.

The discriminator is a standalone model — its encoder is a separate instance
from the main extractor's encoder — trained to tell transcript paragraphs
from general-domain documents. Its [CLS] attention over words then drives an
unsupervised filtering step: keep the smallest attention-ranked prefix of
words whose pruned document still gets (almost) the same domain probability
as the full document. Retained words become positive silver labels that the
main model learns to predict through the bridge head.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import torch
from torch import Tensor, nn

from .corpus import CorpusError, CorpusSample, Domain, Paragraph
from .encoder import EncodedSequence, EncoderConfig, TransformerEncoder, build_sequence

PROB_FLOOR = 1e-12
DEFAULT_ETA = 0.05


def _words_of(doc: Paragraph | Sequence[str]) -> Sequence[str]:
    return doc.tokens if isinstance(doc, Paragraph) else doc


@dataclass(frozen=True, slots=True)
class DomainDistribution:
    """Two-domain distribution from a scalar sigmoid logit."""

    p_transcript: float

    @property
    def p_general(self) -> float:
        return 1.0 - self.p_transcript


class DomainDiscriminator(nn.Module):
    """Sigmoid domain classifier over the max-pooled word states.

    ``W2 (W1 mp(H) + b1) + b2`` through a sigmoid gives the probability that
    a document comes from the transcript domain. The encoder defaults to a
    fresh transformer instance — never shared with the main model — but any
    encoder backend can be injected (tests use the bag-of-words stub).
    """

    def __init__(self, config: EncoderConfig, encoder: nn.Module | None = None) -> None:
        super().__init__()
        self.config = config
        self.encoder = encoder if encoder is not None else TransformerEncoder(config)
        self.hidden = nn.Linear(config.hidden_dim, config.hidden_dim)
        self.out = nn.Linear(config.hidden_dim, 1)
        self.hidden.to(torch.float64)
        self.out.to(torch.float64)
        # head params get their own deterministic draw; the encoder already
        # initialized itself from config.seed
        gen = torch.Generator().manual_seed(config.seed + 1)
        with torch.no_grad():
            for module in (self.hidden, self.out):
                for _, param in sorted(module.named_parameters()):
                    if param.dim() >= 2:
                        param.copy_(
                            torch.randn(param.shape, generator=gen, dtype=param.dtype) * 0.02
                        )
                    else:
                        param.zero_()

    def encode_words(self, words: Sequence[str]) -> EncodedSequence:
        """Encode a bare word sequence (no keyphrase conditioning)."""
        build = build_sequence(words, (), self.config)
        return self.encoder.encode(build)

    def probability_from_encoded(self, encoded: EncodedSequence) -> Tensor:
        pooled = encoded.word_vectors.amax(dim=0)
        return torch.sigmoid(self.out(self.hidden(pooled)))[0]

    def forward(self, doc: Paragraph | Sequence[str]) -> Tensor:
        return self.probability_from_encoded(self.encode_words(_words_of(doc)))


def discriminate(
    doc: Paragraph | Sequence[str], disc: DomainDiscriminator
) -> DomainDistribution:
    """Domain distribution for a document, encoded without conditioning."""
    with torch.no_grad():
        p = float(disc(doc))
    return DomainDistribution(p_transcript=p)


@dataclass(frozen=True, slots=True)
class DiscriminatorTrainConfig:
    epochs: int = 3
    lr: float = 1e-3
    batch_size: int = 16
    eval_fraction: float = 0.2
    seed: int = 0


@dataclass(frozen=True, slots=True)
class DiscriminatorTrainResult:
    accuracy: float
    n_train: int
    n_eval: int
    epoch_losses: tuple[float, ...]


def _discriminator_loss(p: Tensor, is_transcript: bool) -> Tensor:
    target = p if is_transcript else 1.0 - p
    return -torch.log(target.clamp_min(PROB_FLOOR))


def train_discriminator(
    samples: Sequence[CorpusSample],
    disc: DomainDiscriminator,
    config: DiscriminatorTrainConfig = DiscriminatorTrainConfig(),
) -> DiscriminatorTrainResult:
    """Train the discriminator on mixed-domain samples; returns held-out accuracy.

    The split and batch order are fully determined by ``config.seed``. The
    last ``eval_fraction`` of the shuffled samples is held out and never
    trained on.
    """
    domains = {s.domain for s in samples}
    if domains != {Domain.TRANSCRIPT, Domain.GENERAL}:
        raise ValueError(
            f"discriminator training needs both domains, got {sorted(d.value for d in domains)}"
        )
    rng = random.Random(config.seed)
    order = list(range(len(samples)))
    rng.shuffle(order)
    n_eval = int(len(samples) * config.eval_fraction)
    train_idx = order[: len(samples) - n_eval]
    eval_idx = order[len(samples) - n_eval :]

    optimizer = torch.optim.Adam(disc.parameters(), lr=config.lr)
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        rng.shuffle(train_idx)
        running = 0.0
        for start in range(0, len(train_idx), config.batch_size):
            batch = train_idx[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = torch.zeros((), dtype=torch.float64)
            for idx in batch:
                sample = samples[idx]
                p = disc(sample.paragraph)
                loss = loss + _discriminator_loss(p, sample.domain == Domain.TRANSCRIPT)
            running += float(loss.detach())
            (loss / len(batch)).backward()
            optimizer.step()
        epoch_losses.append(running / max(len(train_idx), 1))

    correct = 0
    for idx in eval_idx:
        sample = samples[idx]
        dist = discriminate(sample.paragraph, disc)
        if (dist.p_transcript > 0.5) == (sample.domain == Domain.TRANSCRIPT):
            correct += 1
    accuracy = correct / n_eval if n_eval else float("nan")
    return DiscriminatorTrainResult(
        accuracy=accuracy,
        n_train=len(train_idx),
        n_eval=n_eval,
        epoch_losses=tuple(epoch_losses),
    )


# --- attention-based document filtering -------------------------------------

@dataclass(frozen=True, slots=True)
class SilverLabels:
    """Domain-specificity labels from attention pruning of one document.

    ``labels[i] = 1`` exactly for the words retained in the pruned document.
    ``k_used`` is the number of attention-ranked words retained;
    ``converged`` is False when only the degenerate k = n (keep everything)
    met the threshold.
    """

    labels: tuple[int, ...]
    k_used: int
    eta: float
    converged: bool
    full_probability: float
    pruned_probability: float

    @property
    def kept_indices(self) -> tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.labels) if l)


def attention_ranking(encoded: EncodedSequence) -> list[int]:
    """Word indices sorted by [CLS] attention, descending; ties keep document
    order. This ordering is part of the filtering contract."""
    att = encoded.cls_attention.detach()
    return sorted(range(len(att)), key=lambda i: (-float(att[i]), i))


def filter_document(
    doc: Paragraph | Sequence[str],
    disc: DomainDiscriminator,
    *,
    eta: float = DEFAULT_ETA,
) -> SilverLabels:
    """Prune a document to the smallest attention-ranked word prefix whose
    domain probability stays within ``eta`` of the full document's.

    Scans k = 1..n and stops at the first k where
    |p(pruned_k) - p(full)| <= eta, the pruned document being the top-k
    attention-ranked words restored to document order. k = n always
    satisfies the bound (pruned == full), so a result is guaranteed;
    ``converged`` records whether some k < n sufficed.
    """
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    words = _words_of(doc)
    with torch.no_grad():
        encoded = disc.encode_words(words)
        full_p = float(disc.probability_from_encoded(encoded))
    ranking = attention_ranking(encoded)
    n = len(ranking)

    def labels_for(kept: Sequence[int]) -> tuple[int, ...]:
        # words beyond the encoder's length budget were never scored and
        # stay 0, so the label vector always covers the whole document
        mask = [0] * len(words)
        for i in kept:
            mask[i] = 1
        return tuple(mask)

    for k in range(1, n):
        kept = sorted(ranking[:k])
        pruned_p = discriminate([words[i] for i in kept], disc).p_transcript
        if abs(pruned_p - full_p) <= eta:
            return SilverLabels(
                labels=labels_for(kept),
                k_used=k,
                eta=eta,
                converged=True,
                full_probability=full_p,
                pruned_probability=pruned_p,
            )
    return SilverLabels(
        labels=labels_for(ranking),
        k_used=n,
        eta=eta,
        converged=False,
        full_probability=full_p,
        pruned_probability=full_p,
    )


# --- silver records ----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class SilverRecord:
    """A persisted :class:`SilverLabels` keyed by its paragraph."""

    paragraph_id: str
    labels: tuple[int, ...]
    k: int
    eta: float
    converged: bool


def annotate_samples(
    samples: Iterable[CorpusSample],
    disc: DomainDiscriminator,
    *,
    eta: float = DEFAULT_ETA,
) -> list[SilverRecord]:
    """Silver-label every sample (either domain) with a frozen discriminator."""
    records: list[SilverRecord] = []
    for sample in samples:
        result = filter_document(sample.paragraph, disc, eta=eta)
        records.append(
            SilverRecord(
                paragraph_id=sample.paragraph.id,
                labels=result.labels,
                k=result.k_used,
                eta=result.eta,
                converged=result.converged,
            )
        )
    return records


def write_silver(path: str | Path, records: Iterable[SilverRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "paragraph_id": rec.paragraph_id,
                "labels": list(rec.labels),
                "k": rec.k,
                "eta": rec.eta,
                "converged": rec.converged,
            }
            fh.write(json.dumps(obj) + "\n")


def load_silver(path: str | Path) -> dict[str, SilverRecord]:
    """Silver records keyed by paragraph id."""
    records: dict[str, SilverRecord] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = SilverRecord(
                    paragraph_id=str(obj["paragraph_id"]),
                    labels=tuple(int(l) for l in obj["labels"]),
                    k=int(obj["k"]),
                    eta=float(obj["eta"]),
                    converged=bool(obj["converged"]),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CorpusError(
                    f"{path}: line {line_no}: bad silver record: {exc}"
                ) from exc
            if rec.paragraph_id in records:
                raise CorpusError(
                    f"{path}: line {line_no}: duplicate paragraph id {rec.paragraph_id!r}"
                )
            if any(l not in (0, 1) for l in rec.labels):
                raise CorpusError(f"{path}: line {line_no}: labels must be 0/1")
            records[rec.paragraph_id] = rec
    return records


# --- bridge head -------------------------------------------------------------

class BridgeHead(nn.Module):
    """Per-word domain-specific probability: sigmoid(W2 (W1 h + b1) + b2)."""

    def __init__(self, dim: int, *, seed: int = 0) -> None:
        super().__init__()
        self.hidden = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, 1)
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
        return torch.sigmoid(self.out(self.hidden(word_vectors)).squeeze(-1))


def bridge_predict(word_vectors: Tensor, head: BridgeHead) -> Tensor:
    """(n,) probability that each word is domain-specific."""
    return head(word_vectors)


def bridge_loss(probs: Tensor, labels: Sequence[int]) -> Tensor:
    """Summed negative log-likelihood of the binary silver labels, with the
    same 1e-12 probability floor as the extraction loss."""
    if probs.shape[0] != len(labels):
        raise ValueError(f"got {probs.shape[0]} probabilities for {len(labels)} labels")
    target = torch.tensor([float(l) for l in labels], dtype=probs.dtype)
    picked = torch.where(target > 0.5, probs, 1.0 - probs)
    return -torch.log(picked.clamp_min(PROB_FLOOR)).sum()
