"""Reward shaping and REINFORCE-style training.

Two rewards discourage degenerate extractions: a repetition penalty for
re-extracting words already covered by the previous paragraph's keyphrases,
and a chitchat penalty for keyphrases that start inside an off-topic
sentence. The policy-gradient surrogate uses the greedy roll-out (argmax
labels) and a mini-batch mean baseline, and is combined with the supervised
extraction loss and the bridge loss into one update.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import torch
from torch import Tensor

from .augmentation import SilverRecord, bridge_loss, bridge_predict
from .chitchat import DEFAULT_BETA, chitchat_reward, detect_chitchat
from .corpus import CorpusSample, Label, Paragraph, bio_to_spans, spans_to_bio
from .encoder import EncodedSequence
from .extractor import PROB_FLOOR, keyphrase_loss
from .model import KeyphraseModel


def prev_keyphrase_tokens(prev_keyphrases: Sequence[str]) -> frozenset[str]:
    """Lowercased tokens of the previous paragraph's keyphrases."""
    tokens: set[str] = set()
    for phrase in prev_keyphrases:
        tokens.update(tok.lower() for tok in phrase.split())
    return frozenset(tokens)


def rep_indicator(
    word_index: int,
    predicted_dists: Tensor,
    prev_keyphrases: Sequence[str],
    paragraph: Paragraph,
) -> int:
    """1 iff the word is predicted inside a keyphrase (argmax B or I) and its
    lowercased token already occurs in a previous-paragraph keyphrase."""
    label = int(predicted_dists[word_index].argmax())
    if label == Label.O:
        return 0
    word = paragraph.tokens[word_index].lower()
    return int(word in prev_keyphrase_tokens(prev_keyphrases))


def repetition_reward(
    predicted_dists: Tensor,
    prev_keyphrases: Sequence[str],
    paragraph: Paragraph,
) -> float:
    """Mean repetition penalty over the scored words; always in [-1, 0]."""
    n = predicted_dists.shape[0]
    if n == 0:
        return 0.0
    prev_tokens = prev_keyphrase_tokens(prev_keyphrases)
    if not prev_tokens:
        return 0.0
    labels = predicted_dists.argmax(dim=-1)
    hits = sum(
        1
        for i in range(n)
        if int(labels[i]) != Label.O and paragraph.tokens[i].lower() in prev_tokens
    )
    return -hits / n


def combine_rewards(r_rep: float, r_chitchat: float, alpha_weight: float) -> float:
    """Total reward r_rep + alpha_weight * r_chitchat."""
    if alpha_weight < 0:
        raise ValueError(f"alpha_weight must be non-negative, got {alpha_weight}")
    return r_rep + alpha_weight * r_chitchat


def batch_baseline(rewards: Sequence[float]) -> float:
    """Mini-batch mean reward; the advantage baseline."""
    if not rewards:
        raise ValueError("baseline of an empty batch is undefined")
    return sum(rewards) / len(rewards)


@dataclass(frozen=True, slots=True)
class RewardBundle:
    """Per-sample rewards plus the shared batch baseline."""

    r_rep: float
    r_chitchat: float
    r_total: float
    b: float

    @property
    def advantage(self) -> float:
        return self.r_total - self.b


def rollout_log_likelihood(predicted_dists: Tensor) -> Tensor:
    """Sum of log-probabilities of the greedy (argmax) label roll-out."""
    if predicted_dists.shape[0] == 0:
        return torch.zeros((), dtype=predicted_dists.dtype)
    picked = predicted_dists.gather(
        1, predicted_dists.argmax(dim=-1, keepdim=True)
    ).squeeze(-1)
    return torch.log(picked.clamp_min(PROB_FLOOR)).sum()


def reinforce_loss(predicted_dists: Tensor, r_total: float, b: float) -> Tensor:
    """Policy-gradient surrogate −(r_total − b) · Σ log P(argmax label).

    The advantage is a plain float, so no gradient flows through the reward;
    differentiating this surrogate gives exactly −(r−b)·∇Σ log P.
    """
    advantage = r_total - b
    return -advantage * rollout_log_likelihood(predicted_dists)


@dataclass(frozen=True, slots=True)
class TrainConfig:
    """Hyperparameters for the combined training loop."""

    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 8
    lambda_bridge: float = 1.0
    lambda_rl: float = 1.0
    alpha_weight: float = 0.5
    beta: float = DEFAULT_BETA
    eta: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.lambda_bridge < 0 or self.lambda_rl < 0:
            raise ValueError("loss weights must be non-negative")
        if self.alpha_weight < 0:
            raise ValueError(f"alpha_weight must be non-negative, got {self.alpha_weight}")


@dataclass(frozen=True, slots=True)
class StepMetrics:
    step: int
    l_kp: float
    l_bridge: float
    l_rl: float
    r_rep: float
    r_chitchat: float
    b: float


def write_metrics(path: str | Path, metrics: Iterable[StepMetrics]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(json.dumps(asdict(m)) + "\n")


def make_optimizer(model: KeyphraseModel, lr: float) -> torch.optim.Optimizer:
    # Adam rather than plain SGD: the toy encoder's loss surface is badly
    # scaled and fixed-rate SGD needs per-task tuning to converge at all.
    return torch.optim.Adam(model.parameters(), lr=lr)


def train_step(
    model: KeyphraseModel,
    batch: Sequence[CorpusSample],
    silver: Mapping[str, SilverRecord] | None,
    config: TrainConfig,
    optimizer: torch.optim.Optimizer,
    step: int,
) -> StepMetrics:
    """One combined update: L_kp + λ_bridge·L_bridge + λ_rl·L_R over a batch.

    Components with a zero weight are skipped outright, so a zero-weight run
    is bitwise identical to one that never had the component. Samples whose
    paragraph has no silver record contribute no bridge term.
    """
    optimizer.zero_grad()
    sum_kp = torch.zeros((), dtype=torch.float64)
    sum_bridge = torch.zeros((), dtype=torch.float64)
    cached: list[tuple[Tensor, CorpusSample, EncodedSequence]] = []

    for sample in batch:
        paragraph = sample.paragraph
        encoded = model.encode_words(
            paragraph.tokens, prev_keyphrases=sample.prev_keyphrases
        )
        probs = model.label_distributions(encoded)
        n = probs.shape[0]
        gold = spans_to_bio(paragraph)[:n]
        sum_kp = sum_kp + keyphrase_loss(probs, gold)

        if config.lambda_bridge > 0 and silver is not None:
            record = silver.get(paragraph.id)
            if record is not None:
                bridge_probs = bridge_predict(encoded.word_vectors, model.bridge_head)
                sum_bridge = sum_bridge + bridge_loss(bridge_probs, record.labels[:n])

        cached.append((probs, sample, encoded))

    sum_rl = torch.zeros((), dtype=torch.float64)
    mean_rep = 0.0
    mean_cc = 0.0
    baseline = 0.0
    if config.lambda_rl > 0:
        raw: list[tuple[float, float, float]] = []
        for probs, sample, encoded in cached:
            r_rep = repetition_reward(probs, sample.prev_keyphrases, sample.paragraph)
            if config.alpha_weight > 0:
                flags = detect_chitchat(sample.paragraph, encoded, config.beta)
                labels = [Label(int(l)) for l in probs.argmax(dim=-1)]
                spans = bio_to_spans(labels)
                r_cc = chitchat_reward(spans, flags, sample.paragraph)
            else:
                r_cc = 0.0
            raw.append((r_rep, r_cc, combine_rewards(r_rep, r_cc, config.alpha_weight)))
        baseline = batch_baseline([r[2] for r in raw])
        bundles = [RewardBundle(*r, b=baseline) for r in raw]
        for (probs, _, _), bundle in zip(cached, bundles):
            sum_rl = sum_rl + reinforce_loss(probs, bundle.r_total, bundle.b)
        mean_rep = sum(b.r_rep for b in bundles) / len(bundles)
        mean_cc = sum(b.r_chitchat for b in bundles) / len(bundles)

    total = sum_kp
    if config.lambda_bridge > 0:
        total = total + config.lambda_bridge * sum_bridge
    if config.lambda_rl > 0:
        total = total + config.lambda_rl * sum_rl

    if not torch.isfinite(total):
        raise RuntimeError(
            f"non-finite loss at step {step}: "
            f"l_kp={float(sum_kp.detach())}, l_bridge={float(sum_bridge.detach())}, "
            f"l_rl={float(sum_rl.detach())}"
        )

    total.backward()
    optimizer.step()
    return StepMetrics(
        step=step,
        l_kp=float(sum_kp.detach()),
        l_bridge=float(sum_bridge.detach()),
        l_rl=float(sum_rl.detach()),
        r_rep=mean_rep,
        r_chitchat=mean_cc,
        b=baseline,
    )


def train(
    model: KeyphraseModel,
    samples: Sequence[CorpusSample],
    config: TrainConfig,
    *,
    silver: Mapping[str, SilverRecord] | None = None,
    metrics_path: str | Path | None = None,
) -> list[StepMetrics]:
    """Epoch loop over shuffled mini-batches; deterministic under the seed.

    Conditioning inside ``samples`` is whatever the caller built them with —
    the transcript loader chains gold keyphrases, which is the intended
    training-time setup.
    """
    if not samples:
        raise ValueError("cannot train on an empty sample list")
    rng = random.Random(config.seed)
    optimizer = make_optimizer(model, config.lr)
    order = list(range(len(samples)))
    metrics: list[StepMetrics] = []
    step = 0
    for _ in range(config.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            metrics.append(train_step(model, batch, silver, config, optimizer, step))
            step += 1
    if metrics_path is not None:
        write_metrics(metrics_path, metrics)
    return metrics
