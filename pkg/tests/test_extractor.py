"""Label head, extraction loss, and span decoding."""

import math

import numpy as np
import pytest
import torch

from streamkp.corpus import Label, Span
from streamkp.extractor import (
    PROB_FLOOR,
    ExtractorHead,
    ScoredSpan,
    argmax_labels,
    decode_keyphrases,
    keyphrase_loss,
    predict_label_distributions,
)


def probs_from_rows(rows):
    return torch.tensor(rows, dtype=torch.float64)


# --- head and distributions -----------------------------------------------------

def test_zero_input_with_zero_bias_gives_uniform():
    head = ExtractorHead(4, seed=0)
    vecs = torch.zeros((2, 4), dtype=torch.float64)
    probs = predict_label_distributions(vecs, head)
    np.testing.assert_allclose(probs.detach().numpy(), np.full((2, 3), 1 / 3))


def test_head_is_two_stacked_affines_without_activation():
    head = ExtractorHead(3, seed=0)
    with torch.no_grad():
        head.hidden.weight.copy_(torch.eye(3, dtype=torch.float64) * 2.0)
        head.hidden.bias.copy_(torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64))
        head.out.weight.copy_(torch.eye(3, dtype=torch.float64))
        head.out.bias.zero_()
    # x = (-1, 0, 0): hidden = 2x + b1 = (-1, 0, 0); no ReLU -> logits keep the -1
    x = torch.tensor([[-1.0, 0.0, 0.0]], dtype=torch.float64)
    logits = head(x)
    np.testing.assert_allclose(logits.detach().numpy(), [[-1.0, 0.0, 0.0]])


def test_known_logits_give_known_distribution():
    head = ExtractorHead(3, seed=0)
    with torch.no_grad():
        head.hidden.weight.copy_(torch.eye(3, dtype=torch.float64))
        head.hidden.bias.zero_()
        head.out.weight.copy_(torch.eye(3, dtype=torch.float64))
        head.out.bias.zero_()
    x = torch.tensor([[0.0, math.log(2.0), 0.0]], dtype=torch.float64)
    probs = predict_label_distributions(x, head)
    np.testing.assert_allclose(probs.detach().numpy(), [[0.25, 0.5, 0.25]], atol=1e-12)


def test_distributions_shift_invariant():
    head = ExtractorHead(3, seed=0)
    with torch.no_grad():
        head.hidden.weight.copy_(torch.eye(3, dtype=torch.float64))
        head.hidden.bias.zero_()
        head.out.weight.copy_(torch.eye(3, dtype=torch.float64))
        head.out.bias.zero_()
    x = torch.tensor([[0.3, -1.2, 0.9]], dtype=torch.float64)
    p1 = predict_label_distributions(x, head)
    p2 = predict_label_distributions(x + 7.0, head)  # shifts every logit by c
    np.testing.assert_allclose(p1.detach().numpy(), p2.detach().numpy(), atol=1e-12)


def test_rows_sum_to_one_fuzz():
    head = ExtractorHead(8, seed=1)
    vecs = torch.randn((17, 8), generator=torch.Generator().manual_seed(4)).double()
    probs = predict_label_distributions(vecs, head)
    np.testing.assert_allclose(
        probs.detach().sum(dim=-1).numpy(), np.ones(17), atol=1e-12
    )


def test_head_seed_determinism():
    a, b = ExtractorHead(6, seed=9), ExtractorHead(6, seed=9)
    c = ExtractorHead(6, seed=10)
    assert torch.equal(a.hidden.weight, b.hidden.weight)
    assert torch.equal(a.out.weight, b.out.weight)
    assert not torch.equal(a.hidden.weight, c.hidden.weight)
    assert torch.equal(a.hidden.bias, torch.zeros_like(a.hidden.bias))


# --- loss --------------------------------------------------------------------------

def test_loss_uniform_predictions():
    probs = probs_from_rows([[1 / 3] * 3, [1 / 3] * 3])
    loss = keyphrase_loss(probs, [Label.O, Label.B])
    assert float(loss) == pytest.approx(2 * math.log(3), rel=1e-12)


def test_loss_perfect_prediction_is_zero():
    probs = probs_from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert float(keyphrase_loss(probs, [Label.O, Label.B])) == 0.0


def test_loss_zero_probability_is_clamped():
    probs = probs_from_rows([[0.0, 1.0, 0.0]])
    loss = keyphrase_loss(probs, [Label.O])
    assert float(loss) == pytest.approx(-math.log(PROB_FLOOR), rel=1e-12)


def test_loss_is_a_sum_not_a_mean():
    row = [0.5, 0.25, 0.25]
    one = keyphrase_loss(probs_from_rows([row]), [Label.O])
    four = keyphrase_loss(probs_from_rows([row] * 4), [Label.O] * 4)
    assert float(four) == pytest.approx(4 * float(one), rel=1e-12)


def test_loss_accepts_int_labels():
    probs = probs_from_rows([[0.2, 0.5, 0.3]])
    assert float(keyphrase_loss(probs, [1])) == pytest.approx(-math.log(0.5))


def test_loss_length_mismatch_rejected():
    with pytest.raises(ValueError):
        keyphrase_loss(probs_from_rows([[1.0, 0.0, 0.0]]), [Label.O, Label.O])


def test_loss_gradient_flows():
    head = ExtractorHead(4, seed=0)
    vecs = torch.randn((3, 4), generator=torch.Generator().manual_seed(0)).double()
    probs = predict_label_distributions(vecs, head)
    loss = keyphrase_loss(probs, [Label.B, Label.I, Label.O])
    loss.backward()
    assert head.hidden.weight.grad is not None
    assert float(head.hidden.weight.grad.abs().sum()) > 0


# --- decoding ----------------------------------------------------------------------

def test_decode_ranks_by_begin_probability():
    probs = probs_from_rows(
        [
            [0.1, 0.8, 0.1],  # B, span (0,2), score .8
            [0.2, 0.1, 0.7],  # I
            [0.9, 0.05, 0.05],  # O
            [0.05, 0.9, 0.05],  # B, span (3,4), score .9
        ]
    )
    decoded = decode_keyphrases(probs)
    assert decoded == [
        ScoredSpan(Span(3, 4), 0.9),
        ScoredSpan(Span(0, 2), 0.8),
    ]


def test_decode_tie_prefers_earlier_start():
    probs = probs_from_rows(
        [
            [0.9, 0.05, 0.05],  # O
            [0.1, 0.6, 0.3],    # B, span (1,2), score .6
            [0.8, 0.1, 0.1],    # O
            [0.2, 0.6, 0.2],    # B, span (3,4), score .6
        ]
    )
    decoded = decode_keyphrases(probs)
    assert [sp.span for sp in decoded] == [Span(1, 2), Span(3, 4)]


def test_decode_orphan_i_span_scored_by_its_first_word():
    probs = probs_from_rows(
        [
            [0.2, 0.3, 0.5],  # I with no B before it -> span (0,1)
            [0.9, 0.05, 0.05],
        ]
    )
    decoded = decode_keyphrases(probs)
    assert decoded == [ScoredSpan(Span(0, 1), 0.3)]  # scored by P(B) of word 0


def test_decode_no_spans():
    probs = probs_from_rows([[0.9, 0.05, 0.05]] * 3)
    assert decode_keyphrases(probs) == []


def test_argmax_labels():
    probs = probs_from_rows(
        [[0.6, 0.3, 0.1], [0.1, 0.7, 0.2], [0.2, 0.2, 0.6]]
    )
    assert argmax_labels(probs) == [Label.O, Label.B, Label.I]
