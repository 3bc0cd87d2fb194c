import math

import numpy as np
import pytest
import torch

from oracles import ce_loop
from partseg.errors import NumericError
from partseg.losses import LossWeights, boundary_loss, ce_loss, gs_tmse, positive_weight, total_loss

D = torch.float64


def test_ce_uniform():
    assert ce_loss(torch.zeros(4, 10, dtype=D), torch.randint(0, 4, (10,))).item() == pytest.approx(math.log(4), abs=1e-6)


def test_ce_large_margin():
    labels = torch.randint(0, 3, (12,))
    logits = torch.zeros(3, 12, dtype=D)
    logits[labels, torch.arange(12)] = 100.0
    assert ce_loss(logits, labels).item() < 1e-6


def test_ce_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        logits = rng.standard_normal((5, 17)) * 3
        labels = rng.integers(0, 5, 17)
        got = ce_loss(torch.as_tensor(logits), torch.as_tensor(labels)).item()
        assert got == pytest.approx(ce_loop(logits, labels), abs=1e-9)


def test_gs_tmse_constant_logits():
    logits = torch.randn(3, 1, dtype=D).expand(3, 20)
    assert gs_tmse(logits, torch.randn(4, 20, dtype=D)).item() == 0.0


def test_gs_tmse_identical_features_is_plain_tmse():
    logits = torch.randn(3, 9, dtype=D)
    logp = torch.log_softmax(logits, 0)
    plain = ((logp[:, 1:] - logp[:, :-1]).abs().clamp(max=4) ** 2).mean()
    got = gs_tmse(logits, torch.ones(2, 9, dtype=D))
    assert got.item() == pytest.approx(plain.item(), rel=1e-12)


def test_gs_tmse_two_frame_hand_case():
    logits = torch.log(torch.tensor([[0.8, 0.2], [0.2, 0.8]], dtype=D))
    x = torch.tensor([[0.0, 1.0]], dtype=D)  # feature difference norm 1
    # each class moves by ln 4; weight exp(-1/2); normalised by (T-1)K = 2
    expected = math.log(4) ** 2 * math.exp(-0.5)
    assert gs_tmse(logits, x, sigma=1.0).item() == pytest.approx(expected, abs=1e-12)


def test_gs_tmse_clamp():
    logits = torch.tensor([[50.0, -50.0], [-50.0, 50.0]], dtype=D)
    got = gs_tmse(logits, torch.zeros(1, 2, dtype=D), clamp=4.0)
    assert got.item() == pytest.approx(16.0)


def test_gs_tmse_short_sequence():
    assert gs_tmse(torch.randn(3, 1), torch.randn(2, 1)).item() == 0.0


def test_gs_tmse_shift_invariance():
    logits, x = torch.randn(4, 15, dtype=D), torch.randn(3, 15, dtype=D)
    shift = torch.randn(1, 15, dtype=D) * 10
    assert gs_tmse(logits + shift, x).item() == pytest.approx(gs_tmse(logits, x).item(), abs=1e-10)


def test_boundary_half_is_ln2():
    assert boundary_loss([torch.full((6,), 0.5, dtype=D)], torch.zeros(6, dtype=D)).item() == pytest.approx(
        math.log(2), abs=1e-6)


def test_boundary_perfect():
    B = torch.tensor([1.0, 0, 0, 1], dtype=D)
    assert boundary_loss([B.clone(), B.clone()], B, 5.0).item() <= 1e-6


def test_boundary_weighted_hand_case():
    P = torch.tensor([0.9, 0.2, 0.3, 0.1], dtype=D)
    B = torch.tensor([1.0, 0, 0, 0], dtype=D)
    expected = -(3 * math.log(0.9) + math.log(0.8) + math.log(0.7) + math.log(0.9)) / 4
    assert boundary_loss([P], B, 3.0).item() == pytest.approx(expected, abs=1e-12)


def test_boundary_averages_stages_and_rejects_nan():
    B = torch.zeros(4, dtype=D)
    a, b = torch.full((4,), 0.5, dtype=D), torch.full((4,), 0.1, dtype=D)
    expected = (boundary_loss([a], B) + boundary_loss([b], B)) / 2
    assert boundary_loss([a, b], B).item() == pytest.approx(expected.item())
    with pytest.raises(NumericError):
        boundary_loss([torch.tensor([0.5, float("nan")])], torch.zeros(2))


def test_positive_weight():
    assert positive_weight([torch.tensor([1.0, 0, 0, 0])]) == 3.0
    assert positive_weight([torch.tensor([1.0, 1, 1, 0])]) == 1.0
    assert positive_weight([torch.zeros(5)]) == 1.0


def test_total_loss():
    c = {k: torch.tensor(v, dtype=D) for k, v in
         {"ce": 1.5, "gs_tmse": 0.4, "boundary": 2.0, "align": 0.7}.items()}
    loss, br = total_loss(c, LossWeights())
    assert loss.item() == pytest.approx(1.5 + 1.0 * 0.4 + 0.1 * 2.0 + 1.0 * 0.7, abs=1e-12)
    assert br["total"] == pytest.approx(br["ce"] + br["gs_tmse"] + 0.1 * br["boundary"] + br["align"], abs=1e-9)
    assert br["cls"] == pytest.approx(2.1)
    loss, _ = total_loss(c, LossWeights(alpha=0, beta=0, gamma=0))
    assert loss.item() == 1.5


def test_total_loss_linear():
    w = LossWeights(alpha=0.3, beta=0.7, gamma=2.0)
    c = {"ce": torch.tensor(1.0), "gs_tmse": torch.tensor(2.0), "boundary": torch.tensor(3.0),
         "align": torch.tensor(4.0)}
    base, _ = total_loss(c, w)
    for k, coef in (("ce", 1.0), ("gs_tmse", 0.3), ("boundary", 0.7), ("align", 2.0)):
        bumped = dict(c, **{k: c[k] + 1.0})
        assert total_loss(bumped, w)[0].item() == pytest.approx(base.item() + coef)


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha=-1)
    with pytest.raises(ValueError):
        LossWeights(similarity_source="hidden")
