import math

import pytest
import torch

from partseg.data import PartMap
from partseg.encoder import (
    EncoderConfig, PartEncoder, channel_attention, classify, fuse, linear_attention,
    part_global_interaction, st_cross_attention, temporal_init,
)

D = torch.float64


def rand(*shape):
    return torch.randn(*shape, dtype=D)


def test_temporal_init_cases():
    assert temporal_init(rand(1, 4), rand(6, 4), rand(6)).shape == (6, 1)
    assert torch.count_nonzero(temporal_init(rand(9, 4), torch.zeros(6, 4, dtype=D), torch.zeros(6, dtype=D))) == 0
    S = rand(9, 4)
    assert torch.equal(temporal_init(S, torch.eye(4, dtype=D)), S.t())


def test_linear_attention_residual_only():
    F_ = rand(6, 10)
    out = linear_attention(F_, rand(6, 3), rand(6, 3), rand(6, 3), torch.zeros(3, 6, dtype=D))
    assert torch.equal(out, torch.relu(F_))


def test_linear_attention_scalar():
    f, wq, wk, wv, wt = 0.7, 0.3, -1.2, 2.0, -0.5
    t = lambda x: torch.tensor([[x]], dtype=D)  # noqa: E731
    out = linear_attention(t(f), t(wq), t(wk), t(wv), t(wt), normalize=False)
    sig = lambda x: 1 / (1 + math.exp(-x))  # noqa: E731
    expected = max(0.0, sig(wq * f) * sig(wk * f) * (wv * f) * wt + f)
    assert out.item() == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("normalize", [False, True])
def test_linear_attention_matches_quadratic_order(normalize):
    torch.manual_seed(1)
    C, Ct, T = 6, 3, 11
    F_, Wq, Wk, Wv, Wt = rand(C, T), rand(C, Ct), rand(C, Ct), rand(C, Ct), rand(Ct, C)
    X = F_.t()
    scores = torch.sigmoid(X @ Wq) @ torch.sigmoid(X @ Wk).t()  # [T, T] first
    if normalize:
        scores = scores / T
    expected = torch.relu((scores @ (X @ Wv) @ Wt).t() + F_)
    torch.testing.assert_close(linear_attention(F_, Wq, Wk, Wv, Wt, normalize), expected, rtol=1e-5, atol=1e-12)


def test_attention_rows_stochastic():
    for _ in range(10):
        A = channel_attention(rand(8, 13) * 5, rand(8, 13) * 5)
        torch.testing.assert_close(A.sum(-1), torch.ones(8, dtype=D), rtol=0, atol=1e-5)


def test_cross_attention_uniform_when_wf_zero():
    F_ = rand(5, 7)
    out = st_cross_attention(F_, rand(7, 3), torch.zeros(5, 3, dtype=D))
    expected = F_.mean(dim=0, keepdim=True).expand(5, 7) + F_
    torch.testing.assert_close(out, expected)


@pytest.mark.parametrize("T", [1, 33])
def test_cross_attention_shape(T):
    assert st_cross_attention(rand(5, T), rand(T, 3), rand(5, 3)).shape == (5, T)


def test_part_global_hand_case():
    F_i = torch.eye(2, dtype=D)
    F_g = torch.tensor([[1.0, 2.0], [0.0, 1.0]], dtype=D)
    W_g = torch.tensor([[1.0, 0.0], [0.0, 0.0]], dtype=D)
    out = part_global_interaction(F_i, F_g, W_g, normalize=False)
    # W_g F_g = [[1,2],[0,0]]; row softmax [[e/(e+e^2), e^2/(e+e^2)], [1/2, 1/2]] plus identity
    expected = torch.tensor([[1.268941, 0.731059], [0.5, 1.5]], dtype=D)
    torch.testing.assert_close(out, expected, rtol=0, atol=1e-6)
    assert torch.equal(F_g, torch.tensor([[1.0, 2.0], [0.0, 1.0]], dtype=D))


def test_part_global_zero_part():
    assert torch.count_nonzero(part_global_interaction(torch.zeros(4, 6, dtype=D), rand(4, 6), rand(4, 4))) == 0


def test_fuse_selector():
    part, body = rand(4, 9), rand(4, 9)
    W = torch.cat([torch.eye(4, dtype=D), torch.zeros(4, 4, dtype=D)], dim=1)
    assert torch.equal(fuse([part], body, W), part)


def test_fuse_permutation_and_shape():
    parts, body = [rand(4, 9) for _ in range(3)], rand(4, 9)
    W = rand(4, 16)
    blocks = list(W.split(4, dim=1))
    perm = [2, 0, 1]
    W_perm = torch.cat([blocks[i] for i in perm] + [blocks[3]], dim=1)
    torch.testing.assert_close(fuse([parts[i] for i in perm], body, W_perm), fuse(parts, body, W))
    assert fuse(parts, body, W).shape == (4, 9)
    with pytest.raises(ValueError):
        fuse([rand(4, 8)], body, rand(4, 8))


def test_classify():
    b = rand(3)
    out = classify(rand(4, 7), torch.zeros(3, 4, dtype=D), b)
    assert out.shape == (3, 7)
    assert torch.equal(out, b[:, None].expand(3, 7))


# --- full encoder


def test_encoder_deterministic(tiny_encoder_config):
    enc = PartEncoder(tiny_encoder_config).eval()
    x = torch.randn(12, 5, 2)
    a, b = enc(x), enc(x)
    assert torch.equal(a.logits, b.logits) and torch.equal(a.fused, b.fused)


def test_encoder_large_inputs_finite(tiny_encoder_config):
    enc = PartEncoder(tiny_encoder_config)
    for _ in range(5):
        out = enc(torch.randn(20, 5, 2) * 1000)
        assert torch.isfinite(out.logits).all()


def test_encoder_without_parts():
    cfg = EncoderConfig(num_joints=3, in_channels=2, num_classes=2, part_map=PartMap([], [(0, 1), (1, 2)]),
                        hidden=8, bottleneck=4, num_layers=3)
    out = PartEncoder(cfg)(torch.randn(6, 3, 2))
    assert out.logits.shape == (2, 6) and out.parts == []


@pytest.mark.parametrize("T", [1, 5, 64, 257])
def test_encoder_shapes(tiny_encoder_config, T):
    out = PartEncoder(tiny_encoder_config)(torch.randn(T, 5, 2))
    assert out.logits.shape == (3, T)
    assert out.fused.shape == out.body.shape == (8, T)
    assert all(p.shape == (8, T) for p in out.parts)


def test_encoder_per_layer_interaction(tiny_encoder_config):
    tiny_encoder_config.interaction_per_layer = True
    out = PartEncoder(tiny_encoder_config)(torch.randn(9, 5, 2))
    assert torch.isfinite(out.logits).all()


def test_part_independence_on_disconnected_parts():
    pm = PartMap([("a", [0, 1]), ("b", [2, 3])], [(0, 1), (2, 3)])
    cfg = EncoderConfig(num_joints=4, in_channels=2, num_classes=2, part_map=pm, hidden=8, bottleneck=4,
                        num_layers=3)
    enc = PartEncoder(cfg).double()
    x = rand(10, 4, 2)
    y = x.clone()
    y[:, 2:, :] = 0  # zero part b
    ox, oy = enc(x), enc(y)
    assert torch.equal(ox.parts_before_interaction[0], oy.parts_before_interaction[0])
    assert not torch.equal(ox.parts_before_interaction[1], oy.parts_before_interaction[1])
    assert not torch.equal(ox.fused, oy.fused)


def test_config_roundtrip_and_validation(tiny_encoder_config):
    assert EncoderConfig.from_json(tiny_encoder_config.to_json()) == tiny_encoder_config
    with pytest.raises(ValueError):
        EncoderConfig(5, 2, 3, tiny_encoder_config.part_map, num_layers=1)
    with pytest.raises(ValueError):
        EncoderConfig(5, 2, 3, tiny_encoder_config.part_map, hidden=4, bottleneck=8)
