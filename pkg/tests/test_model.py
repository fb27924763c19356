import math

import numpy as np
import pytest
import torch

from divmix_ecg.errors import ConfigError, ShapeError
from divmix_ecg.model import (TABLE1_STAGES, ModelConfig, Prediction, Stage, build, predict,
                              predict_proba)
from divmix_ecg.signal_prep import LEAD_COMBOS, WIDE_DIM


def shape_oracle(width, stages):
    """Width after each stage under same padding: ceil division by each stride."""
    out = []
    for st in stages:
        width = math.ceil(width / st.stride)
        out.append(width)
    return out


def test_table_rows():
    rows = [(s.op, s.kernel, s.stride, s.out_channels, s.num_layers, s.expand) for s in TABLE1_STAGES]
    assert rows == [
        ("conv", 7, 2, 32, 1, 1),
        ("fmbconv", 5, 2, 32, 2, 2),
        ("fmbconv", 5, 2, 64, 1, 1),
        ("fmbconv", 7, 2, 128, 2, 2),
        ("fmbconv", 7, 2, 128, 1, 1),
        ("fmbconv", 7, 2, 256, 2, 2),
        ("fmbconv", 7, 2, 256, 2, 2),
        ("conv", 1, 1, 512, 1, 1),
    ]


def test_shape_oracle_value():
    assert shape_oracle(7500, TABLE1_STAGES)[-1] == 59
    assert shape_oracle(7500, TABLE1_STAGES)[6] == math.ceil(7500 / 2 ** 7)


def test_full_size_shapes_two_leads():
    net = build(ModelConfig(), 2, seed=0)
    shapes = net.stage_shapes(torch.zeros(1, 2, 7500), torch.zeros(1, WIDE_DIM))
    assert [s[1] for s in shapes] == [s.out_channels for s in TABLE1_STAGES]
    assert [s[2] for s in shapes] == shape_oracle(7500, TABLE1_STAGES)
    assert shapes[-1] == (1, 512, 59)


def test_later_layers_use_stride_one():
    net = build(ModelConfig(), 2, seed=0)
    strides = [b.conv.stride for b in net.blocks]
    assert strides == [2, 2, 1, 2, 2, 1, 2, 2, 1, 2, 1, 1]


def test_first_conv_matches_lead_count():
    for combo in LEAD_COMBOS.values():
        net = build(ModelConfig(n_labels=4, width_mult=0.25), combo.n_channels, seed=0)
        assert net.blocks[0].conv.weight.shape[1] == combo.n_channels


def test_wide_pathway_layout():
    net = build(ModelConfig(), 12, seed=0)
    linears = [m for m in net.wide if isinstance(m, torch.nn.Linear)]
    norms = [m for m in net.wide if isinstance(m, torch.nn.BatchNorm1d)]
    assert len(linears) == 4 and len(norms) == 4
    assert linears[0].in_features == WIDE_DIM and linears[-1].out_features == 32
    fmb = [b for b in net.blocks if hasattr(b, "project")]
    assert len(fmb) == 10
    for b in fmb:
        assert b.project.weight.shape[1] == b.hidden + 32
    head = [m for m in net.head if isinstance(m, torch.nn.Linear)]
    assert [(h.in_features, h.out_features) for h in head] == [(512, 256), (256, 24)]


def test_output_length_24():
    net = build(ModelConfig(width_mult=0.25), 3, seed=1).eval()
    out = net(torch.randn(2, 3, 1500), torch.randn(2, WIDE_DIM))
    assert out.shape == (2, 24) and torch.isfinite(out).all()


def test_zero_head_gives_bias():
    net = build(ModelConfig(n_labels=5, width_mult=0.25), 2, seed=0).eval()
    last = net.head[-1]
    with torch.no_grad():
        last.weight.zero_()
        last.bias.copy_(torch.arange(5.0))
    out = net(torch.zeros(1, 2, 1000), torch.zeros(1, WIDE_DIM))
    torch.testing.assert_close(out, torch.arange(5.0)[None])


def test_identical_rows_identical_logits():
    net = build(ModelConfig(n_labels=5, width_mult=0.25), 2, seed=0).eval()
    x = torch.randn(1, 2, 800).repeat(2, 1, 1)
    w = torch.randn(1, WIDE_DIM).repeat(2, 1)
    out = net(x, w)
    assert torch.equal(out[0], out[1])


def test_wide_independence_when_zeroed():
    torch.manual_seed(0)
    net = build(ModelConfig(n_labels=5, width_mult=0.25), 2, seed=0)
    net(torch.randn(4, 2, 600), torch.randn(4, WIDE_DIM))  # populate BN statistics
    net.eval()
    with torch.no_grad():
        for m in net.wide:
            if isinstance(m, torch.nn.Linear):
                m.weight.zero_()
    x = torch.randn(3, 2, 600)
    a = net(x, torch.randn(3, WIDE_DIM))
    b = net(x, 5 * torch.randn(3, WIDE_DIM))
    assert torch.equal(a, b)


def test_shape_errors():
    net = build(ModelConfig(n_labels=3, width_mult=0.25), 2, seed=0)
    with pytest.raises(ShapeError):
        net(torch.zeros(1, 3, 100), torch.zeros(1, WIDE_DIM))
    with pytest.raises(ShapeError):
        net(torch.zeros(1, 2, 100), torch.zeros(1, WIDE_DIM + 1))
    with pytest.raises(ConfigError):
        ModelConfig(stages=(Stage("pool", 3, 1, 8, 1),))


class TestPredict:
    def test_threshold(self):
        p = Prediction(np.array([0.31, 0.29, 0.5, 0.3]))
        assert p.decisions.tolist() == [True, False, True, True]

    def test_zero_logits(self):
        net = build(ModelConfig(n_labels=4, width_mult=0.25), 2, seed=0)
        with torch.no_grad():
            net.head[-1].weight.zero_()
            net.head[-1].bias.zero_()
        pred = predict(net, np.zeros((1, 2, 500)), np.zeros((1, WIDE_DIM)))
        np.testing.assert_allclose(pred.probabilities, 0.5)
        assert pred.decisions.all()

    def test_probabilities_in_unit_interval(self, rng):
        net = build(ModelConfig(n_labels=6, width_mult=0.25), 2, seed=3)
        probs = predict_proba(net, rng.standard_normal((5, 2, 700)), rng.standard_normal((5, WIDE_DIM)))
        assert np.all((probs > 0) & (probs < 1))

    def test_monotone_in_logits(self):
        net = build(ModelConfig(n_labels=1, width_mult=0.25), 2, seed=0)
        x, w = np.zeros((1, 2, 500)), np.zeros((1, WIDE_DIM))
        probs = []
        for b in np.linspace(-5, 5, 11):
            with torch.no_grad():
                net.head[-1].bias.fill_(float(b))
            probs.append(predict_proba(net, x, w)[0, 0])
        assert np.all(np.diff(probs) > 0)
