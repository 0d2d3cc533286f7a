"""Loss-function contracts: scalar oracles, closed forms, gradients."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import gradcheck
from dscshadow.losses import (PROB_EPS, detection_loss, detection_loss_terms,
                              mse_loss, removal_loss, weighted_ce_accuracy,
                              weighted_ce_class)
from dscshadow.tensor import Graph, Tensor, ShapeError, backward

EPS = PROB_EPS


def ce_class_oracle(p, y):
    n = p.size
    n_pos = float(y.sum())
    w_pos = (n - n_pos) / n
    w_neg = n_pos / n
    total = 0.0
    for pi, yi in zip(p.flat, y.flat):
        pc = min(max(pi, EPS), 1.0 - EPS)
        total += -(w_pos * yi * math.log(pc) + w_neg * (1.0 - yi) * math.log(1.0 - pc))
    return total / n


def ce_accuracy_oracle(p, y):
    n = p.size
    n_pos = int(round(float(y.sum())))
    n_neg = n - n_pos
    tp = sum(1 for pi, yi in zip(p.flat, y.flat) if pi >= 0.5 and yi == 1)
    tn = sum(1 for pi, yi in zip(p.flat, y.flat) if pi < 0.5 and yi == 0)
    w_pos = 1.0 - (tp / n_pos if n_pos else 1.0)
    w_neg = 1.0 - (tn / n_neg if n_neg else 1.0)
    total = 0.0
    for pi, yi in zip(p.flat, y.flat):
        pc = min(max(pi, EPS), 1.0 - EPS)
        total += -(w_pos * yi * math.log(pc) + w_neg * (1.0 - yi) * math.log(1.0 - pc))
    return total / n


def random_probs(rng, shape):
    """Probabilities clear of both the 0.5 threshold and the clamp bounds."""
    base = rng.uniform(0.05, 0.45, size=shape)
    return base + rng.integers(0, 2, size=shape) * 0.5


class TestWeightedCeClass:
    def test_perfect_prediction_near_zero(self, rng):
        y = (rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float)
        loss = weighted_ce_class(Tensor(y), Tensor(y))
        assert 0.0 <= loss.item() <= 1e-6

    def test_balanced_uniform_half(self):
        y = np.zeros((1, 1, 2, 2))
        y[0, 0, 0, :] = 1.0  # two shadow, two non-shadow
        p = np.full((1, 1, 2, 2), 0.5)
        loss = weighted_ce_class(Tensor(p), Tensor(y))
        assert abs(loss.item() - 0.5 * math.log(2.0)) < 1e-12

    def test_all_shadow_degenerates_to_zero(self, rng):
        y = np.ones((1, 1, 3, 3))
        p = Tensor(random_probs(rng, (1, 1, 3, 3)))
        assert weighted_ce_class(p, Tensor(y)).item() == 0.0

    def test_scalar_oracle(self, rng):
        for _ in range(50):
            p = random_probs(rng, (8, 8))
            y = (rng.uniform(size=(8, 8)) > 0.5).astype(float)
            got = weighted_ce_class(Tensor(p), Tensor(y)).item()
            assert abs(got - ce_class_oracle(p, y)) < 1e-12

    def test_gradient(self, rng):
        p = Tensor(random_probs(rng, (1, 1, 4, 4)), requires_grad=True)
        y = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float))
        gradcheck(lambda: weighted_ce_class(p, y), [p])

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            weighted_ce_class(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2))))


class TestWeightedCeAccuracy:
    def test_perfectly_classified_is_zero(self, rng):
        y = (rng.uniform(size=(4, 4)) > 0.5).astype(float)
        p = np.where(y == 1.0, 0.9, 0.1)
        assert weighted_ce_accuracy(Tensor(p), Tensor(y)).item() == 0.0

    def test_all_shadow_missed(self):
        # shadows all misclassified, non-shadows all correct:
        # the non-shadow term vanishes, the shadow term carries weight 1
        y = np.array([[1.0, 1.0, 0.0, 0.0]])
        p = np.array([[0.2, 0.3, 0.1, 0.2]])
        got = weighted_ce_accuracy(Tensor(p), Tensor(y)).item()
        want = -(math.log(0.2) + math.log(0.3)) / 4.0
        assert abs(got - want) < 1e-12

    def test_scalar_oracle(self, rng):
        for _ in range(50):
            p = random_probs(rng, (8, 8))
            y = (rng.uniform(size=(8, 8)) > 0.5).astype(float)
            got = weighted_ce_accuracy(Tensor(p), Tensor(y)).item()
            assert abs(got - ce_accuracy_oracle(p, y)) < 1e-12

    def test_single_class_no_division_error(self, rng):
        y = np.zeros((3, 3))
        p = random_probs(rng, (3, 3))
        loss = weighted_ce_accuracy(Tensor(p), Tensor(y))
        assert np.isfinite(loss.item())

    def test_gradient(self, rng):
        p = Tensor(random_probs(rng, (1, 1, 4, 4)), requires_grad=True)
        y = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float))
        gradcheck(lambda: weighted_ce_accuracy(p, y), [p])


class TestMse:
    def test_zero_residual(self, rng):
        a = rng.normal(size=(1, 3, 2, 2))
        assert mse_loss(Tensor(a), Tensor(a.copy())).item() == 0.0

    def test_unit_offset_one_of_three_channels(self, rng):
        a = rng.normal(size=(1, 3, 4, 4))
        b = a.copy()
        b[0, 0] += 1.0
        assert abs(mse_loss(Tensor(b), Tensor(a)).item() - 1.0 / 3.0) < 1e-12

    def test_scalar_oracle(self, rng):
        a = rng.normal(size=(2, 3, 3, 3))
        b = rng.normal(size=(2, 3, 3, 3))
        want = sum((x - y) ** 2 for x, y in zip(a.flat, b.flat)) / a.size
        assert abs(mse_loss(Tensor(a), Tensor(b)).item() - want) < 1e-12

    def test_gradient(self, rng):
        a = Tensor(rng.normal(size=(1, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(1, 3, 3, 3)))
        gradcheck(lambda: mse_loss(a, b), [a])


def _prediction(rng, n_scales, shape=(1, 1, 4, 4)):
    return SimpleNamespace(
        per_scale=[Tensor(random_probs(rng, shape)) for _ in range(n_scales)],
        mlif=Tensor(random_probs(rng, shape)),
        fusion=Tensor(random_probs(rng, shape)),
    )


class TestDetectionLoss:
    def test_single_scale_sum(self, rng):
        pred = _prediction(rng, 1)
        y = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float))
        terms = detection_loss_terms(pred, y)
        total = detection_loss(pred, y)
        assert abs(total.item() - sum(t.item() for t in terms)) < 1e-12
        assert len(terms) == 3  # scale + mlif + fusion

    def test_fusion_weight_linearity(self, rng):
        pred = _prediction(rng, 2)
        y = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float))
        base = detection_loss(pred, y).item()
        doubled = detection_loss(pred, y, fusion_weight=2.0).item()
        fusion_term = detection_loss_terms(pred, y)[-1].item()
        assert abs(doubled - (base + fusion_term)) < 1e-12

    def test_term_by_term_oracle(self, rng):
        pred = _prediction(rng, 3)
        y_arr = (rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float)
        y = Tensor(y_arr)
        total = detection_loss(pred, y).item()
        want = 0.0
        for head in pred.per_scale + [pred.mlif, pred.fusion]:
            want += ce_class_oracle(head.data, y_arr) + ce_accuracy_oracle(head.data, y_arr)
        assert abs(total - want) < 1e-12

    def test_nonnegative(self, rng):
        for _ in range(20):
            pred = _prediction(rng, 2)
            y = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float))
            assert detection_loss(pred, y).item() >= 0.0


class TestRemovalLoss:
    def test_zero_when_all_heads_match(self, rng):
        target = Tensor(rng.normal(size=(1, 3, 4, 4)))
        pred = SimpleNamespace(
            per_scale=[Tensor(target.data.copy()) for _ in range(2)],
            mlif=Tensor(target.data.copy()),
            fusion=Tensor(target.data.copy()),
        )
        assert removal_loss(pred, target).item() == 0.0

    def test_weights_linear(self, rng):
        shape = (1, 3, 4, 4)
        pred = SimpleNamespace(
            per_scale=[Tensor(rng.normal(size=shape))],
            mlif=Tensor(rng.normal(size=shape)),
            fusion=Tensor(rng.normal(size=shape)),
        )
        target = Tensor(rng.normal(size=shape))
        base = removal_loss(pred, target).item()
        scaled = removal_loss(pred, target, scale_weights=[3.0]).item()
        head0 = mse_loss(pred.per_scale[0], target).item()
        assert abs(scaled - (base + 2.0 * head0)) < 1e-12
