"""Oracle and property tests for the training objectives."""

import math

import numpy as np
import pytest

from wavemorph import losses as wl
from wavemorph import tensor as wt
from wavemorph.errors import ContractError, DimensionError, DomainError
from wavemorph.tensor import Tape, Tensor, backward

from test_tensor import assert_grads_close, numeric_grad


class TestMaskedL1:
    def test_hand_value(self):
        pred = Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
        target = Tensor(np.ones(4))
        out = wl.masked_l1(pred, target, np.array([1.0, 1.0, 0.0, 1.0]))
        assert abs(out.item() - 4.0 / 3.0) < 1e-15

    def test_column_mask_broadcasts_over_rows(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 6))
        b = rng.normal(size=(3, 6))
        mask = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
        out = wl.masked_l1(Tensor(a), Tensor(b), mask)
        keep = mask.astype(bool)
        expect = np.abs(a - b)[:, keep].mean()
        assert abs(out.item() - expect) < 1e-12

    def test_masked_positions_are_ignored(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(4, 30))
            mask = (rng.random(n) < 0.6).astype(float)
            if mask.sum() == 0:
                mask[0] = 1.0
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            base = wl.masked_l1(Tensor(a), Tensor(b), mask).item()
            a2 = a + (1.0 - mask) * rng.normal(size=n) * 100.0
            b2 = b + (1.0 - mask) * rng.normal(size=n) * 100.0
            again = wl.masked_l1(Tensor(a2), Tensor(b2), mask).item()
            assert abs(base - again) < 1e-12

    def test_empty_mask_rejected(self):
        with pytest.raises(DomainError):
            wl.masked_l1(Tensor(np.ones(3)), Tensor(np.zeros(3)), np.zeros(3))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            wl.masked_l1(Tensor(np.ones(3)), Tensor(np.zeros(4)), np.ones(3))
        with pytest.raises(DimensionError):
            wl.masked_l1(Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 3))), np.ones(2))

    def test_gradient(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=8)
        b = a + np.where(rng.random(8) < 0.5, 1.0, -1.0) * (0.5 + rng.random(8))
        mask = np.array([1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])
        pred = Tensor(a, requires_grad=True)
        with Tape():
            out = wl.masked_l1(pred, Tensor(b), mask)
            backward(out)
        numeric = numeric_grad(lambda arr: wl.masked_l1(Tensor(arr), Tensor(b), mask).item(), a)
        assert_grads_close(pred.grad, numeric)


class TestClassificationLoss:
    def test_uniform_logits_give_ln2(self):
        out = wl.loss_cl([Tensor(np.zeros(2))], [0])
        assert abs(out.item() - math.log(2.0)) < 1e-15

    def test_log_prob_logits_recover_ce(self):
        logits = Tensor(np.log(np.array([0.8, 0.2])))
        out = wl.loss_cl([logits], [0])
        assert abs(out.item() + math.log(0.8)) < 1e-12

    def test_mean_over_blocks(self):
        l1 = Tensor(np.zeros(2))
        l2 = Tensor(np.log(np.array([0.25, 0.75])))
        out = wl.loss_cl([l1, l2], [1, 1])
        expect = 0.5 * (math.log(2.0) - math.log(0.75))
        assert abs(out.item() - expect) < 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=4)
        a = wl.loss_cl([Tensor(logits)], [2]).item()
        b = wl.loss_cl([Tensor(logits + 123.0)], [2]).item()
        assert abs(a - b) < 1e-9

    def test_label_and_count_validation(self):
        with pytest.raises(ContractError):
            wl.loss_cl([], [])
        with pytest.raises(ContractError):
            wl.loss_cl([Tensor(np.zeros(2))], [0, 1])
        with pytest.raises(DomainError):
            wl.loss_cl([Tensor(np.zeros(2))], [2])

    def test_gradient(self):
        rng = np.random.default_rng(4)
        raw = rng.normal(size=3)
        t = Tensor(raw, requires_grad=True)
        with Tape():
            out = wl.loss_cl([t], [1])
            backward(out)
        numeric = numeric_grad(lambda arr: wl.loss_cl([Tensor(arr)], [1]).item(), raw)
        assert_grads_close(t.grad, numeric)


class TestAdversarialLoss:
    def test_half_scores_give_two_ln2(self):
        zero = Tensor(np.array(0.0))
        out = wl.adv_d_loss([zero, zero], [zero])
        assert abs(out.item() - 2.0 * math.log(2.0)) < 1e-15
        assert abs(wl.adv_g_loss(zero).item() - math.log(2.0)) < 1e-15

    def test_hand_probabilities(self):
        # D(real) = 0.8 and D(fake) = 0.3 give -(ln 0.8 + ln 0.7)
        real = Tensor(np.array(math.log(0.8 / 0.2)))
        fake = Tensor(np.array(math.log(0.3 / 0.7)))
        out = wl.adv_d_loss(real, fake)
        assert abs(out.item() + math.log(0.8) + math.log(0.7)) < 1e-12
        g = wl.adv_g_loss(fake)
        assert abs(g.item() + math.log(0.3)) < 1e-12

    def test_extreme_logits_stay_finite(self):
        big = Tensor(np.array(1000.0))
        small = Tensor(np.array(-1000.0))
        d = wl.adv_d_loss(small, big).item()
        assert np.isfinite(d) and abs(d - 2000.0) < 1e-6
        g = wl.adv_g_loss(small).item()
        assert np.isfinite(g) and abs(g - 1000.0) < 1e-6
        assert wl.adv_g_loss(big).item() < 1e-300

    def test_means_over_blocks(self):
        logits = [Tensor(np.array(v)) for v in (0.0, 2.0)]
        expect = 0.5 * (math.log(2.0) + math.log(1.0 + math.exp(-2.0)))
        assert abs(wl.adv_g_loss(logits).item() - expect) < 1e-12

    def test_validation(self):
        with pytest.raises(ContractError):
            wl.adv_g_loss([])
        with pytest.raises(DimensionError):
            wl.adv_g_loss(Tensor(np.zeros(2)))

    def test_gradients(self):
        rng = np.random.default_rng(5)
        rv, fv = rng.normal(size=2)
        r = Tensor(np.array(rv), requires_grad=True)
        f = Tensor(np.array(fv), requires_grad=True)
        with Tape():
            out = wl.adv_d_loss(r, f)
            backward(out)
        # d/dz softplus(-z) = -sigmoid(-z); d/dz softplus(z) = sigmoid(z)
        assert abs(r.grad + 1.0 / (1.0 + math.exp(rv))) < 1e-12
        assert abs(f.grad - 1.0 / (1.0 + math.exp(-fv))) < 1e-12


class TestDualLoss:
    def test_and_mask_invariance(self):
        rng = np.random.default_rng(6)
        s, t = 4, 12
        mask_a = (rng.random(t) < 0.7).astype(float)
        mask_b = (rng.random(t) < 0.7).astype(float)
        joint = mask_a * mask_b
        if joint.sum() == 0:
            joint[0] = 1.0
        a = rng.normal(size=(s, t))
        b = rng.normal(size=(s, t))
        base = wl.loss_dual(Tensor(a), Tensor(b), joint).item()
        spoil = (1.0 - joint) * 50.0
        again = wl.loss_dual(Tensor(a + spoil), Tensor(b - spoil), joint).item()
        assert abs(base - again) < 1e-12

    def test_matches_masked_mean(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.zeros((2, 2))
        out = wl.loss_dual(Tensor(a), Tensor(b), np.array([1.0, 1.0]))
        assert abs(out.item() - 2.5) < 1e-15


class TestComposition:
    def test_gan_example(self):
        w = wl.LossWeights(lambda_=5.0, gamma=15.0)
        one = Tensor(np.array(1.0))
        two = Tensor(np.array(2.0))
        three = Tensor(np.array(3.0))
        out = wl.compose_gan(w, one, two, three)
        assert abs(out.item() - 52.0) < 1e-15

    def test_pretrain_configs(self):
        a = wl.config_A()
        b = wl.config_B()
        assert (a.alpha, a.beta) == (1.0, 0.0)
        assert (b.alpha, b.beta) == (10.0, 1.0)
        assert (a.lambda_, a.gamma) == (5.0, 15.0)
        rec = Tensor(np.array(0.7))
        cl = Tensor(np.array(0.3))
        assert abs(wl.compose_pretrain(a, rec).item() - 0.7) < 1e-15
        assert abs(wl.compose_pretrain(b, rec, cl).item() - 7.3) < 1e-15

    def test_beta_requires_classification_term(self):
        with pytest.raises(ContractError):
            wl.compose_pretrain(wl.config_B(), Tensor(np.array(1.0)))

    def test_gradient_flows_through_composition(self):
        rec = Tensor(np.array(0.5), requires_grad=True)
        cl = Tensor(np.array(0.25), requires_grad=True)
        with Tape():
            out = wl.compose_pretrain(wl.config_B(), rec, cl)
            backward(out)
        assert rec.grad == 10.0
        assert cl.grad == 1.0
