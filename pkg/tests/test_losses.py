import math

import pytest
import torch

from slcgan.losses import (
    LossBreakdown,
    aug_consistency_loss,
    c_adv_loss,
    combine,
    d_hinge_loss,
    g_adv_loss,
    mi_loss,
)
from slcgan.models import ScorePair


def pair(u, s=None):
    unary = torch.tensor(u, dtype=torch.float64)
    joint = torch.tensor(s, dtype=torch.float64) if s is not None else None
    return ScorePair(unary, joint)


class TestDHinge:
    def test_all_margins_satisfied(self):
        loss = d_hinge_loss(pair([2.0, 2.0], [2.0, 2.0]), pair([-2.0, -2.0], [-2.0, -2.0]))
        assert float(loss) == 0.0

    def test_single_sample_mixed_margins(self):
        # 0 + 0.5 + 0 + 1.5
        loss = d_hinge_loss(pair([2.0], [0.5]), pair([-2.0], [0.5]))
        assert float(loss) == pytest.approx(2.0, abs=1e-12)

    def test_zero_scores_sit_at_unit_margin(self):
        loss = d_hinge_loss(pair([0.0], [0.0]), pair([0.0], [0.0]))
        assert float(loss) == pytest.approx(4.0, abs=1e-12)

    def test_unary_only_mode(self):
        loss = d_hinge_loss(pair([0.0]), pair([0.0]))
        assert float(loss) == pytest.approx(2.0, abs=1e-12)

    def test_empty_batch_errors(self):
        with pytest.raises(ValueError, match="empty"):
            d_hinge_loss(pair([], []), pair([], []))

    def test_nonnegative_and_zero_condition(self):
        rng = torch.Generator().manual_seed(0)
        for _ in range(50):
            r = torch.randn(6, generator=rng, dtype=torch.float64)
            s = torch.randn(6, generator=rng, dtype=torch.float64)
            f = torch.randn(6, generator=rng, dtype=torch.float64)
            t = torch.randn(6, generator=rng, dtype=torch.float64)
            value = float(d_hinge_loss(ScorePair(r, s), ScorePair(f, t)))
            assert value >= 0.0
            satisfied = (r >= 1).all() and (s >= 1).all() and (f <= -1).all() and (t <= -1).all()
            assert (value == 0.0) == bool(satisfied)


class TestGAdv:
    def test_zero_scores(self):
        assert float(g_adv_loss(pair([0.0], [0.0]))) == 0.0

    def test_direct_evaluation(self):
        assert float(g_adv_loss(pair([1.5], [0.5]))) == pytest.approx(-2.0, abs=1e-12)

    def test_antisymmetric_pair(self):
        assert float(g_adv_loss(pair([1.0, -1.0], [1.0, -1.0]))) == 0.0

    def test_empty_batch_errors(self):
        with pytest.raises(ValueError, match="empty"):
            g_adv_loss(pair([], []))


class TestMI:
    def test_perfect_recovery(self):
        probs = torch.eye(3, dtype=torch.float64)
        cond = torch.tensor([0, 1, 2])
        assert float(mi_loss(probs, cond)) == 0.0

    def test_uniform_probs(self):
        probs = torch.full((5, 4), 0.25, dtype=torch.float64)
        cond = torch.tensor([0, 1, 2, 3, 0])
        assert float(mi_loss(probs, cond)) == pytest.approx(math.log(4), abs=1e-12)

    def test_direct_evaluation(self):
        probs = torch.tensor([[0.5, 0.25, 0.25]], dtype=torch.float64)
        assert float(mi_loss(probs, torch.tensor([1]))) == pytest.approx(-math.log(0.25),
                                                                         abs=1e-12)

    def test_zero_probability_is_clamped(self):
        probs = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        value = float(mi_loss(probs, torch.tensor([1])))
        assert math.isfinite(value)
        assert value == pytest.approx(-math.log(1e-12), rel=1e-9)

    def test_zero_iff_onehot_at_cond(self):
        probs = torch.tensor([[0.999, 0.001]], dtype=torch.float64)
        assert float(mi_loss(probs, torch.tensor([0]))) > 0.0


class TestAugConsistency:
    def test_matching_onehots(self):
        p = torch.eye(3, dtype=torch.float64)
        assert float(aug_consistency_loss(p, p.clone())) == 0.0

    def test_uniform_target(self):
        p = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
        q = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
        assert float(aug_consistency_loss(p, q)) == pytest.approx(math.log(2), abs=1e-12)

    def test_onehot_target_uniform_prediction(self):
        p = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
        q = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        assert float(aug_consistency_loss(p, q)) == pytest.approx(math.log(2), abs=1e-12)

    def test_matches_scalar_loop(self):
        rng = torch.Generator().manual_seed(1)
        p = torch.softmax(torch.randn(7, 5, generator=rng, dtype=torch.float64), dim=1)
        q = torch.softmax(torch.randn(7, 5, generator=rng, dtype=torch.float64), dim=1)
        expected = 0.0
        for i in range(7):
            expected += sum(-float(q[i, c]) * math.log(float(p[i, c])) for c in range(5))
        expected /= 7
        assert float(aug_consistency_loss(p, q)) == pytest.approx(expected, abs=1e-10)

    def test_target_branch_carries_no_gradient(self):
        p = torch.softmax(torch.randn(3, 4, dtype=torch.float64, requires_grad=True), dim=1)
        q_leaf = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
        q = torch.softmax(q_leaf, dim=1)
        aug_consistency_loss(p, q).backward()
        assert q_leaf.grad is None


class TestCAdv:
    def test_zero(self):
        assert float(c_adv_loss(pair([9.0, 9.0], [0.0, 0.0]))) == 0.0

    def test_mean(self):
        assert float(c_adv_loss(pair([0.0, 0.0], [1.0, 3.0]))) == pytest.approx(2.0)

    def test_negation_linearity(self):
        scores = pair([0.0, 0.0], [0.7, -0.2])
        flipped = pair([0.0, 0.0], [-0.7, 0.2])
        assert float(c_adv_loss(scores)) == pytest.approx(-float(c_adv_loss(flipped)))

    def test_requires_joint(self):
        with pytest.raises(ValueError, match="joint"):
            c_adv_loss(pair([1.0]))


class TestCombine:
    def test_weighted_sum_example(self):
        breakdown = LossBreakdown(d_hinge=3.0, g_adv=-2.0, g_mi=1.386, c_adv=0.5, c_aug=0.25)
        objectives = combine(breakdown)
        assert objectives.g == pytest.approx(-0.614, abs=1e-12)
        assert objectives.d == pytest.approx(3.0)
        assert objectives.c == pytest.approx(0.75)

    def test_mi_weight_zero_disables_coupling(self):
        breakdown = LossBreakdown(g_adv=-2.0, g_mi=5.0, weights=(1.0, 0.0, 1.0))
        assert combine(breakdown).g == pytest.approx(-2.0)

    def test_default_weights_are_all_one(self):
        assert LossBreakdown().weights == (1.0, 1.0, 1.0)
