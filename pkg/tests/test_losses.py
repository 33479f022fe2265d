import math
import random

import pytest
import torch

from fgresq.errors import DegenerateSceneError, SceneKeyMismatchError
from fgresq.losses import (
    fidelity_loss_scene,
    preference_target,
    ranking_loss,
    scene_loss,
    total_loss,
)


class TestFidelityLossScene:
    def test_tied_prediction_and_tied_truth_is_exact_zero(self):
        # p = 0.5, g = 0.5: 1 - sqrt(0.25) - sqrt(0.25) = 0
        loss = fidelity_loss_scene(
            torch.zeros(2, dtype=torch.float64),
            torch.ones(2, dtype=torch.float64),
            eps=0.0,
        )
        assert float(loss) == pytest.approx(0.0, abs=1e-12)

    def test_tied_prediction_with_ordered_truth(self):
        # p = 0.5, g = 1: 1 - sqrt(0.5) - 0
        loss = fidelity_loss_scene(
            torch.zeros(2, dtype=torch.float64),
            torch.tensor([2.0, 1.0], dtype=torch.float64),
            eps=0.0,
        )
        assert float(loss) == pytest.approx(1.0 - math.sqrt(0.5), abs=1e-12)

    def test_confident_correct_order_is_near_zero(self):
        loss = fidelity_loss_scene(
            torch.tensor([100.0, -100.0]), torch.tensor([1.0, 0.0])
        )
        assert float(loss) == pytest.approx(0.0, abs=1e-4)

    def test_mean_over_all_index_pairs(self):
        # three samples, three pairs; all tied predictions, strict order
        loss = fidelity_loss_scene(
            torch.zeros(3, dtype=torch.float64),
            torch.tensor([3.0, 2.0, 1.0], dtype=torch.float64),
            eps=0.0,
        )
        assert float(loss) == pytest.approx(1.0 - math.sqrt(0.5), abs=1e-12)

    def test_depends_only_on_prediction_differences(self):
        gen = torch.Generator().manual_seed(2)
        y_pred = torch.rand(6, generator=gen, dtype=torch.float64)
        y_gt = torch.rand(6, generator=gen, dtype=torch.float64)
        base = fidelity_loss_scene(y_pred, y_gt)
        shifted = fidelity_loss_scene(y_pred + 17.5, y_gt)
        assert float(base) == pytest.approx(float(shifted), abs=1e-9)

    def test_depends_only_on_truth_order(self):
        gen = torch.Generator().manual_seed(3)
        y_pred = torch.rand(5, generator=gen, dtype=torch.float64)
        y_gt = torch.rand(5, generator=gen, dtype=torch.float64)
        assert torch.equal(
            fidelity_loss_scene(y_pred, y_gt),
            fidelity_loss_scene(y_pred, torch.exp(4.0 * y_gt)),
        )

    def test_permutation_invariance(self):
        gen = torch.Generator().manual_seed(4)
        y_pred = torch.rand(7, dtype=torch.float64, generator=gen)
        y_gt = torch.rand(7, dtype=torch.float64, generator=gen)
        perm = torch.randperm(7, generator=gen)
        assert float(fidelity_loss_scene(y_pred, y_gt)) == pytest.approx(
            float(fidelity_loss_scene(y_pred[perm], y_gt[perm])), abs=1e-12
        )

    def test_wrong_order_costs_more_than_right_order(self):
        y_gt = torch.tensor([1.0, 0.0])
        right = fidelity_loss_scene(torch.tensor([2.0, -2.0]), y_gt)
        wrong = fidelity_loss_scene(torch.tensor([-2.0, 2.0]), y_gt)
        assert float(wrong) > float(right)

    def test_epsilon_keeps_gradients_finite_at_saturation(self):
        y_pred = torch.tensor([-30.0, 30.0], requires_grad=True)
        loss = fidelity_loss_scene(y_pred, torch.tensor([1.0, 0.0]))
        loss.backward()
        assert torch.isfinite(y_pred.grad).all()

    def test_single_sample_rejected(self):
        with pytest.raises(DegenerateSceneError):
            fidelity_loss_scene(torch.tensor([1.0]), torch.tensor([1.0]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(DegenerateSceneError):
            fidelity_loss_scene(torch.zeros(3), torch.zeros(2))


class TestSceneLoss:
    def test_inverse_count_weighting_hand_example(self):
        # counts 10 and 40: weights 0.8 and 0.2
        out = scene_loss({"s1": 2.0, "s2": 6.0}, {"s1": 10, "s2": 40})
        assert out == pytest.approx(0.8 * 2.0 + 0.2 * 6.0, abs=1e-12)

    def test_weights_sum_to_one(self):
        rng = random.Random(6)
        for _ in range(50):
            scenes = {f"s{i}": rng.randint(2, 500) for i in range(rng.randint(1, 8))}
            constant = rng.uniform(-3, 3)
            out = scene_loss({s: constant for s in scenes}, scenes)
            assert out == pytest.approx(constant, abs=1e-12)

    def test_single_scene_degenerates_to_identity(self):
        assert scene_loss({"only": 3.25}, {"only": 17}) == pytest.approx(
            3.25, abs=1e-15
        )

    def test_equal_counts_give_plain_average(self):
        out = scene_loss({"a": 1.0, "b": 3.0}, {"a": 5, "b": 5})
        assert out == pytest.approx(2.0, abs=1e-12)

    def test_smaller_scene_weighs_more(self):
        # the small scene's loss dominates the mix
        heavy_small = scene_loss({"small": 10.0, "big": 0.0}, {"small": 2, "big": 200})
        heavy_big = scene_loss({"small": 0.0, "big": 10.0}, {"small": 2, "big": 200})
        assert heavy_small > heavy_big

    def test_tensor_losses_keep_gradients(self):
        a = torch.tensor(1.0, requires_grad=True)
        b = torch.tensor(2.0, requires_grad=True)
        out = scene_loss({"a": a, "b": b}, {"a": 4, "b": 12})
        out.backward()
        assert a.grad is not None and b.grad is not None
        assert float(a.grad) == pytest.approx(0.75, abs=1e-12)
        assert float(b.grad) == pytest.approx(0.25, abs=1e-12)

    def test_result_independent_of_dict_insertion_order(self):
        losses = {"b": 0.3, "a": 0.7, "c": 0.1}
        counts = {"b": 3, "a": 9, "c": 27}
        forward = scene_loss(losses, counts)
        backward = scene_loss(
            dict(reversed(losses.items())), dict(reversed(counts.items()))
        )
        assert forward == backward

    def test_key_mismatch_rejected(self):
        with pytest.raises(SceneKeyMismatchError):
            scene_loss({"a": 1.0}, {"b": 4})

    def test_empty_rejected(self):
        with pytest.raises(DegenerateSceneError):
            scene_loss({}, {})

    def test_undersized_scene_rejected(self):
        with pytest.raises(DegenerateSceneError):
            scene_loss({"a": 1.0, "b": 2.0}, {"a": 1, "b": 5})


class TestRankingLoss:
    def test_half_probability_against_sure_label_is_log_two(self):
        loss = ranking_loss(
            torch.tensor([0.5], dtype=torch.float64),
            torch.tensor([1.0], dtype=torch.float64),
        )
        assert float(loss) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_minimized_where_probability_matches_target(self):
        # cross-entropy against a (possibly soft) target has its minimum
        # at p = r; check against a dense grid search
        grid = [k / 200 for k in range(1, 200)]
        for r in (0.3, 0.5, 0.9):
            target = torch.tensor([r], dtype=torch.float64)
            losses = {
                p: float(ranking_loss(torch.tensor([p], dtype=torch.float64), target))
                for p in grid
            }
            best = min(losses, key=losses.get)
            assert best == pytest.approx(r, abs=0.01)

    def test_boundary_probabilities_stay_finite(self):
        for p, r in [(0.0, 1.0), (1.0, 0.0), (0.0, 0.0), (1.0, 1.0)]:
            loss = ranking_loss(torch.tensor([p]), torch.tensor([r]))
            assert torch.isfinite(loss)

    def test_confident_and_correct_is_near_zero(self):
        loss = ranking_loss(torch.tensor([1.0]), torch.tensor([1.0]))
        assert float(loss) < 1e-6

    def test_mean_over_batch(self):
        p = torch.tensor([0.5, 0.5], dtype=torch.float64)
        r = torch.tensor([1.0, 0.0], dtype=torch.float64)
        assert float(ranking_loss(p, r)) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_accepts_plain_sequences(self):
        assert float(ranking_loss([0.5], [1.0])) == pytest.approx(
            math.log(2.0), abs=1e-6
        )

    def test_gradient_flows(self):
        p = torch.tensor([0.3, 0.8], requires_grad=True)
        ranking_loss(p, torch.tensor([1.0, 0.0])).backward()
        assert torch.isfinite(p.grad).all()

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ranking_loss(torch.zeros(0), torch.zeros(0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ranking_loss(torch.zeros(2), torch.zeros(3))

    def test_target_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ranking_loss(torch.tensor([0.5]), torch.tensor([1.5]))
        with pytest.raises(ValueError):
            ranking_loss(torch.tensor([0.5]), torch.tensor([-0.1]))


class TestTotalLoss:
    def test_weighted_combination(self):
        assert total_loss(2.0, 3.0, 5.0, 1.0) == pytest.approx(13.0, abs=1e-12)

    def test_gradients_reach_both_components(self):
        scene = torch.tensor(1.0, requires_grad=True)
        rank = torch.tensor(2.0, requires_grad=True)
        total_loss(scene, rank, 5.0, 1.0).backward()
        assert float(scene.grad) == pytest.approx(5.0)
        assert float(rank.grad) == pytest.approx(1.0)


class TestPreferenceTarget:
    def test_label_mapping(self):
        assert preference_target("A") == 1.0
        assert preference_target("B") == 0.0
        assert preference_target("equal") == 0.5

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            preference_target("maybe")
        with pytest.raises(ValueError):
            preference_target("unlabeled")
