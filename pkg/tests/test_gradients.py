# -*- coding: utf-8 -*-

"""
Testes dos gradientes adjuntos contra diferenças finitas centrais.
"""

import numpy as np
import pytest

from analyzers.gradients import aggregate_gradients, dataset_loss, loss_and_grads
from utils.errors import ValidationError
from utils.grid_field import build_linear_array_modeset

from conftest import make_random_model

BATCH = [0, 1, 2]


def batch_loss(model, modeset, batch=BATCH):
    trial = model.copy()
    trial.set_trainable()
    return loss_and_grads(trial, modeset, batch).loss


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    return np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)


class TestPhaseGradients:

    @pytest.mark.parametrize("mask", [1, 2, 3])
    def test_matches_finite_differences(self, random_model, modeset, mask):
        random_model.set_trainable(masks=[1, 2, 3])
        bundle = loss_and_grads(random_model, modeset, BATCH)

        rng = np.random.default_rng(mask)
        pixels = list(zip(rng.integers(16, 48, size=50), rng.integers(16, 48, size=50)))
        h = 1e-3
        numeric = []
        for (y, x) in pixels:
            plus = random_model.copy()
            plus.masks[mask - 1][y, x] += h
            minus = random_model.copy()
            minus.masks[mask - 1][y, x] -= h
            numeric.append((batch_loss(plus, modeset) - batch_loss(minus, modeset)) / (2 * h))
        analytic = [bundle.phase_grads[mask][y, x] for (y, x) in pixels]
        assert relative_error(analytic, numeric) < 1e-5

    def test_only_trainable_masks_get_gradients(self, random_model, modeset):
        random_model.set_trainable(masks=[2])
        bundle = loss_and_grads(random_model, modeset, [1])
        assert set(bundle.phase_grads) == {2}
        assert bundle.distance_grads == {}

    def test_global_phase_direction_has_zero_gradient(self, random_model, modeset):
        # Uma fase constante somada a uma máscara não altera |o|²
        random_model.set_trainable(masks=[1, 2, 3])
        bundle = loss_and_grads(random_model, modeset, BATCH)
        for grad in bundle.phase_grads.values():
            assert abs(grad.sum()) < 1e-10


class TestDistanceGradients:

    @pytest.mark.parametrize("k", [0, 1, 3])
    def test_matches_finite_differences(self, random_model, modeset, k):
        random_model.set_trainable(distances=[k])
        bundle = loss_and_grads(random_model, modeset, BATCH)
        h = 1e-7
        plus = random_model.copy()
        plus.set_distance(k, random_model.distances[k] + h)
        minus = random_model.copy()
        minus.set_distance(k, random_model.distances[k] - h)
        numeric = (batch_loss(plus, modeset) - batch_loss(minus, modeset)) / (2 * h)
        assert bundle.distance_grads[k] == pytest.approx(numeric, rel=1e-4)

    def test_masks_and_distances_together(self, random_model, modeset):
        random_model.set_trainable(masks=[3], distances=[1, 2])
        both = loss_and_grads(random_model, modeset, BATCH)
        random_model.set_trainable(distances=[1, 2])
        only = loss_and_grads(random_model, modeset, BATCH)
        assert set(both.distance_grads) == {1, 2}
        for k in (1, 2):
            assert both.distance_grads[k] == pytest.approx(only.distance_grads[k], rel=1e-12)


class TestLoss:

    def test_dataset_loss_matches_full_batch(self, random_model, modeset):
        loss, eta = dataset_loss(random_model, modeset, chunk=2)
        assert eta.shape == (3,)
        assert loss == pytest.approx(batch_loss(random_model, modeset), abs=1e-14)
        assert np.all((eta >= 0) & (eta <= 1 + 1e-12))

    def test_empty_or_out_of_range_batch(self, random_model, modeset):
        with pytest.raises(ValidationError):
            loss_and_grads(random_model, modeset, [])
        with pytest.raises(ValidationError):
            loss_and_grads(random_model, modeset, [3])


class TestAggregation:

    def test_partition_reproduces_full_gradient(self, random_model, modeset):
        random_model.set_trainable(masks=[1, 2], distances=[2])
        full = loss_and_grads(random_model, modeset, BATCH)
        parts = [loss_and_grads(random_model, modeset, b) for b in ([0, 2], [1])]
        merged = aggregate_gradients(parts)
        assert merged.loss == pytest.approx(full.loss, abs=1e-14)
        for i in (1, 2):
            assert np.allclose(merged.phase_grads[i], full.phase_grads[i], atol=1e-14)
        assert merged.distance_grads[2] == pytest.approx(full.distance_grads[2], rel=1e-10)
        assert sorted(merged.batch) == BATCH

    def test_rejects_mismatched_parameter_sets(self, random_model, modeset):
        random_model.set_trainable(masks=[1])
        a = loss_and_grads(random_model, modeset, [0])
        random_model.set_trainable(masks=[2])
        b = loss_and_grads(random_model, modeset, [1])
        with pytest.raises(ValidationError):
            aggregate_gradients([a, b])


@pytest.mark.parametrize("seed", range(20))
def test_random_models_match_finite_differences(grid, seed):
    n_masks = 2 + seed % 3
    count = 1 + (seed // 3) % 3
    modes = [(0, 0), (0, 1), (1, 0)][:count]
    modeset = build_linear_array_modeset(grid, count, 60e-6, 20e-6, 40e-6, modes=modes)
    model = make_random_model(grid, n_masks=n_masks, seed=100 + seed)
    batch = list(range(count))
    mask = 1 + seed % n_masks
    model.set_trainable(masks=[mask], distances=range(n_masks + 1))
    bundle = loss_and_grads(model, modeset, batch)

    rng = np.random.default_rng(seed)
    pixels = list(zip(rng.integers(8, 56, size=50), rng.integers(8, 56, size=50)))
    h = 1e-3
    numeric = []
    for (y, x) in pixels:
        plus = model.copy()
        plus.masks[mask - 1][y, x] += h
        minus = model.copy()
        minus.masks[mask - 1][y, x] -= h
        numeric.append((batch_loss(plus, modeset, batch) - batch_loss(minus, modeset, batch)) / (2 * h))
    analytic = [bundle.phase_grads[mask][y, x] for (y, x) in pixels]
    assert relative_error(analytic, numeric) < 1e-5

    for k in range(n_masks + 1):
        plus = model.copy()
        plus.set_distance(k, model.distances[k] + 1e-7)
        minus = model.copy()
        minus.set_distance(k, model.distances[k] - 1e-7)
        numeric_z = (batch_loss(plus, modeset, batch) - batch_loss(minus, modeset, batch)) / 2e-7
        assert bundle.distance_grads[k] == pytest.approx(numeric_z, rel=1e-4, abs=1e-6)
