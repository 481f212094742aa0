# -*- coding: utf-8 -*-

"""
Testes das métricas: eficiência, crosstalk, perda de inserção, nitidez e
tolerância óptica.
"""

import numpy as np
import pandas as pd
import pytest

from analyzers.evaluation import (
    CrosstalkMatrix,
    EvalReport,
    MPLCEvaluator,
    coupling_efficiency,
    crosstalk_matrix,
    insertion_loss,
    optical_tolerance,
    perturbation_seeds,
    perturbed_model,
    sharpness,
)
from analyzers.gradients import dataset_loss
from analyzers.mplc_model import MPLCModel
from utils.errors import ValidationError
from utils.grid_field import ComplexField, build_linear_array_modeset


class TestCouplingEfficiency:

    def test_identity_model(self, grid, propagator, modeset):
        model = MPLCModel.zeros(grid, 1, [0.0, 0.0], propagator=propagator)
        e0 = modeset.inputs[1]
        assert coupling_efficiency(model, e0, e0) == pytest.approx(1.0, abs=1e-12)

    def test_requires_normalized_fields(self, random_model, modeset, grid):
        doubled = ComplexField(grid, 2.0 * modeset.inputs[0].values)
        with pytest.raises(ValidationError):
            coupling_efficiency(random_model, doubled, modeset.targets[0])

    def test_matches_crosstalk_diagonal(self, random_model, modeset):
        ct = crosstalk_matrix(random_model, modeset)
        for j in range(modeset.size):
            eta = coupling_efficiency(random_model, modeset.inputs[j], modeset.targets[j])
            assert ct.efficiencies[j] == pytest.approx(eta, abs=1e-12)


class TestCrosstalk:

    def test_column_power_bounded(self, random_model, modeset):
        ct = crosstalk_matrix(random_model, modeset, chunk=2)
        assert ct.transfer.shape == (3, 3)
        assert np.all(ct.column_power_sums() <= 1.0 + 1e-8)

    def test_single_mode(self, grid, random_model):
        single = build_linear_array_modeset(grid, 1, 60e-6, 20e-6, 40e-6)
        ct = crosstalk_matrix(random_model, single)
        loss, eta = dataset_loss(random_model, single)
        assert ct.transfer.shape == (1, 1)
        assert ct.efficiencies[0] == pytest.approx(eta[0], abs=1e-12)

    def test_frame_round_trip(self, random_model, modeset, tmp_path):
        ct = crosstalk_matrix(random_model, modeset)
        path = tmp_path / "crosstalk.csv"
        ct.to_frame().to_csv(path, float_format="%.17g")
        restored = CrosstalkMatrix.from_frame(pd.read_csv(path, index_col=0, float_precision="round_trip"))
        assert np.array_equal(restored.transfer, ct.transfer)

    def test_power_db_floor(self):
        ct = CrosstalkMatrix(np.zeros((2, 2), dtype=np.complex128))
        assert np.allclose(ct.power_db(), -120.0)


class TestInsertionLoss:

    def test_identity(self):
        assert insertion_loss(CrosstalkMatrix(np.eye(10, dtype=np.complex128))) == pytest.approx(0.0, abs=1e-12)

    def test_half_power(self):
        ct = CrosstalkMatrix(np.sqrt(0.5) * np.eye(4, dtype=np.complex128))
        assert insertion_loss(ct) == pytest.approx(3.0103, abs=1e-4)

    def test_zero_matrix(self):
        assert insertion_loss(CrosstalkMatrix(np.zeros((3, 3), dtype=np.complex128))) == float("inf")

    def test_unitary_mixing_is_lossless(self):
        rng = np.random.default_rng(0)
        q, _ = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
        assert insertion_loss(CrosstalkMatrix(q)) == pytest.approx(0.0, abs=1e-10)

    def test_eigenvalues_sorted(self):
        ct = CrosstalkMatrix(np.diag([0.5, 1.0, 0.1]).astype(np.complex128))
        assert np.allclose(ct.eigenvalues(), [1.0, 0.25, 0.01])


class TestPerturbations:

    def test_seeds_are_reproducible(self):
        assert perturbation_seeds(np.random.default_rng(3), 4) == perturbation_seeds(np.random.default_rng(3), 4)
        with pytest.raises(ValidationError):
            perturbation_seeds(np.random.default_rng(3), 0)

    def test_perturbation_bounds(self, random_model):
        clone = perturbed_model(random_model, 0.05, seed=9)
        for before, after in zip(random_model.masks, clone.masks):
            assert np.max(np.abs(after - before)) <= 0.05
            assert not np.array_equal(after, before)

    def test_zero_amplitude(self, random_model, modeset):
        assert sharpness(random_model, modeset, delta_phi=0.0, instances=3) == (0.0, 0.0)
        assert optical_tolerance(random_model, modeset, delta_phi=0.0, instances=3) == (0.0, 0.0)

    def test_larger_perturbations_hurt_more(self, random_model, modeset):
        small = sharpness(random_model, modeset, 0.05, 10, np.random.default_rng(0))[0]
        large = sharpness(random_model, modeset, 0.10, 10, np.random.default_rng(0))[0]
        assert large > small > 0.0

    def test_negative_amplitude(self, random_model):
        with pytest.raises(ValidationError):
            perturbed_model(random_model, -0.1, seed=0)


class TestEvaluator:

    def test_complete_analysis(self, random_model, modeset):
        report = MPLCEvaluator(random_model, modeset, delta_phi=0.05, instances=3, seed=2).run_complete_analysis()
        loss, eta = dataset_loss(random_model, modeset)
        assert report.loss == pytest.approx(loss, abs=1e-12)
        assert np.allclose(report.efficiencies, eta, atol=1e-12)
        assert report.sharpness_mean > 0.0
        assert report.tolerance_mean_db >= 0.0
        assert report.crosstalk is not None

    def test_shared_draws_match_standalone_metrics(self, random_model, modeset):
        report = MPLCEvaluator(random_model, modeset, delta_phi=0.05, instances=4, seed=6).run_complete_analysis()
        alone = sharpness(random_model, modeset, 0.05, 4, np.random.default_rng(6))
        assert report.sharpness_mean == pytest.approx(alone[0], rel=1e-12)
        assert report.sharpness_std == pytest.approx(alone[1], rel=1e-9, abs=1e-15)

    def test_parallel_instances_match_serial(self, random_model, modeset):
        serial = MPLCEvaluator(random_model, modeset, instances=4, seed=1, workers=1).run_complete_analysis()
        parallel = MPLCEvaluator(random_model, modeset, instances=4, seed=1, workers=3).run_complete_analysis()
        assert parallel.sharpness_mean == serial.sharpness_mean
        assert parallel.tolerance_mean_db == serial.tolerance_mean_db

    def test_report_dict_round_trip(self, random_model, modeset):
        report = MPLCEvaluator(random_model, modeset, instances=2).run_complete_analysis()
        restored = EvalReport.from_dict(report.to_dict())
        assert restored.loss == report.loss
        assert restored.labels == report.labels
        assert restored.to_dict() == report.to_dict()
