# -*- coding: utf-8 -*-

"""
Fixtures compartilhadas: grade pequena, conjunto de modos de 3 pares e
modelos com máscaras e distâncias aleatórias.
"""

import os
import sys

import numpy as np
import pytest

# Adicionar a raiz do projeto ao path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from analyzers.mplc_model import MPLCModel
from utils.grid_field import GridSpec, build_linear_array_modeset
from utils.propagation import SpectralPropagator


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="executa os testes marcados como slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="use --runslow para executar")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def grid():
    return GridSpec(nx=64, ny=64, pitch=8e-6, wavelength=1550e-9)


@pytest.fixture
def propagator(grid):
    return SpectralPropagator(grid, workers=1)


@pytest.fixture
def modeset(grid):
    return build_linear_array_modeset(grid, count=3, spot_spacing=60e-6, spot_waist=20e-6, target_waist=40e-6)


def make_random_model(grid, n_masks=3, seed=1, propagator=None):
    rng = np.random.default_rng(seed)
    masks = [rng.uniform(-np.pi, np.pi, size=grid.shape) for _ in range(n_masks)]
    distances = rng.uniform(1e-3, 10e-3, size=n_masks + 1).tolist()
    return MPLCModel(grid, masks, distances, propagator=propagator or SpectralPropagator(grid, workers=1))


@pytest.fixture
def random_model(grid, propagator):
    return make_random_model(grid, propagator=propagator)


def tiny_document():
    """Configuração de projeto pequena o bastante para rodar em segundos."""
    return {
        "description": "projeto de teste",
        "grid": {"nx": 64, "ny": 64, "pitch_um": 8.0},
        "source": {"type": "linear_array", "count": 3, "spacing_um": 60.0, "waist_um": 20.0},
        "target": {"type": "hermite_gaussian", "waist_um": 40.0},
        "model": {"n_masks": 2, "distances_mm": 5.0},
        "macro": {"builtin": "default", "max_iterations": 3, "tolerance": 1e-9},
        "evaluation": {"delta_phi_rad": 0.05, "instances": 2},
        "seed": 0,
    }
