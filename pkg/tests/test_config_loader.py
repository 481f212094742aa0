# -*- coding: utf-8 -*-

"""
Testes da leitura e validação das configurações de projeto.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from analyzers.mplc_model import MPLCModel
from utils.config_loader import config_from_dict, load_config, parse_config
from utils.errors import ConfigSyntaxError, ConfigurationError, GridMismatchError
from utils.grid_field import GridSpec
from utils.persistence import save_bundle

from conftest import tiny_document

CONFIGS_DIR = Path(__file__).resolve().parent.parent / "configs"


class TestShippedConfigs:

    def test_ten_mode_design(self):
        config = load_config(CONFIGS_DIR / "hg10.json")
        assert (config.grid.nx, config.grid.ny) == (512, 512)
        assert config.build_grid().pitch == pytest.approx(3e-6)
        assert config.build_grid().wavelength == pytest.approx(1550e-9)
        assert config.model.distances_mm == (6.0,) * 6
        assert config.evaluation.instances == 10
        assert config.build_program().stages[0].masks == (1, 2, 3, 4, 5)

    def test_macro_file_is_resolved_next_to_config(self):
        config = load_config(CONFIGS_DIR / "hg45.json")
        (stage,) = config.build_program().stages
        assert stage.batch_size == 8
        assert stage.gradient_mode == "epoch-aggregate"
        assert (config.grid.nx, config.grid.ny) == (1280, 512)
        assert config.build_grid().pitch == pytest.approx(5e-6)
        assert config.model.n_masks == 8
        assert config.model.distances_mm == (24.0,) * 9
        assert config.source.count == 45

    def test_explicit_mode_list(self):
        config = load_config(CONFIGS_DIR / "hg20_batch.json")
        assert len(config.target.modes) == 20
        assert config.target.modes[-1] == (4, 1)

    @pytest.mark.parametrize("name", ["hg10_reduced.json", "hg10_sequential.json", "hg10_wfm.json", "hg10_refocus.json"])
    def test_other_configs_load(self, name):
        config = load_config(CONFIGS_DIR / name)
        assert config.model.n_masks == 5


class TestValidation:

    def test_unknown_key_reports_path(self):
        document = tiny_document()
        document["grid"]["size"] = 3
        with pytest.raises(ConfigurationError) as info:
            config_from_dict(document)
        assert info.value.field_path == "grid.size"
        assert info.value.exit_code == 2

    def test_missing_section(self):
        document = tiny_document()
        del document["model"]
        with pytest.raises(ConfigurationError) as info:
            config_from_dict(document)
        assert info.value.field_path == "model"

    def test_distance_count(self):
        document = tiny_document()
        document["model"]["distances_mm"] = [5.0, 5.0]
        with pytest.raises(ConfigurationError) as info:
            config_from_dict(document)
        assert info.value.field_path == "model.distances_mm"

    def test_negative_distance(self):
        document = tiny_document()
        document["model"]["distances_mm"] = [5.0, -1.0, 5.0]
        with pytest.raises(ConfigurationError) as info:
            config_from_dict(document)
        assert info.value.field_path == "model.distances_mm[1]"

    def test_bundle_init_needs_path(self):
        document = tiny_document()
        document["model"]["init"] = "bundle"
        with pytest.raises(ConfigurationError):
            config_from_dict(document)

    def test_bad_ordering(self):
        document = tiny_document()
        document["target"]["ordering"] = "zigzag"
        with pytest.raises(ConfigurationError) as info:
            config_from_dict(document)
        assert info.value.field_path == "target.ordering"

    def test_syntax_error_location(self):
        with pytest.raises(ConfigSyntaxError) as info:
            parse_config('{\n  "grid": {"nx": 64,\n}')
        assert info.value.line == 3
        assert "linha 3" in str(info.value)


class TestBuild:

    def test_defaults_and_hash(self):
        config = config_from_dict(tiny_document())
        assert config.grid.wavelength_nm == 1550.0
        assert config.model.distances_m == pytest.approx((5e-3,) * 3)
        assert len(config.config_hash()) == 64
        assert config.config_hash() == config_from_dict(tiny_document()).config_hash()
        changed = tiny_document()
        changed["seed"] = 1
        assert config_from_dict(changed).config_hash() != config.config_hash()

    def test_normalized_dict_is_json(self):
        data = config_from_dict(tiny_document()).to_dict()
        assert json.loads(json.dumps(data)) == data
        assert data["evaluation"]["instances"] == 2

    def test_modeset_and_model(self):
        config = config_from_dict(tiny_document())
        modeset = config.build_modeset()
        model = config.build_model(config.build_propagator(workers=1))
        assert modeset.size == 3
        assert model.n_masks == 2
        assert all(np.all(m == 0.0) for m in model.masks)

    def test_model_from_bundle(self, tmp_path):
        grid = config_from_dict(tiny_document()).build_grid()
        rng = np.random.default_rng(0)
        source = MPLCModel(grid, [rng.uniform(-3, 3, grid.shape) for _ in range(2)], [1e-3] * 3)
        source.round_to_float32()
        save_bundle(source, tmp_path / "init")

        document = tiny_document()
        document["model"].update({"init": "bundle", "bundle": "init"})
        config = config_from_dict(document, base_dir=str(tmp_path))
        model = config.build_model(config.build_propagator(workers=1))
        assert np.array_equal(model.mask(2), source.mask(2))
        assert model.distances == pytest.approx([5e-3] * 3)

    def test_bundle_on_other_grid(self, tmp_path):
        other = GridSpec(nx=32, ny=32, pitch=8e-6)
        save_bundle(MPLCModel.zeros(other, 2, [1e-3] * 3), tmp_path / "init")
        document = tiny_document()
        document["model"].update({"init": "bundle", "bundle": "init"})
        config = config_from_dict(document, base_dir=str(tmp_path))
        with pytest.raises(GridMismatchError):
            config.build_model(config.build_propagator(workers=1))
