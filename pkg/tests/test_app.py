# -*- coding: utf-8 -*-

"""
Testes de ponta a ponta da linha de comando sobre um projeto pequeno.
"""

import json

import numpy as np
import pandas as pd
import pytest

import app
from app import compare_bundles, main
from utils.persistence import LOCK_NAME, read_json

from conftest import tiny_document


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_document()), encoding="utf-8")
    return path


@pytest.fixture
def design_dir(tmp_path, config_path):
    output = tmp_path / "run"
    assert main(["design", str(config_path), "-o", str(output), "--threads", "1"]) == 0
    return output


class TestDesign:

    def test_artifacts(self, design_dir):
        for name in ("model/manifest.json", "model/mask_01.f32", "model/mask_02.f32", "loss_history.csv",
                     "convergence.png", "phase_01.png", "phase_02.png", "eval_report.json",
                     "crosstalk.csv", "crosstalk_db.png", "run_manifest.json"):
            assert (design_dir / name).is_file(), name
        assert not (design_dir / LOCK_NAME).exists()

    def test_run_manifest(self, design_dir):
        manifest = read_json(design_dir / "run_manifest.json")
        assert manifest["seeds"]["batches"] == 0
        assert manifest["adam"] == {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8}
        assert manifest["macro"]["stages"][0]["max_iterations"] == 3
        assert len(manifest["config_hash"]) == 64
        assert manifest["modeset"]["labels"] == [[0, 0], [0, 1], [1, 0]]
        history = pd.read_csv(design_dir / "loss_history.csv")
        assert manifest["run"]["final_loss"] == pytest.approx(history["loss"].iloc[-1], rel=1e-15)

    def test_training_improves_on_flat_masks(self, design_dir):
        history = pd.read_csv(design_dir / "loss_history.csv")
        assert len(history) == 3
        assert history["loss"].iloc[-1] < history["loss"].iloc[0]

    def test_same_seed_same_masks(self, tmp_path, config_path, design_dir):
        again = tmp_path / "again"
        assert main(["design", str(config_path), "-o", str(again), "--threads", "1"]) == 0
        for name in ("mask_01.f32", "mask_02.f32"):
            assert (again / "model" / name).read_bytes() == (design_dir / "model" / name).read_bytes()
        a = pd.read_csv(design_dir / "loss_history.csv")
        b = pd.read_csv(again / "loss_history.csv")
        assert a["loss"].tolist() == b["loss"].tolist()

    def test_locked_output(self, tmp_path, config_path, capsys):
        output = tmp_path / "busy"
        output.mkdir()
        (output / LOCK_NAME).write_text("123")
        assert main(["design", str(config_path), "-o", str(output)]) == 1
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["error"] == "OutputLockedError"

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        document = tiny_document()
        document["grid"]["nx"] = 0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        assert main(["design", str(path), "-o", str(tmp_path / "out")]) == 2
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["field_path"] == "grid.nx"

    def test_invalid_macro_exit_code(self, tmp_path):
        document = tiny_document()
        document["macro"] = {"stages": [{"masks": "all", "batch_size": 4}]}
        path = tmp_path / "bad_macro.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        assert main(["design", str(path), "-o", str(tmp_path / "out")]) == 2
        assert json.loads((tmp_path / "out" / "error.json").read_text())["field_path"] == "stages[0].batch_size"


class TestOtherCommands:

    def test_evaluate_reproduces_design_metrics(self, design_dir, config_path, capsys):
        capsys.readouterr()
        assert main(["evaluate", str(design_dir / "model"), str(config_path)]) == 0
        evaluated = json.loads(capsys.readouterr().out)
        designed = read_json(design_dir / "eval_report.json")
        assert np.allclose(evaluated["efficiencies"], designed["efficiencies"], atol=1e-12)
        assert evaluated["insertion_loss_db"] == pytest.approx(designed["insertion_loss_db"], abs=1e-12)
        assert evaluated["sharpness"]["mean"] == pytest.approx(designed["sharpness"]["mean"], abs=1e-12)

    def test_evaluate_corrupted_bundle(self, design_dir, config_path):
        path = design_dir / "model" / "mask_01.f32"
        path.write_bytes(path.read_bytes()[::-1])
        assert main(["evaluate", str(design_dir / "model"), str(config_path)]) == 1

    def test_compare_with_itself(self, design_dir, tmp_path):
        table = compare_bundles(str(design_dir / "model"), str(design_dir / "model"))
        assert table["similarity"].tolist() == pytest.approx([1.0, 1.0], abs=1e-12)
        assert main(["compare", str(design_dir / "model"), str(design_dir / "model"), "-o", str(tmp_path / "sim.csv")]) == 0
        assert pd.read_csv(tmp_path / "sim.csv")["mask"].tolist() == [1, 2]

    def test_export_masks(self, design_dir, tmp_path):
        target = tmp_path / "slm"
        assert main(["export-masks", str(design_dir / "model"), "--format", "png16", "-o", str(target)]) == 0
        assert sorted(p.name for p in target.iterdir()) == ["mask_01.png", "mask_02.png"]

    def test_report(self, design_dir):
        assert main(["report", str(design_dir)]) == 0
        html = (design_dir / "report.html").read_text(encoding="utf-8")
        assert "<h2>Projeto MPLC" in html
        assert html.count("plotly-graph-div") >= 3

    @pytest.mark.parametrize("name, content", [
        ("eval_report.json", '{"loss": 0.1'),
        ("eval_report.json", '{"loss": 0.1}'),
        ("crosstalk.csv", "k,0\nj,abc\n"),
    ])
    def test_report_with_corrupted_artifact(self, design_dir, capsys, name, content):
        (design_dir / name).write_text(content, encoding="utf-8")
        assert main(["report", str(design_dir)]) == 1
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["error"] == "ArtifactError"
        assert record["exit_code"] == 1
        assert read_json(design_dir / "error.json") == record
        assert not (design_dir / LOCK_NAME).exists()

    def test_unexpected_error_still_produces_record(self, design_dir, capsys, monkeypatch):
        def broken(output_dir):
            raise RuntimeError("falha simulada")

        monkeypatch.setattr(app, "render_report", broken)
        assert main(["report", str(design_dir)]) == 1
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record == {"error": "RuntimeError", "message": "falha simulada", "exit_code": 1}
        assert (design_dir / "error.json").is_file()

    def test_sweep(self, tmp_path, config_path):
        output = tmp_path / "sweep"
        argv = ["sweep", str(config_path), "-o", str(output), "--batch-sizes", "1", "3", "5",
                "--learning-rates", "0.1", "0.2", "--max-iterations", "2", "--threads", "1"]
        assert main(argv) == 0
        study = pd.read_csv(output / "batch_study.csv")
        assert study["batch_size"].tolist() == [1, 3]
        assert (output / "models" / "B01" / "manifest.json").is_file()
        assert (output / "batch_study.png").is_file()
