#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Linha de comando do projetista MPLC: design, evaluate, compare, export-masks,
report e sweep.
"""

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

# Adicionar diretórios ao path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

# Importar módulos do projeto
from analyzers.evaluation import CrosstalkMatrix, EvalReport, MPLCEvaluator
from analyzers.macro_engine import batch_size_study, run_program
from analyzers.optimizers import adam_constants
from analyzers.stages import DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE
from utils import __version__
from utils.config_loader import DesignConfig, load_config
from utils.errors import ArtifactError, GridMismatchError, MPLCError
from utils.grid_field import similarity
from utils.persistence import (
    EXPORT_FORMATS,
    error_record,
    export_masks,
    load_bundle,
    output_lock,
    read_json,
    save_bundle,
    write_json,
)
from utils.visualizer import MPLCVisualizer

logger = logging.getLogger("mplc")

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

DEFAULT_BATCH_SIZES = [4, 6, 8, 10]
DEFAULT_LEARNING_RATES = [round(0.1 * k, 1) for k in range(1, 10)]


def configure_logging(level: str = "INFO", verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        force=True,
    )


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _resolve_seed(cli_seed: Optional[int], program_seed: Optional[int], config_seed: int) -> int:
    if cli_seed is not None:
        return cli_seed
    if program_seed is not None:
        return program_seed
    return config_seed


# Função para avaliar um modelo e gravar relatório, crosstalk e figuras
def write_evaluation(
    evaluator: MPLCEvaluator,
    output_dir: Path,
    visualizer: MPLCVisualizer,
) -> EvalReport:
    report = evaluator.run_complete_analysis()
    write_json(output_dir / "eval_report.json", report.to_dict())
    report.crosstalk.to_frame().to_csv(output_dir / "crosstalk.csv", float_format="%.17g")
    visualizer.plot_crosstalk_db(report.crosstalk)
    return report


# Função que executa um projeto completo
def run_design(config: DesignConfig, output_dir: Path, seed: Optional[int] = None, threads: Optional[int] = None) -> Dict[str, Any]:
    """
    Constrói o conjunto de modos e o modelo, executa a macro e grava os artefatos.

    Args:
        config (DesignConfig): Configuração
        output_dir (Path): Diretório de saída
        seed (Optional[int]): Semente que substitui a da configuração
        threads (Optional[int]): Threads das FFTs

    Returns:
        Dict[str, Any]: Manifesto da execução
    """
    started = _timestamp()
    propagator = config.build_propagator(threads)
    modeset = config.build_modeset()
    model = config.build_model(propagator)
    program = config.build_program(modeset.size)
    seed = _resolve_seed(seed, program.seed, config.seed)
    rng = np.random.default_rng(seed)

    try:
        model, log = run_program(model, modeset, program, rng)
    except MPLCError as exc:
        if exc.run_log is not None:
            exc.run_log.to_csv(output_dir / "loss_history.csv")
            logger.info("Histórico parcial gravado em loss_history.csv")
        raise

    # Métricas finais calculadas com as máscaras na precisão do disco
    model.round_to_float32()
    provenance = {
        "config_hash": config.config_hash(),
        "seed": seed,
        "macro": program.builtin or program.description,
    }
    save_bundle(model, output_dir / "model", provenance=provenance)
    log.to_csv(output_dir / "loss_history.csv")

    visualizer = MPLCVisualizer(str(output_dir))
    visualizer.plot_convergence(log.to_frame())
    visualizer.save_phase_previews(model.masks)
    evaluator = MPLCEvaluator(
        model,
        modeset,
        delta_phi=config.evaluation.delta_phi_rad,
        instances=config.evaluation.instances,
        seed=seed,
        workers=propagator.workers,
    )
    report = write_evaluation(evaluator, output_dir, visualizer)

    manifest = {
        "software_version": __version__,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "wavelength_m": model.grid.wavelength,
        "grid": model.grid.to_dict(),
        "modeset": {
            "count": modeset.size,
            "labels": [list(mn) for mn in modeset.labels],
            "spot_centers_m": [list(c) for c in modeset.spot_centers],
        },
        "macro": program.dump(),
        "adam": adam_constants(),
        "seeds": {"batches": seed, "perturbations": seed},
        "threads": propagator.workers,
        "started": started,
        "finished": _timestamp(),
        "run": log.summary(),
        "final_distances_m": list(model.distances),
        "metrics": report.to_dict(),
    }
    write_json(output_dir / "run_manifest.json", manifest)
    logger.info(f"Projeto concluído: η médio = {np.mean(report.efficiencies):.4f}, IL = {report.insertion_loss_db:.4f} dB")
    return manifest


def cmd_design(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    output_dir = Path(args.output)
    with output_lock(output_dir):
        run_design(config, output_dir, seed=args.seed, threads=args.threads)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    model, manifest = load_bundle(args.bundle, workers=args.threads or config.threads)
    modeset = config.build_modeset()
    if modeset.grid != model.grid:
        raise GridMismatchError("o conjunto de modos da configuração não está na grade do bundle")
    seed = args.seed
    if seed is None:
        seed = manifest.get("provenance", {}).get("seed", config.seed)
    evaluator = MPLCEvaluator(
        model,
        modeset,
        delta_phi=args.delta_phi if args.delta_phi is not None else config.evaluation.delta_phi_rad,
        instances=args.instances if args.instances is not None else config.evaluation.instances,
        seed=seed,
        workers=model.propagator.workers,
    )
    if args.output:
        output_dir = Path(args.output)
        with output_lock(output_dir):
            report = write_evaluation(evaluator, output_dir, MPLCVisualizer(str(output_dir)))
    else:
        report = evaluator.run_complete_analysis()
    print(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))
    return 0


def compare_bundles(bundle_a: str, bundle_b: str) -> pd.DataFrame:
    """
    Similaridade máscara a máscara entre dois bundles com a mesma topologia.
    """
    model_a, _ = load_bundle(bundle_a)
    model_b, _ = load_bundle(bundle_b)
    model_a.check_same_topology(model_b)
    return pd.DataFrame({
        "mask": list(range(1, model_a.n_masks + 1)),
        "similarity": [similarity(a, b) for a, b in zip(model_a.masks, model_b.masks)],
    })


def cmd_compare(args: argparse.Namespace) -> int:
    table = compare_bundles(args.bundle_a, args.bundle_b)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    if args.output:
        table.to_csv(args.output, index=False, float_format="%.17g")
        logger.info(f"Similaridades gravadas em {args.output}")
    return 0


def cmd_export_masks(args: argparse.Namespace) -> int:
    model, _ = load_bundle(args.bundle)
    export_masks(model, args.output, args.format)
    return 0


def _read_artifact(path: Path, reader: Callable[[Path], Any]) -> Any:
    try:
        return reader(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise ArtifactError(f"artefato ilegível {path}: {type(exc).__name__}: {exc}") from exc


def render_report(output_dir: Path) -> Path:
    """
    Regera figuras e painel HTML a partir de um diretório de projeto existente.

    Raises:
        ArtifactError: Histórico, crosstalk ou relatório corrompido
    """
    model, _ = load_bundle(output_dir / "model")
    history_path = output_dir / "loss_history.csv"
    history = _read_artifact(history_path, pd.read_csv) if history_path.is_file() else None
    crosstalk_path = output_dir / "crosstalk.csv"
    ct = None
    if crosstalk_path.is_file():
        ct = _read_artifact(crosstalk_path, lambda p: CrosstalkMatrix.from_frame(
            pd.read_csv(p, index_col=0, float_precision="round_trip")))
    report_path = output_dir / "eval_report.json"
    report = None
    if report_path.is_file():
        report = _read_artifact(report_path, lambda p: EvalReport.from_dict(read_json(p)))

    visualizer = MPLCVisualizer(str(output_dir))
    if history is not None and len(history):
        visualizer.plot_convergence(history)
    if ct is not None:
        visualizer.plot_crosstalk_db(ct)
    visualizer.save_phase_previews(model.masks)
    return visualizer.create_dashboard(history, ct, model.masks, report)


def cmd_report(args: argparse.Namespace) -> int:
    output_dir = Path(args.output)
    with output_lock(output_dir):
        render_report(output_dir)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    output_dir = Path(args.output)
    with output_lock(output_dir):
        propagator = config.build_propagator(args.threads)
        modeset = config.build_modeset()
        model = config.build_model(propagator)
        seed = args.seed if args.seed is not None else config.seed

        def evaluate(candidate):
            return MPLCEvaluator(
                candidate,
                modeset,
                delta_phi=config.evaluation.delta_phi_rad,
                instances=config.evaluation.instances,
                seed=seed,
                workers=propagator.workers,
            ).run_complete_analysis()

        batch_sizes = [b for b in args.batch_sizes if b <= modeset.size]
        skipped = sorted(set(args.batch_sizes) - set(batch_sizes))
        if skipped:
            logger.warning(f"Tamanhos de lote maiores que M = {modeset.size} ignorados: {skipped}")
        study, models = batch_size_study(
            model,
            modeset,
            batch_sizes,
            args.learning_rates,
            seed,
            evaluate,
            tolerance=args.tolerance,
            max_iterations=args.max_iterations,
        )
        study.to_csv(output_dir / "batch_study.csv", index=False, float_format="%.17g")
        for batch_size, best in models.items():
            best.round_to_float32()
            save_bundle(best, output_dir / "models" / f"B{batch_size:02d}",
                        provenance={"config_hash": config.config_hash(), "seed": seed, "batch_size": batch_size})
        MPLCVisualizer(str(output_dir)).plot_batch_study(study)
        print(study.to_string(index=False))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mplc", description="Projeto de conversores de luz multiplano (MPLC)")
    parser.add_argument("--log-level", default="INFO", help="Nível de log (padrão: INFO)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log detalhado (DEBUG)")
    sub = parser.add_subparsers(dest="command", required=True)

    design = sub.add_parser("design", help="Treina um projeto a partir de uma configuração")
    design.add_argument("config")
    design.add_argument("-o", "--output", required=True)
    design.add_argument("--seed", type=int)
    design.add_argument("--threads", type=int)
    design.set_defaults(handler=cmd_design)

    evaluate = sub.add_parser("evaluate", help="Avalia um bundle sobre o conjunto de modos de uma configuração")
    evaluate.add_argument("bundle")
    evaluate.add_argument("config")
    evaluate.add_argument("--delta-phi", type=float)
    evaluate.add_argument("--instances", type=int)
    evaluate.add_argument("--seed", type=int)
    evaluate.add_argument("--threads", type=int)
    evaluate.add_argument("-o", "--output")
    evaluate.set_defaults(handler=cmd_evaluate)

    compare = sub.add_parser("compare", help="Similaridade máscara a máscara entre dois bundles")
    compare.add_argument("bundle_a")
    compare.add_argument("bundle_b")
    compare.add_argument("-o", "--output")
    compare.set_defaults(handler=cmd_compare)

    export = sub.add_parser("export-masks", help="Exporta as máscaras enroladas para o SLM")
    export.add_argument("bundle")
    export.add_argument("--format", choices=EXPORT_FORMATS, required=True)
    export.add_argument("-o", "--output", required=True)
    export.set_defaults(handler=cmd_export_masks)

    report = sub.add_parser("report", help="Regera figuras e painel HTML de um diretório de projeto")
    report.add_argument("output")
    report.set_defaults(handler=cmd_report)

    sweep = sub.add_parser("sweep", help="Estudo de tamanho de lote com varredura de taxas de aprendizado")
    sweep.add_argument("config")
    sweep.add_argument("-o", "--output", required=True)
    sweep.add_argument("--batch-sizes", type=int, nargs="+", default=DEFAULT_BATCH_SIZES)
    sweep.add_argument("--learning-rates", type=float, nargs="+", default=DEFAULT_LEARNING_RATES)
    sweep.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    sweep.add_argument("--max-iterations", type=int, default=DEFAULT_MAX_ITERATIONS)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--threads", type=int)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def _report_error(exc: BaseException, args: argparse.Namespace) -> int:
    record = error_record(exc)
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)
    output = getattr(args, "output", None)
    if output and Path(output).is_dir():
        write_json(Path(output) / "error.json", record)
    return record["exit_code"]


# Função principal
def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.verbose)
    try:
        return args.handler(args)
    except MPLCError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return _report_error(exc, args)
    except OSError as exc:
        logger.error(f"Falha de E/S: {exc}")
        return _report_error(exc, args)
    except Exception as exc:
        logger.exception(f"Erro inesperado: {exc}")
        return _report_error(exc, args)


if __name__ == "__main__":
    sys.exit(main())
