#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo de macros de otimização: leitura e validação de programas de treino,
expansão das macros embutidas e execução sequencial dos estágios.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analyzers.gradients import dataset_loss
from analyzers.mplc_model import MPLCModel
from analyzers.optimizers import StageResult, run_stage
from analyzers.stages import (
    DEFAULT_DISTANCE_LR_SCALE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
    Stage,
    epoch_batches,
)
from utils.errors import MacroSyntaxError, MacroValidationError, MPLCError, StageDivergedError
from utils.grid_field import ModeSet

logger = logging.getLogger(__name__)

BUILTIN_MACROS = ("sequential", "default", "refocus", "batch", "full-aggregate", "wfm")

# Limite de iterações de cada laço por máscara da macro sequencial
SEQUENTIAL_MAX_ITERATIONS = 500
# Tamanho de lote padrão da macro de agregação de época
AGGREGATE_BATCH_SIZE = 8

RUN_LOG_COLUMNS = ["stage", "iteration", "loss", "mean_eta", "elapsed_s"]

_STAGE_KEYS = {
    "name", "masks", "distances", "method", "batch_size", "learning_rate",
    "distance_lr_scale_mm", "tolerance", "max_iterations", "gradient_mode",
    "equal_distance_groups",
}
# Chaves aceitas por macro embutida; opções que a macro não usaria são rejeitadas
_BUILTIN_COMMON_KEYS = {"builtin", "description", "tolerance", "max_iterations"}
_BUILTIN_ADAM_KEYS = _BUILTIN_COMMON_KEYS | {"learning_rate"}
_BUILTIN_KEYS = {
    "sequential": _BUILTIN_ADAM_KEYS | {"global_iterations"},
    "default": _BUILTIN_ADAM_KEYS,
    "wfm": _BUILTIN_COMMON_KEYS,
    "refocus": _BUILTIN_ADAM_KEYS | {"distance_lr_scale_mm", "distances", "equal_distance_groups"},
    "batch": _BUILTIN_ADAM_KEYS | {"batch_size"},
    "full-aggregate": _BUILTIN_ADAM_KEYS | {"batch_size"},
}
_PROGRAM_KEYS = {"stages", "description", "seed"}


@dataclass(frozen=True)
class MacroProgram:
    """
    Sequência ordenada de estágios de treino.

    Attributes:
        stages (Tuple[Stage, ...]): Estágios, executados em ordem
        seed (Optional[int]): Semente global (None usa a da configuração)
        description (str): Descrição livre
        builtin (Optional[str]): Nome da macro embutida de origem, se houver
    """
    stages: Tuple[Stage, ...]
    seed: Optional[int] = None
    description: str = ""
    builtin: Optional[str] = None

    def validate(self, n_masks: int, n_modes: int) -> None:
        if not self.stages:
            raise MacroValidationError("o programa precisa de pelo menos um estágio", "stages")
        for s, stage in enumerate(self.stages):
            stage.validate(n_masks, n_modes, path=f"stages[{s}]")

    def dump(self) -> Dict[str, Any]:
        """Forma normalizada, com todos os padrões preenchidos."""
        return {
            "builtin": self.builtin,
            "description": self.description,
            "seed": self.seed,
            "stages": [stage.to_dict() for stage in self.stages],
        }

    def dumps(self) -> str:
        return json.dumps(self.dump(), indent=2, ensure_ascii=False)


@dataclass
class RunLog:
    """
    Histórico de um programa: resultados por estágio e tabela de convergência.
    """
    results: List[StageResult] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """
        Tabela com as colunas stage, iteration, loss, mean_eta, elapsed_s.
        """
        rows = []
        for s, result in enumerate(self.results):
            label = f"{s}:{result.stage.name}"
            for it, (loss, eta, elapsed) in enumerate(zip(result.losses, result.mean_etas, result.elapsed), start=1):
                rows.append({"stage": label, "iteration": it, "loss": loss, "mean_eta": eta, "elapsed_s": elapsed})
        return pd.DataFrame(rows, columns=RUN_LOG_COLUMNS)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @property
    def final_loss(self) -> float:
        return self.results[-1].final_loss if self.results else float("nan")

    def summary(self) -> Dict[str, Any]:
        return {
            "stages": len(self.results),
            "iterations": int(sum(r.iterations for r in self.results)),
            "stop_reasons": [r.stop_reason for r in self.results],
            "final_loss": self.final_loss,
        }


def _reject_unknown(section: Dict[str, Any], allowed: set, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise MacroValidationError(f"chave desconhecida {key!r}", f"{path}.{key}" if path else key)


def _index_tuple(value: Any, path: str) -> Tuple[int, ...]:
    if value is None:
        return ()
    if value == "all":
        raise MacroValidationError("'all' só é aceito em estágios já expandidos com o número de máscaras", path)
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise MacroValidationError("esperada uma lista de inteiros", path)
    return tuple(sorted(set(value)))


def _number(section: Dict[str, Any], key: str, default: float, path: str) -> float:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MacroValidationError(f"esperado um número, recebeu {value!r}", f"{path}.{key}")
    return float(value)


def _integer(section: Dict[str, Any], key: str, default: Optional[int], path: str) -> Optional[int]:
    value = section.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise MacroValidationError(f"esperado um inteiro, recebeu {value!r}", f"{path}.{key}")
    return value


def _batch_size(section: Dict[str, Any], path: str) -> Optional[int]:
    value = section.get("batch_size", "full")
    if value == "full" or value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise MacroValidationError(f"batch_size deve ser inteiro ou 'full', recebeu {value!r}", f"{path}.batch_size")
    return value


def _groups(value: Any, path: str) -> Tuple[Tuple[int, ...], ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise MacroValidationError("esperada uma lista de grupos", path)
    return tuple(_index_tuple(group, f"{path}[{g}]") for g, group in enumerate(value))


def _all_masks(value: Any, n_masks: int, path: str) -> Tuple[int, ...]:
    if value == "all":
        return tuple(range(1, n_masks + 1))
    return _index_tuple(value, path)


def _parse_stage(section: Any, n_masks: int, path: str) -> Stage:
    if not isinstance(section, dict):
        raise MacroValidationError("cada estágio deve ser um objeto", path)
    _reject_unknown(section, _STAGE_KEYS, path)
    return Stage(
        name=str(section.get("name", path)),
        masks=_all_masks(section.get("masks"), n_masks, f"{path}.masks"),
        distances=_index_tuple(section.get("distances"), f"{path}.distances"),
        method=section.get("method", "adam"),
        batch_size=_batch_size(section, path),
        learning_rate=_number(section, "learning_rate", DEFAULT_LEARNING_RATE, path),
        distance_lr_scale=_number(section, "distance_lr_scale_mm", DEFAULT_DISTANCE_LR_SCALE * 1e3, path) * 1e-3,
        tolerance=_number(section, "tolerance", DEFAULT_TOLERANCE, path),
        max_iterations=_integer(section, "max_iterations", DEFAULT_MAX_ITERATIONS, path),
        gradient_mode=section.get("gradient_mode", "per-batch-update"),
        equal_distance_groups=_groups(section.get("equal_distance_groups"), f"{path}.equal_distance_groups"),
    )


def expand_builtin(name: str, n_masks: int, options: Optional[Dict[str, Any]] = None) -> List[Stage]:
    """
    Expande uma macro embutida em estágios.

    Args:
        name (str): "sequential", "default", "refocus", "batch", "full-aggregate" ou "wfm"
        n_masks (int): Número de máscaras N
        options (Optional[Dict[str, Any]]): Parâmetros opcionais da macro

    Returns:
        List[Stage]: Estágios expandidos
    """
    options = options or {}
    path = "macro"
    if not isinstance(name, str) or name not in _BUILTIN_KEYS:
        raise MacroValidationError(f"macro embutida desconhecida {name!r}; use uma de {BUILTIN_MACROS}", f"{path}.builtin")
    _reject_unknown(options, _BUILTIN_KEYS[name], path)
    lr = _number(options, "learning_rate", DEFAULT_LEARNING_RATE, path)
    lr_scale = _number(options, "distance_lr_scale_mm", DEFAULT_DISTANCE_LR_SCALE * 1e3, path) * 1e-3
    tol = _number(options, "tolerance", DEFAULT_TOLERANCE, path)
    all_masks = tuple(range(1, n_masks + 1))
    common = dict(learning_rate=lr, distance_lr_scale=lr_scale, tolerance=tol)

    if name == "sequential":
        # Para cada iteração global, um laço até convergir por máscara
        rounds = _integer(options, "global_iterations", 2, path)
        if rounds < 1:
            raise MacroValidationError("global_iterations deve ser ≥ 1", f"{path}.global_iterations")
        cap = _integer(options, "max_iterations", SEQUENTIAL_MAX_ITERATIONS, path)
        return [
            Stage(name=f"k{k}-mask{i}", masks=(i,), max_iterations=cap, **common)
            for k in range(1, rounds + 1)
            for i in all_masks
        ]
    cap = _integer(options, "max_iterations", DEFAULT_MAX_ITERATIONS, path)
    if name == "default":
        return [Stage(name="default", masks=all_masks, max_iterations=cap, **common)]
    if name == "wfm":
        return [Stage(name="wfm", masks=all_masks, method="wfm-sweep", max_iterations=cap, tolerance=tol)]
    if name == "refocus":
        distances = _index_tuple(options.get("distances", [0, n_masks]), f"{path}.distances")
        groups = _groups(options.get("equal_distance_groups"), f"{path}.equal_distance_groups")
        edge_masks = tuple(sorted({1, n_masks}))
        return [
            Stage(name="round1", masks=edge_masks, distances=distances, max_iterations=cap,
                  equal_distance_groups=groups, **common),
            Stage(name="round2", masks=all_masks, distances=distances, max_iterations=cap,
                  equal_distance_groups=groups, **common),
        ]
    if name == "batch":
        return [Stage(name="batch", masks=all_masks, batch_size=_batch_size(options, path),
                      max_iterations=cap, **common)]
    if name == "full-aggregate":
        batch = _batch_size({"batch_size": options.get("batch_size", AGGREGATE_BATCH_SIZE)}, path)
        return [Stage(name="full-aggregate", masks=all_masks, batch_size=batch, max_iterations=cap,
                      gradient_mode="epoch-aggregate", **common)]


def _clip_batch_sizes(stages: List[Stage], n_modes: int) -> List[Stage]:
    # A macro de agregação usa B = 8 por padrão; com menos modos vira o conjunto completo
    clipped = []
    for stage in stages:
        if stage.gradient_mode == "epoch-aggregate" and stage.batch_size is not None and stage.batch_size > n_modes:
            stage = replace(stage, batch_size=None)
        clipped.append(stage)
    return clipped


def build_program(document: Dict[str, Any], n_masks: int, n_modes: int) -> MacroProgram:
    """
    Constrói e valida um programa a partir de um documento já decodificado.

    Args:
        document (Dict[str, Any]): {"builtin": nome, ...} ou {"stages": [...]}
        n_masks (int): N do modelo
        n_modes (int): M do conjunto de modos

    Returns:
        MacroProgram: Programa validado
    """
    if not isinstance(document, dict):
        raise MacroValidationError("o documento de macro deve ser um objeto", "macro")
    if "builtin" in document:
        name = document["builtin"]
        stages = expand_builtin(name, n_masks, document)
        if name == "full-aggregate" and "batch_size" not in document:
            stages = _clip_batch_sizes(stages, n_modes)
        program = MacroProgram(stages=tuple(stages), description=str(document.get("description", name)), builtin=name)
    elif "stages" in document:
        _reject_unknown(document, _PROGRAM_KEYS, "macro")
        if not isinstance(document["stages"], list):
            raise MacroValidationError("esperada uma lista de estágios", "macro.stages")
        stages = [_parse_stage(section, n_masks, f"stages[{s}]") for s, section in enumerate(document["stages"])]
        seed = _integer(document, "seed", None, "macro")
        program = MacroProgram(stages=tuple(stages), seed=seed, description=str(document.get("description", "")))
    else:
        raise MacroValidationError("informe 'builtin' ou 'stages'", "macro")
    program.validate(n_masks, n_modes)
    return program


def parse_macro(text: str, n_masks: int, n_modes: int) -> MacroProgram:
    """
    Lê um documento de macro em JSON.

    Args:
        text (str): Conteúdo do documento
        n_masks (int): N do modelo
        n_modes (int): M do conjunto de modos

    Returns:
        MacroProgram: Programa validado

    Raises:
        MacroSyntaxError: JSON mal formado (com linha e coluna)
        MacroValidationError: Erro semântico (com caminho do campo)
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MacroSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    return build_program(document, n_masks, n_modes)


def run_program(
    model: MPLCModel,
    modeset: ModeSet,
    program: MacroProgram,
    rng: np.random.Generator,
) -> Tuple[MPLCModel, RunLog]:
    """
    Executa os estágios em ordem sobre o modelo (alterado no lugar).

    Args:
        model (MPLCModel): Modelo inicial
        modeset (ModeSet): Conjunto de modos
        program (MacroProgram): Programa validado
        rng (np.random.Generator): Gerador compartilhado por todos os estágios

    Returns:
        Tuple[MPLCModel, RunLog]: Modelo treinado e histórico

    Raises:
        MPLCError: Falha em um estágio; exc.run_log guarda os estágios concluídos
            e, para divergência, o histórico parcial do estágio que falhou
    """
    program.validate(model.n_masks, modeset.size)
    log = RunLog()
    logger.info(f"Executando programa {program.builtin or program.description!r} com {len(program.stages)} estágio(s)")
    for stage in program.stages:
        try:
            log.results.append(run_stage(model, modeset, stage, rng))
        except StageDivergedError as exc:
            if exc.result is not None:
                log.results.append(exc.result)
            exc.run_log = log
            logger.warning(f"Programa interrompido no estágio {stage.name}: {exc}")
            raise
        except MPLCError as exc:
            exc.run_log = log
            logger.warning(f"Programa interrompido no estágio {stage.name}: {exc}")
            raise
    return model, log


def with_learning_rate(program: MacroProgram, learning_rate: float) -> MacroProgram:
    stages = tuple(replace(stage, learning_rate=learning_rate) for stage in program.stages)
    return MacroProgram(stages=stages, seed=program.seed, description=program.description, builtin=program.builtin)


@dataclass
class SweepResult:
    """
    Resultado de uma varredura de taxas de aprendizado.

    Attributes:
        best_model (MPLCModel): Modelo com a menor perda
        best_learning_rate (float): γ correspondente
        best_log (RunLog): Histórico do melhor treino
        losses (Dict[float, float]): Perda final por γ (inf para treinos que falharam)
    """
    best_model: MPLCModel
    best_learning_rate: float
    best_log: RunLog
    losses: Dict[float, float]


def sweep_learning_rates(
    model: MPLCModel,
    modeset: ModeSet,
    program: MacroProgram,
    learning_rates: Sequence[float],
    seed: int,
) -> SweepResult:
    """
    Treina o mesmo modelo inicial com cada γ e mantém o de menor perda.

    Cada γ recebe um gerador novo com a mesma semente. Treinos que divergem
    são registrados com perda infinita e descartados.

    Args:
        model (MPLCModel): Modelo inicial (não é alterado)
        modeset (ModeSet): Conjunto de modos
        program (MacroProgram): Programa base
        learning_rates (Sequence[float]): Valores de γ
        seed (int): Semente dos lotes

    Returns:
        SweepResult: Melhor modelo e perdas por γ
    """
    if not learning_rates:
        raise MacroValidationError("a varredura precisa de pelo menos uma taxa de aprendizado", "learning_rates")
    best = None
    losses = {}
    for lr in learning_rates:
        candidate = model.copy()
        try:
            trained, log = run_program(candidate, modeset, with_learning_rate(program, lr), np.random.default_rng(seed))
        except StageDivergedError as exc:
            logger.warning(f"γ = {lr:g} descartado: {exc}")
            losses[float(lr)] = float("inf")
            continue
        loss, _ = dataset_loss(trained, modeset)
        losses[float(lr)] = loss
        logger.info(f"γ = {lr:g}: L = {loss:.6f}")
        if best is None or loss < best[0]:
            best = (loss, float(lr), trained, log)
    if best is None:
        raise StageDivergedError("todas as taxas de aprendizado da varredura divergiram")
    _, lr, trained, log = best
    return SweepResult(best_model=trained, best_learning_rate=lr, best_log=log, losses=losses)


def batch_size_study(
    model: MPLCModel,
    modeset: ModeSet,
    batch_sizes: Sequence[int],
    learning_rates: Sequence[float],
    seed: int,
    evaluate: Callable[[MPLCModel], Any],
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> Tuple[pd.DataFrame, Dict[int, MPLCModel]]:
    """
    Estudo do efeito do tamanho de lote: varredura de γ com a macro de lotes
    para cada B e avaliação do melhor modelo.

    Args:
        model (MPLCModel): Modelo inicial
        modeset (ModeSet): Conjunto de modos
        batch_sizes (Sequence[int]): Valores de B
        learning_rates (Sequence[float]): Valores de γ por B
        seed (int): Semente
        evaluate: Função (modelo) → EvalReport usada em cada melhor modelo
        tolerance (float): ε dos estágios
        max_iterations (int): Limite de iterações dos estágios

    Returns:
        Tuple[pd.DataFrame, Dict[int, MPLCModel]]: Tabela por B e melhores modelos
    """
    rows = []
    models = {}
    for batch_size in batch_sizes:
        program = build_program(
            {"builtin": "batch", "batch_size": int(batch_size), "tolerance": tolerance, "max_iterations": max_iterations},
            model.n_masks,
            modeset.size,
        )
        sweep = sweep_learning_rates(model, modeset, program, learning_rates, seed)
        report = evaluate(sweep.best_model)
        models[int(batch_size)] = sweep.best_model
        rows.append({
            "batch_size": int(batch_size),
            "learning_rate": sweep.best_learning_rate,
            "loss": report.loss,
            "mean_eta": float(np.mean(report.efficiencies)),
            "sharpness_mean": report.sharpness_mean,
            "sharpness_std": report.sharpness_std,
            "insertion_loss_db": report.insertion_loss_db,
            "tolerance_mean_db": report.tolerance_mean_db,
            "tolerance_std_db": report.tolerance_std_db,
            "iterations": sweep.best_log.summary()["iterations"],
        })
        logger.info(f"B = {batch_size}: melhor γ = {sweep.best_learning_rate:g}, L = {report.loss:.6f}")
    return pd.DataFrame(rows), models


__all__ = [
    "BUILTIN_MACROS",
    "MacroProgram",
    "RunLog",
    "Stage",
    "SweepResult",
    "batch_size_study",
    "build_program",
    "epoch_batches",
    "expand_builtin",
    "parse_macro",
    "run_program",
    "sweep_learning_rates",
]
