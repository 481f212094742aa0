#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo de otimizadores: ADAM sobre máscaras e distâncias, atualização de
casamento de frente de onda (WFM) e o laço de um estágio de treino.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from analyzers.gradients import GradientBundle, aggregate_gradients, dataset_loss, loss_and_grads
from analyzers.mplc_model import MPLCModel
from analyzers.stages import Stage, epoch_batches
from utils.errors import OptimizationError, StageDivergedError, ValidationError
from utils.grid_field import ModeSet

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Estágio falha se a perda subir acima deste múltiplo da melhor perda
DIVERGENCE_FACTOR = 10.0
# Abaixo desta perda anterior o critério de parada usa a variação absoluta
ABSOLUTE_LOSS_FLOOR = 1e-12


def adam_constants() -> Dict[str, float]:
    return {"beta1": ADAM_BETA1, "beta2": ADAM_BETA2, "epsilon": ADAM_EPSILON}


@dataclass
class AdamState:
    """
    Momentos do ADAM por parâmetro nomeado ("phi_i" para máscaras, "z_k" para distâncias).

    Attributes:
        learning_rate (float): γ
        distance_lr_scale (float): Multiplicador de γ para as distâncias (metros)
        t (int): Número de passos já aplicados
        m (Dict[str, np.ndarray]): Primeiro momento
        v (Dict[str, np.ndarray]): Segundo momento
    """
    learning_rate: float = 0.1
    distance_lr_scale: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step_size(self, name: str) -> float:
        if name.startswith("z_"):
            return self.learning_rate * self.distance_lr_scale
        return self.learning_rate


def adam_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """
    Aplica um passo do ADAM com correção de viés.

    Args:
        state (AdamState): Estado do otimizador, atualizado no lugar
        params (Dict[str, np.ndarray]): Valores atuais dos parâmetros
        grads (Dict[str, np.ndarray]): Gradientes com as mesmas chaves

    Returns:
        Dict[str, np.ndarray]: Novos valores dos parâmetros
    """
    if set(params) != set(grads):
        raise ValidationError("parâmetros e gradientes com chaves diferentes")
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise OptimizationError(f"gradiente não finito em {name}")

    state.t += 1
    updated = {}
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        if name not in state.m or state.m[name].shape != grad.shape:
            state.m[name] = np.zeros_like(grad)
            state.v[name] = np.zeros_like(grad)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad ** 2
        m_hat = state.m[name] / (1.0 - state.beta1 ** state.t)
        v_hat = state.v[name] / (1.0 - state.beta2 ** state.t)
        updated[name] = np.asarray(value, dtype=np.float64) - state.step_size(name) * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated


def apply_adam_update(
    model: MPLCModel,
    state: AdamState,
    bundle: GradientBundle,
    equal_distance_groups: Sequence[Sequence[int]] = (),
) -> None:
    """
    Atualiza o modelo no lugar a partir de um pacote de gradientes.

    Distâncias ficam limitadas a z ≥ 0. Em cada grupo de igualdade o gradiente
    é a média do grupo e todas as distâncias recebem a média após o passo.
    """
    if not bundle.is_finite():
        raise OptimizationError(f"gradiente não finito no lote {bundle.batch}")

    distance_grads = dict(bundle.distance_grads)
    for group in equal_distance_groups:
        shared = float(np.mean([distance_grads[k] for k in group]))
        for k in group:
            distance_grads[k] = shared

    params = {f"phi_{i}": model.mask(i) for i in bundle.phase_grads}
    grads = {f"phi_{i}": g for i, g in bundle.phase_grads.items()}
    params.update({f"z_{k}": np.asarray(model.distances[k]) for k in distance_grads})
    grads.update({f"z_{k}": np.asarray(g) for k, g in distance_grads.items()})

    updated = adam_step(state, params, grads)
    for i in bundle.phase_grads:
        model.set_mask(i, updated[f"phi_{i}"])
    for k in distance_grads:
        model.set_distance(k, float(updated[f"z_{k}"]))
    for group in equal_distance_groups:
        shared = float(np.mean([model.distances[k] for k in group]))
        for k in group:
            model.set_distance(k, shared)


def wfm_update(model: MPLCModel, modeset: ModeSet, i: int) -> np.ndarray:
    """
    Casamento de frente de onda para a máscara i: ϕ_i = −arg Σ_j conj(ξ_j)·ε_j.

    Pixels onde a soma é exatamente zero mantêm a fase anterior.

    Args:
        model (MPLCModel): Modelo (não é alterado)
        modeset (ModeSet): Conjunto de modos
        i (int): Máscara, 1..N

    Returns:
        np.ndarray: Nova fase da máscara i
    """
    model.mask(i)  # valida o índice
    eps = model.propagator.propagate_values(modeset.input_stack, model.distances[0])
    for k in range(1, i):
        eps = model.propagator.propagate_values(eps * model.phase_factor(k), model.distances[k])
    beta = model.propagator.adjoint_values(modeset.target_stack, model.distances[-1])
    for k in range(model.n_masks, i, -1):
        beta = model.propagator.adjoint_values(beta * np.conj(model.phase_factor(k)), model.distances[k - 1])
    return _matched_phase(np.sum(np.conj(beta) * eps, axis=0), model.mask(i))


def _matched_phase(correlation: np.ndarray, previous: np.ndarray) -> np.ndarray:
    return np.where(correlation == 0, previous, -np.angle(correlation))


def wfm_sweep(model: MPLCModel, modeset: ModeSet, masks: Optional[Sequence[int]] = None) -> None:
    """
    Uma varredura WFM: atualiza as máscaras em ordem crescente, no lugar.

    Os campos adjuntos dependem só das máscaras posteriores, ainda não
    atualizadas na varredura, e saem de um único traço reverso.
    """
    selected = set(masks) if masks is not None else set(range(1, model.n_masks + 1))
    beta = model.backward_trace(modeset.target_stack).beta
    current = modeset.input_stack
    for i in range(1, model.n_masks + 1):
        current = model.propagator.propagate_values(current, model.distances[i - 1])
        if i in selected:
            model.set_mask(i, _matched_phase(np.sum(np.conj(beta[i - 1]) * current, axis=0), model.mask(i)))
        current = current * model.phase_factor(i)


@dataclass
class StageResult:
    """
    Histórico de um estágio executado.

    Attributes:
        stage (Stage): Estágio
        losses (List[float]): Perda do conjunto completo após cada iteração
        mean_etas (List[float]): Eficiência média após cada iteração
        elapsed (List[float]): Tempo acumulado (s) após cada iteração
        initial_loss (float): Perda antes da primeira iteração
        stop_reason (str): "tolerance" ou "max-iterations"
    """
    stage: Stage
    losses: List[float] = field(default_factory=list)
    mean_etas: List[float] = field(default_factory=list)
    elapsed: List[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    stop_reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.losses)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else self.initial_loss


def _relative_change(loss: float, previous: float) -> float:
    if previous < ABSOLUTE_LOSS_FLOOR:
        return abs(loss - previous)
    return abs(loss - previous) / previous


def run_stage(model: MPLCModel, modeset: ModeSet, stage: Stage, rng: np.random.Generator) -> StageResult:
    """
    Executa um estágio até δL < ε ou até o limite de iterações.

    Cada iteração é uma época: ADAM percorre os lotes de uma permutação
    aleatória (um passo por lote, ou um passo com o gradiente agregado da
    época) e WFM faz uma varredura. A perda registrada é a do conjunto
    completo após a época.

    Args:
        model (MPLCModel): Modelo, atualizado no lugar
        modeset (ModeSet): Conjunto de modos
        stage (Stage): Estágio
        rng (np.random.Generator): Gerador dos lotes

    Returns:
        StageResult: Histórico do estágio

    Raises:
        StageDivergedError: Perda acima de 10× a melhor perda do estágio
        OptimizationError: Perda ou gradiente não finitos
    """
    stage.validate(model.n_masks, modeset.size, path=f"stage[{stage.name}]")
    model.set_trainable(stage.masks, stage.distances)
    state = AdamState(learning_rate=stage.learning_rate, distance_lr_scale=stage.distance_lr_scale)
    batch_size = stage.effective_batch_size(modeset.size)

    result = StageResult(stage=stage)
    result.initial_loss, _ = dataset_loss(model, modeset)
    previous = result.initial_loss
    best = previous
    start = time.perf_counter()
    logger.info(f"Estágio {stage.name}: {stage.method}, máscaras {list(stage.masks)}, "
                f"distâncias {list(stage.distances)}, B = {batch_size}, L₀ = {previous:.6f}")

    for iteration in range(1, stage.max_iterations + 1):
        if stage.method == "wfm-sweep":
            wfm_sweep(model, modeset, stage.masks)
        else:
            batches = epoch_batches(modeset.size, batch_size, rng)
            if stage.gradient_mode == "epoch-aggregate":
                bundles = [loss_and_grads(model, modeset, batch) for batch in batches]
                apply_adam_update(model, state, aggregate_gradients(bundles), stage.equal_distance_groups)
            else:
                for batch in batches:
                    apply_adam_update(model, state, loss_and_grads(model, modeset, batch), stage.equal_distance_groups)

        loss, eta = dataset_loss(model, modeset)
        if not np.isfinite(loss):
            raise OptimizationError(f"perda não finita no estágio {stage.name}, iteração {iteration}")
        result.losses.append(loss)
        result.mean_etas.append(float(np.mean(eta)))
        result.elapsed.append(time.perf_counter() - start)
        logger.debug(f"Estágio {stage.name}, iteração {iteration}: L = {loss:.6e}")

        best = min(best, loss)
        if best > 0 and loss > DIVERGENCE_FACTOR * best:
            result.stop_reason = "diverged"
            raise StageDivergedError(
                f"estágio {stage.name} divergiu: L = {loss:.4e} > {DIVERGENCE_FACTOR:g} × {best:.4e}",
                result=result,
            )

        delta = _relative_change(loss, previous)
        previous = loss
        if delta < stage.tolerance:
            result.stop_reason = "tolerance"
            break
    else:
        result.stop_reason = "max-iterations"

    logger.info(f"Estágio {stage.name} concluído após {result.iterations} iterações "
                f"({result.stop_reason}): L = {result.final_loss:.6f}")
    return result
