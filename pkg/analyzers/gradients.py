#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo para cálculo analítico (método adjunto) da perda e de seus gradientes
em relação às fases das máscaras e às distâncias entre planos.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from analyzers.mplc_model import MPLCModel
from utils.errors import ValidationError
from utils.grid_field import ModeSet
from utils.propagation import SpectralPropagator

logger = logging.getLogger(__name__)

# Modos avaliados por vez no cálculo da perda do conjunto completo
LOSS_CHUNK = 16


@dataclass
class GradientBundle:
    """
    Perda de um lote e gradientes dos parâmetros treináveis.

    Attributes:
        loss (float): L = 1 − média(η) sobre o lote
        overlaps (np.ndarray): Sobreposições o_j = ⟨E_N, E_t⟩ de cada modo do lote
        batch (List[int]): Índices dos modos (base 0)
        phase_grads (Dict[int, np.ndarray]): ∇_{ϕ_i}L por máscara treinável (1..N)
        distance_grads (Dict[int, float]): ∇_{z_k}L por distância treinável (0..N)
    """
    loss: float
    overlaps: np.ndarray
    batch: List[int]
    phase_grads: Dict[int, np.ndarray] = field(default_factory=dict)
    distance_grads: Dict[int, float] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.batch)

    @property
    def efficiencies(self) -> np.ndarray:
        return np.abs(self.overlaps) ** 2

    def is_finite(self) -> bool:
        if not np.isfinite(self.loss):
            return False
        if any(not np.all(np.isfinite(g)) for g in self.phase_grads.values()):
            return False
        return all(np.isfinite(g) for g in self.distance_grads.values())


def validate_batch(batch: Sequence[int], n_modes: int) -> np.ndarray:
    indices = np.asarray(list(batch), dtype=np.int64)
    if indices.size == 0:
        raise ValidationError("lote vazio")
    if np.any(indices < 0) or np.any(indices >= n_modes):
        raise ValidationError(f"índices de lote fora de 0..{n_modes - 1}: {indices.tolist()}")
    return indices


def overlaps_of(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Sobreposições ⟨E_N, E_t⟩ modo a modo para pilhas (B, ny, nx)."""
    return np.sum(np.conj(outputs) * targets, axis=(-2, -1))


def dataset_loss(model: MPLCModel, modeset: ModeSet, chunk: int = LOSS_CHUNK) -> Tuple[float, np.ndarray]:
    """
    Perda do conjunto completo L = (1/M) Σ (1 − η_j).

    Args:
        model (MPLCModel): Modelo
        modeset (ModeSet): Conjunto de modos
        chunk (int): Modos propagados por vez

    Returns:
        Tuple[float, np.ndarray]: Perda e eficiências η de cada modo
    """
    etas = []
    for start in range(0, modeset.size, chunk):
        stop = min(start + chunk, modeset.size)
        outputs = model.forward_values(modeset.input_stack[start:stop])
        etas.append(np.abs(overlaps_of(outputs, modeset.target_stack[start:stop])) ** 2)
    eta = np.concatenate(etas)
    return float(1.0 - np.mean(eta)), eta


def _distance_gradient(
    propagator: SpectralPropagator,
    before: np.ndarray,
    adjoint: np.ndarray,
    z: float,
    overlaps: np.ndarray,
) -> float:
    # o = ⟨P(z)·before, adjoint⟩, logo ∂o/∂z = (1/N) Σ_k conj(H'(z)·F before)·F adjoint
    spectrum_before = propagator.spectrum(before) * propagator.transfer_derivative(z)
    spectrum_adjoint = propagator.spectrum(adjoint)
    d_overlap = np.sum(np.conj(spectrum_before) * spectrum_adjoint, axis=(-2, -1)) / propagator.n_spectral
    d_eta = 2.0 * np.real(np.conj(overlaps) * d_overlap)
    return float(-np.mean(d_eta))


def loss_and_grads(model: MPLCModel, modeset: ModeSet, batch: Sequence[int]) -> GradientBundle:
    """
    Perda de um lote e gradientes analíticos dos parâmetros treináveis do modelo.

    Um traço direto e um traço adjunto por modo; apenas parâmetros marcados
    como treináveis recebem gradiente.

    Args:
        model (MPLCModel): Modelo com flags de treino definidas
        modeset (ModeSet): Conjunto de modos
        batch (Sequence[int]): Índices dos modos do lote (base 0)

    Returns:
        GradientBundle: Perda, sobreposições e gradientes
    """
    if modeset.grid.shape != model.grid.shape:
        raise ValidationError("conjunto de modos e modelo em grades diferentes")
    indices = validate_batch(batch, modeset.size)
    e0 = modeset.input_stack[indices]
    et = modeset.target_stack[indices]
    size = len(indices)
    n = model.n_masks
    propagator = model.propagator

    trace = model.forward_trace(e0)
    overlaps = overlaps_of(trace.output, et)
    loss = float(1.0 - np.mean(np.abs(overlaps) ** 2))
    bundle = GradientBundle(loss=loss, overlaps=overlaps, batch=indices.tolist())

    masks = set(model.trainable_mask_indices())
    distances = set(model.trainable_distance_indices())
    if not masks and not distances:
        return bundle

    # Plano mais próximo da entrada que ainda precisa do campo adjunto
    lowest = min([i for i in masks] + [k + 1 for k in distances])
    weights = overlaps[:, None, None]

    if n in distances:
        last = trace.eps[n - 1] * model.phase_factor(n)
        bundle.distance_grads[n] = _distance_gradient(propagator, last, et, model.distances[n], overlaps)

    beta = propagator.adjoint_values(et, model.distances[n])
    for i in range(n, lowest - 1, -1):
        phase = model.phase_factor(i)
        if i in masks:
            # Contribuição de cada pixel para conj(o): ξ·exp(iϕ_i)·ε_i
            contribution = np.conj(beta) * phase * trace.eps[i - 1]
            bundle.phase_grads[i] = (2.0 / size) * np.sum(np.imag(weights * contribution), axis=0)
        if i == lowest and (i - 1) not in distances:
            break
        adjoint = beta * np.conj(phase)
        if (i - 1) in distances:
            before = e0 if i == 1 else trace.eps[i - 2] * model.phase_factor(i - 1)
            bundle.distance_grads[i - 1] = _distance_gradient(propagator, before, adjoint, model.distances[i - 1], overlaps)
        if i > lowest:
            beta = propagator.adjoint_values(adjoint, model.distances[i - 1])

    logger.debug(f"Lote {bundle.batch}: L = {loss:.6e}")
    return bundle


def aggregate_gradients(bundles: Sequence[GradientBundle], mode_counts: Optional[Sequence[int]] = None) -> GradientBundle:
    """
    Agrega gradientes parciais de lotes em um gradiente único.

    A soma é ponderada pelo número de modos de cada lote, de modo que agregar
    uma partição completa de uma época reproduz o gradiente do conjunto completo.

    Args:
        bundles (Sequence[GradientBundle]): Gradientes parciais
        mode_counts (Optional[Sequence[int]]): Modos por lote (padrão: tamanho de cada lote)

    Returns:
        GradientBundle: Gradiente agregado
    """
    if not bundles:
        raise ValidationError("nenhum gradiente para agregar")
    counts = np.asarray(mode_counts if mode_counts is not None else [b.size for b in bundles], dtype=np.float64)
    if counts.size != len(bundles) or np.any(counts <= 0):
        raise ValidationError("contagens de modos inválidas para a agregação")
    weights = counts / counts.sum()

    first = bundles[0]
    for other in bundles[1:]:
        if set(other.phase_grads) != set(first.phase_grads) or set(other.distance_grads) != set(first.distance_grads):
            raise ValidationError("gradientes parciais com parâmetros treináveis diferentes")
        for i, grad in other.phase_grads.items():
            if grad.shape != first.phase_grads[i].shape:
                raise ValidationError(f"gradiente da máscara {i} com formatos diferentes")

    phase_grads = {i: sum(w * b.phase_grads[i] for w, b in zip(weights, bundles)) for i in first.phase_grads}
    distance_grads = {k: float(sum(w * b.distance_grads[k] for w, b in zip(weights, bundles))) for k in first.distance_grads}
    return GradientBundle(
        loss=float(sum(w * b.loss for w, b in zip(weights, bundles))),
        overlaps=np.concatenate([b.overlaps for b in bundles]),
        batch=[j for b in bundles for j in b.batch],
        phase_grads=phase_grads,
        distance_grads=distance_grads,
    )
