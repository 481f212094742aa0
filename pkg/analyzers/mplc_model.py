#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo do modelo MPLC: máscaras de fase em cascata separadas por propagação
no espaço livre, tratadas como camadas de uma rede neural física.
"""

import copy
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from utils.errors import GridMismatchError, TopologyMismatchError, ValidationError
from utils.grid_field import ComplexField, GridSpec
from utils.propagation import SpectralPropagator

logger = logging.getLogger(__name__)

FieldInput = Union[ComplexField, Sequence[ComplexField], np.ndarray]


@dataclass
class ForwardTrace:
    """
    Campos progressivos ε_i em cada máscara (antes da modulação) e a saída E_N.

    Attributes:
        eps (List[np.ndarray]): N pilhas (B, ny, nx); eps[i - 1] é ε_i
        output (np.ndarray): Pilha (B, ny, nx) com E_N
    """
    eps: List[np.ndarray]
    output: np.ndarray

    def __len__(self) -> int:
        return len(self.eps) + 1

    def mode(self, j: int) -> List[np.ndarray]:
        """Traço de um único modo: [ε_1, ..., ε_N, E_N]."""
        return [e[j] for e in self.eps] + [self.output[j]]


@dataclass
class BackwardTrace:
    """
    Campos adjuntos em cada máscara, do lado de saída da modulação.

    beta[i - 1] é o campo ξ_{i+1} da máscara i, tal que
    ⟨beta[i - 1], exp(iϕ_i)·ε_i⟩ = ⟨E_t, E_N⟩ para todo i.
    """
    beta: List[np.ndarray]

    def __len__(self) -> int:
        return len(self.beta)

    def mode(self, j: int) -> List[np.ndarray]:
        return [b[j] for b in self.beta]


class MPLCModel:
    """
    Conversor de luz multiplano: N máscaras de fase ϕ_i e N+1 distâncias z_i.

    Máscaras são indexadas de 1 a N e distâncias de 0 a N. As máscaras ficam
    sem enrolamento durante a otimização; o enrolamento em [−π, π) só ocorre
    na exportação.
    """

    def __init__(
        self,
        grid: GridSpec,
        masks: Sequence[np.ndarray],
        distances: Sequence[float],
        trainable_masks: Optional[Sequence[bool]] = None,
        trainable_distances: Optional[Sequence[bool]] = None,
        propagator: Optional[SpectralPropagator] = None,
    ):
        """
        Inicializa o modelo.

        Args:
            grid (GridSpec): Grade das máscaras
            masks (Sequence[np.ndarray]): Máscaras de fase (rad), formato (ny, nx)
            distances (Sequence[float]): Distâncias z_0..z_N em metros
            trainable_masks (Optional[Sequence[bool]]): Flags por máscara (padrão: todas)
            trainable_distances (Optional[Sequence[bool]]): Flags por distância (padrão: nenhuma)
            propagator (Optional[SpectralPropagator]): Propagador compartilhado
        """
        if len(masks) < 1:
            raise ValidationError("o modelo precisa de pelo menos uma máscara")
        if len(distances) != len(masks) + 1:
            raise ValidationError(f"{len(masks)} máscaras exigem {len(masks) + 1} distâncias, recebeu {len(distances)}")
        self.grid = grid
        self.masks = [np.array(m, dtype=np.float64) for m in masks]
        for i, mask in enumerate(self.masks, start=1):
            if mask.shape != grid.shape:
                raise GridMismatchError(f"máscara {i} com formato {mask.shape}, grade espera {grid.shape}")
        self.distances = [float(z) for z in distances]
        if any(not np.isfinite(z) or z < 0 for z in self.distances):
            raise ValidationError(f"distâncias devem ser finitas e ≥ 0: {self.distances}")

        n = len(self.masks)
        self.trainable_masks = list(trainable_masks) if trainable_masks is not None else [True] * n
        self.trainable_distances = list(trainable_distances) if trainable_distances is not None else [False] * (n + 1)
        if len(self.trainable_masks) != n or len(self.trainable_distances) != n + 1:
            raise ValidationError("flags de treino não correspondem à topologia do modelo")

        if propagator is not None and propagator.grid != grid:
            raise GridMismatchError("propagador em grade diferente do modelo")
        self.propagator = propagator if propagator is not None else SpectralPropagator(grid)

    @classmethod
    def zeros(cls, grid: GridSpec, n_masks: int, distances: Sequence[float], **kwargs) -> "MPLCModel":
        """
        Cria um modelo com todas as máscaras nulas (inicialização do artigo).
        """
        masks = [np.zeros(grid.shape) for _ in range(n_masks)]
        return cls(grid, masks, distances, **kwargs)

    @property
    def n_masks(self) -> int:
        return len(self.masks)

    def copy(self) -> "MPLCModel":
        """Cópia profunda dos parâmetros; o propagador é compartilhado."""
        clone = copy.copy(self)
        clone.masks = [m.copy() for m in self.masks]
        clone.distances = list(self.distances)
        clone.trainable_masks = list(self.trainable_masks)
        clone.trainable_distances = list(self.trainable_distances)
        return clone

    def set_trainable(self, masks: Iterable[int] = (), distances: Iterable[int] = ()) -> None:
        """
        Define o conjunto treinável: máscaras (1..N) e distâncias (0..N).
        """
        masks = set(masks)
        distances = set(distances)
        for i in masks:
            self._check_mask_index(i)
        for k in distances:
            self._check_distance_index(k)
        self.trainable_masks = [i in masks for i in range(1, self.n_masks + 1)]
        self.trainable_distances = [k in distances for k in range(self.n_masks + 1)]

    def trainable_mask_indices(self) -> List[int]:
        return [i for i, flag in enumerate(self.trainable_masks, start=1) if flag]

    def trainable_distance_indices(self) -> List[int]:
        return [k for k, flag in enumerate(self.trainable_distances) if flag]

    def _check_mask_index(self, i: int) -> None:
        if not 1 <= i <= self.n_masks:
            raise ValidationError(f"índice de máscara {i} fora de 1..{self.n_masks}")

    def _check_distance_index(self, k: int) -> None:
        if not 0 <= k <= self.n_masks:
            raise ValidationError(f"índice de distância {k} fora de 0..{self.n_masks}")

    def mask(self, i: int) -> np.ndarray:
        self._check_mask_index(i)
        return self.masks[i - 1]

    def set_mask(self, i: int, values: np.ndarray) -> None:
        self._check_mask_index(i)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"máscara com formato {values.shape}, grade espera {self.grid.shape}")
        self.masks[i - 1] = values.copy()

    def set_distance(self, k: int, z: float) -> None:
        """Atualiza z_k, limitando a z ≥ 0."""
        self._check_distance_index(k)
        self.distances[k] = max(0.0, float(z))

    def phase_factor(self, i: int) -> np.ndarray:
        return np.exp(1j * self.mask(i))

    def wrapped_masks(self) -> List[np.ndarray]:
        """Máscaras enroladas em [−π, π)."""
        return [wrap_phase(m) for m in self.masks]

    def round_to_float32(self) -> None:
        """
        Arredonda as máscaras para a precisão do formato em disco (float32).
        """
        self.masks = [m.astype(np.float32).astype(np.float64) for m in self.masks]

    def check_same_topology(self, other: "MPLCModel") -> None:
        if self.n_masks != other.n_masks or self.grid.shape != other.grid.shape:
            raise TopologyMismatchError(
                f"topologias diferentes: {self.n_masks}×{self.grid.shape} e {other.n_masks}×{other.grid.shape}"
            )

    def _as_stack(self, fields: FieldInput) -> np.ndarray:
        if isinstance(fields, ComplexField):
            if fields.grid != self.grid:
                raise GridMismatchError("campo em grade diferente do modelo")
            return fields.values[None]
        if isinstance(fields, np.ndarray):
            stack = fields if fields.ndim == 3 else fields[None]
        else:
            for fld in fields:
                if fld.grid != self.grid:
                    raise GridMismatchError("campo em grade diferente do modelo")
            stack = np.stack([fld.values for fld in fields])
        if stack.shape[-2:] != self.grid.shape:
            raise GridMismatchError(f"campos com formato {stack.shape[-2:]}, modelo espera {self.grid.shape}")
        return np.asarray(stack, dtype=np.complex128)

    def apply_layer(self, i: int, fld: ComplexField) -> ComplexField:
        """
        Camada W_i: propagação por z_{i−1} seguida da modulação exp(iϕ_i).

        Args:
            i (int): Índice da camada, 1..N
            fld (ComplexField): Campo de entrada

        Returns:
            ComplexField: Campo após a camada
        """
        self._check_mask_index(i)
        stack = self._as_stack(fld)
        out = self.phase_factor(i) * self.propagator.propagate_values(stack, self.distances[i - 1])
        return ComplexField(self.grid, out[0])

    def forward_values(self, stack: np.ndarray) -> np.ndarray:
        """
        Passo direto vetorizado sobre uma pilha de campos (B, ny, nx).
        """
        current = stack
        for i in range(1, self.n_masks + 1):
            current = self.propagator.propagate_values(current, self.distances[i - 1])
            current *= self.phase_factor(i)
        return self.propagator.propagate_values(current, self.distances[-1])

    def forward(self, e0: ComplexField) -> ComplexField:
        """
        Calcula E_N = W_{N+1} ∘ W_N ∘ … ∘ W_1 (E₀).

        Args:
            e0 (ComplexField): Campo de entrada

        Returns:
            ComplexField: Campo de saída
        """
        return ComplexField(self.grid, self.forward_values(self._as_stack(e0))[0])

    def forward_trace(self, e0: FieldInput) -> ForwardTrace:
        """
        Registra ε_i em cada máscara (após z_{i−1}, antes de ϕ_i) e a saída.

        Args:
            e0 (FieldInput): Campo, lista de campos ou pilha (B, ny, nx)

        Returns:
            ForwardTrace: Traço com N+1 entradas por modo
        """
        current = self._as_stack(e0)
        eps = []
        for i in range(1, self.n_masks + 1):
            current = self.propagator.propagate_values(current, self.distances[i - 1])
            eps.append(current)
            current = current * self.phase_factor(i)
        output = self.propagator.propagate_values(current, self.distances[-1])
        return ForwardTrace(eps=eps, output=output)

    def backward_trace(self, et: FieldInput) -> BackwardTrace:
        """
        Aplica as camadas conjugadas-transpostas ao alvo, da saída para a entrada.

        Args:
            et (FieldInput): Campo alvo, lista ou pilha (B, ny, nx)

        Returns:
            BackwardTrace: Campos adjuntos em cada máscara
        """
        current = self.propagator.adjoint_values(self._as_stack(et), self.distances[-1])
        beta = [current]
        for i in range(self.n_masks, 1, -1):
            current = self.propagator.adjoint_values(current * np.conj(self.phase_factor(i)), self.distances[i - 1])
            beta.append(current)
        beta.reverse()
        return BackwardTrace(beta=beta)


def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Enrola a fase em [−π, π)."""
    wrapped = np.mod(np.asarray(phase, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    # np.mod pode devolver exatamente 2π para valores negativos minúsculos
    return np.where(wrapped >= np.pi, wrapped - 2.0 * np.pi, wrapped)
