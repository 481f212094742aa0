#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Estágios de treino e amostragem de lotes por época.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from utils.errors import MacroValidationError, ValidationError

METHODS = ("adam", "wfm-sweep")
GRADIENT_MODES = ("per-batch-update", "epoch-aggregate")

DEFAULT_LEARNING_RATE = 0.1
# Passo das distâncias: γ_z = γ × 1 mm por unidade de gradiente normalizado
DEFAULT_DISTANCE_LR_SCALE = 1e-3
DEFAULT_TOLERANCE = 1e-3
DEFAULT_MAX_ITERATIONS = 10_000


@dataclass(frozen=True)
class Stage:
    """
    Um estágio de treino: parâmetros treináveis, método, lote e critério de parada.

    Attributes:
        name (str): Rótulo usado em logs e no CSV de convergência
        masks (Tuple[int, ...]): Máscaras treináveis (1..N)
        distances (Tuple[int, ...]): Distâncias treináveis (0..N)
        method (str): "adam" ou "wfm-sweep"
        batch_size (Optional[int]): Tamanho do lote B; None usa o conjunto completo
        learning_rate (float): γ do ADAM
        distance_lr_scale (float): Escala do passo das distâncias (metros)
        tolerance (float): ε da variação relativa da perda
        max_iterations (int): Limite de iterações
        gradient_mode (str): "per-batch-update" ou "epoch-aggregate"
        equal_distance_groups (Tuple[Tuple[int, ...], ...]): Grupos de distâncias mantidas iguais
    """
    name: str = "stage"
    masks: Tuple[int, ...] = ()
    distances: Tuple[int, ...] = ()
    method: str = "adam"
    batch_size: Optional[int] = None
    learning_rate: float = DEFAULT_LEARNING_RATE
    distance_lr_scale: float = DEFAULT_DISTANCE_LR_SCALE
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    gradient_mode: str = "per-batch-update"
    equal_distance_groups: Tuple[Tuple[int, ...], ...] = field(default_factory=tuple)

    def effective_batch_size(self, n_modes: int) -> int:
        return n_modes if self.batch_size is None else self.batch_size

    def validate(self, n_masks: int, n_modes: int, path: str = "stage") -> None:
        """
        Verifica o estágio contra a topologia do modelo e o número de modos.

        Args:
            n_masks (int): N
            n_modes (int): M
            path (str): Prefixo do caminho do campo nas mensagens de erro
        """
        if self.method not in METHODS:
            raise MacroValidationError(f"método desconhecido {self.method!r}; use um de {METHODS}", f"{path}.method")
        if self.gradient_mode not in GRADIENT_MODES:
            raise MacroValidationError(
                f"modo de gradiente desconhecido {self.gradient_mode!r}; use um de {GRADIENT_MODES}",
                f"{path}.gradient_mode",
            )
        if not self.masks and not self.distances:
            raise MacroValidationError("o conjunto treinável está vazio", f"{path}.masks")
        for i in self.masks:
            if not 1 <= i <= n_masks:
                raise MacroValidationError(f"máscara {i} fora de 1..{n_masks}", f"{path}.masks")
        for k in self.distances:
            if not 0 <= k <= n_masks:
                raise MacroValidationError(f"distância {k} fora de 0..{n_masks}", f"{path}.distances")
        if self.method == "wfm-sweep" and self.distances:
            raise MacroValidationError("varreduras WFM atualizam apenas máscaras", f"{path}.distances")
        if self.batch_size is not None and not 1 <= self.batch_size <= n_modes:
            raise MacroValidationError(f"tamanho de lote {self.batch_size} fora de 1..{n_modes}", f"{path}.batch_size")
        if not self.tolerance > 0:
            raise MacroValidationError("a tolerância deve ser positiva", f"{path}.tolerance")
        if self.max_iterations is None or self.max_iterations < 1:
            raise MacroValidationError("max_iterations deve ser ≥ 1", f"{path}.max_iterations")
        if not self.learning_rate > 0 or not self.distance_lr_scale > 0:
            raise MacroValidationError("taxas de aprendizado devem ser positivas", f"{path}.learning_rate")
        for g, group in enumerate(self.equal_distance_groups):
            if len(group) < 2:
                raise MacroValidationError("grupos de igualdade precisam de pelo menos 2 distâncias",
                                           f"{path}.equal_distance_groups[{g}]")
            for k in group:
                if k not in self.distances:
                    raise MacroValidationError(f"distância {k} do grupo não é treinável neste estágio",
                                               f"{path}.equal_distance_groups[{g}]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "masks": list(self.masks),
            "distances": list(self.distances),
            "method": self.method,
            "batch_size": "full" if self.batch_size is None else self.batch_size,
            "learning_rate": self.learning_rate,
            "distance_lr_scale_mm": self.distance_lr_scale * 1e3,
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "gradient_mode": self.gradient_mode,
            "equal_distance_groups": [list(g) for g in self.equal_distance_groups],
        }


def epoch_batches(n_modes: int, batch_size: int, rng: np.random.Generator) -> List[List[int]]:
    """
    Particiona uma permutação aleatória de 0..M−1 em ceil(M/B) lotes consecutivos.

    O último lote pode ser menor. Os índices de cada lote saem ordenados, o
    que fixa a ordem de redução sem alterar a composição dos lotes.

    Args:
        n_modes (int): M
        batch_size (int): B
        rng (np.random.Generator): Gerador de números aleatórios

    Returns:
        List[List[int]]: Lotes da época
    """
    if not 1 <= batch_size <= n_modes:
        raise ValidationError(f"tamanho de lote {batch_size} fora de 1..{n_modes}")
    permutation = rng.permutation(n_modes)
    n_batches = -(-n_modes // batch_size)
    return [sorted(permutation[k * batch_size:(k + 1) * batch_size].tolist()) for k in range(n_batches)]
