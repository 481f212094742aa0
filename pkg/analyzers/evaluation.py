#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo de avaliação de projetos MPLC: eficiência de acoplamento, perda,
matriz de crosstalk, perda de inserção, nitidez e tolerância óptica.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import eigvalsh

from analyzers.mplc_model import MPLCModel
from utils.errors import GridMismatchError, ValidationError
from utils.grid_field import ComplexField, ModeSet, inner_product

logger = logging.getLogger(__name__)

DEFAULT_DELTA_PHI = 0.05
DEFAULT_INSTANCES = 10

# Tolerância de normalização aceita na entrada de coupling_efficiency
INPUT_NORMALIZATION_TOLERANCE = 1e-8

# Piso de potência para o mapa em dB
POWER_DB_FLOOR = 1e-12

# Modos propagados por vez na montagem da matriz de transferência
CROSSTALK_CHUNK = 16


@dataclass(eq=False)
class CrosstalkMatrix:
    """
    Matriz de transferência complexa h_jk = ⟨E_t^(j), forward(E₀^(k))⟩.

    Linhas indexam o alvo j e colunas a entrada k.
    """
    transfer: np.ndarray
    labels: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.transfer.shape[0]

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.transfer) ** 2

    @property
    def efficiencies(self) -> np.ndarray:
        """η_j = |h_jj|², igual a |⟨E_N^(j), E_t^(j)⟩|²."""
        return np.abs(np.diag(self.transfer)) ** 2

    def column_power_sums(self) -> np.ndarray:
        return self.power.sum(axis=0)

    def power_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.power, POWER_DB_FLOOR))

    def eigenvalues(self) -> np.ndarray:
        """Autovalores de H†H em ordem decrescente."""
        gram = self.transfer.conj().T @ self.transfer
        # Simetriza para eliminar resíduos de arredondamento
        gram = 0.5 * (gram + gram.conj().T)
        return eigvalsh(gram)[::-1]

    def to_frame(self) -> pd.DataFrame:
        """
        Tabela com partes real e imaginária intercaladas por coluna de entrada.
        """
        columns = {}
        for k in range(self.size):
            columns[f"in{k}_re"] = self.transfer[:, k].real
            columns[f"in{k}_im"] = self.transfer[:, k].imag
        frame = pd.DataFrame(columns)
        frame.index = [f"out{j}" for j in range(self.size)]
        frame.index.name = "target"
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "CrosstalkMatrix":
        size = frame.shape[0]
        transfer = np.empty((size, size), dtype=np.complex128)
        for k in range(size):
            transfer[:, k] = frame[f"in{k}_re"].to_numpy() + 1j * frame[f"in{k}_im"].to_numpy()
        return cls(transfer=transfer)


@dataclass
class EvalReport:
    """
    Métricas de um projeto.

    Attributes:
        efficiencies (np.ndarray): η por modo
        loss (float): L = 1 − média(η)
        sharpness_mean (float): Média de δL sobre K instâncias
        sharpness_std (float): Desvio padrão de δL
        insertion_loss_db (float): IL (dB)
        tolerance_mean_db (float): Média de δIL (dB)
        tolerance_std_db (float): Desvio padrão de δIL (dB)
        instances (int): K
        delta_phi (float): δΦ (rad)
        seed (int): Semente das perturbações
    """
    efficiencies: np.ndarray
    loss: float
    sharpness_mean: float
    sharpness_std: float
    insertion_loss_db: float
    tolerance_mean_db: float
    tolerance_std_db: float
    instances: int
    delta_phi: float
    seed: int
    labels: List[Tuple[int, int]] = field(default_factory=list)
    crosstalk: Optional[CrosstalkMatrix] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "efficiencies": [float(e) for e in self.efficiencies],
            "mean_efficiency": float(np.mean(self.efficiencies)),
            "labels": [list(mn) for mn in self.labels],
            "loss": self.loss,
            "sharpness": {"mean": self.sharpness_mean, "std": self.sharpness_std},
            "insertion_loss_db": self.insertion_loss_db,
            "optical_tolerance_db": {"mean": self.tolerance_mean_db, "std": self.tolerance_std_db},
            "instances": self.instances,
            "delta_phi_rad": self.delta_phi,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        return cls(
            efficiencies=np.asarray(data["efficiencies"], dtype=np.float64),
            loss=float(data["loss"]),
            sharpness_mean=float(data["sharpness"]["mean"]),
            sharpness_std=float(data["sharpness"]["std"]),
            insertion_loss_db=float(data["insertion_loss_db"]),
            tolerance_mean_db=float(data["optical_tolerance_db"]["mean"]),
            tolerance_std_db=float(data["optical_tolerance_db"]["std"]),
            instances=int(data["instances"]),
            delta_phi=float(data["delta_phi_rad"]),
            seed=int(data["seed"]),
            labels=[tuple(mn) for mn in data.get("labels", [])],
        )


def _check_normalized(fld: ComplexField, name: str) -> None:
    power = fld.power()
    if abs(power - 1.0) > INPUT_NORMALIZATION_TOLERANCE:
        raise ValidationError(f"{name} não está normalizado (⟨E,E⟩ = {power:.6g}); normalize antes de avaliar")


def coupling_efficiency(model: MPLCModel, e0: ComplexField, et: ComplexField) -> float:
    """
    Eficiência de acoplamento η = |⟨E_N, E_t⟩|².

    Args:
        model (MPLCModel): Modelo
        e0 (ComplexField): Campo de entrada normalizado
        et (ComplexField): Campo alvo normalizado

    Returns:
        float: η em [0, 1]
    """
    _check_normalized(e0, "campo de entrada")
    _check_normalized(et, "campo alvo")
    return abs(inner_product(model.forward(e0), et)) ** 2


def crosstalk_matrix(model: MPLCModel, modeset: ModeSet, chunk: int = CROSSTALK_CHUNK) -> CrosstalkMatrix:
    """
    Monta a matriz de transferência com M passos diretos.

    Args:
        model (MPLCModel): Modelo
        modeset (ModeSet): Conjunto de modos
        chunk (int): Modos propagados por vez

    Returns:
        CrosstalkMatrix: h_jk = ⟨E_t^(j), forward(E₀^(k))⟩
    """
    if modeset.grid.shape != model.grid.shape:
        raise GridMismatchError("conjunto de modos e modelo em grades diferentes")
    m = modeset.size
    targets = modeset.target_stack.reshape(m, -1)
    transfer = np.empty((m, m), dtype=np.complex128)
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        outputs = model.forward_values(modeset.input_stack[start:stop]).reshape(stop - start, -1)
        transfer[:, start:stop] = targets.conj() @ outputs.T
    return CrosstalkMatrix(transfer=transfer, labels=list(modeset.labels))


def insertion_loss(ct: CrosstalkMatrix) -> float:
    """
    Perda de inserção IL = −10·log₁₀(média dos autovalores de H†H).

    Args:
        ct (CrosstalkMatrix): Matriz de transferência

    Returns:
        float: IL em dB; +inf para a matriz nula
    """
    mean_eigenvalue = float(np.mean(ct.eigenvalues()))
    if mean_eigenvalue <= 0.0:
        return float("inf")
    return -10.0 * np.log10(mean_eigenvalue)


def perturbation_seeds(rng: np.random.Generator, instances: int) -> List[int]:
    """
    Sementes das K instâncias de perturbação, sorteadas do gerador principal.
    """
    if instances < 1:
        raise ValidationError(f"K deve ser ≥ 1, recebeu {instances}")
    return [int(s) for s in rng.integers(0, 2 ** 63 - 1, size=instances)]


def perturbed_model(model: MPLCModel, delta_phi: float, seed: int) -> MPLCModel:
    """
    Cópia do modelo com cada pixel de cada máscara somado a U[−δΦ, δΦ] independente.
    """
    if delta_phi < 0:
        raise ValidationError(f"δΦ deve ser ≥ 0, recebeu {delta_phi}")
    clone = model.copy()
    if delta_phi == 0:
        return clone
    rng = np.random.default_rng(seed)
    for i in range(1, model.n_masks + 1):
        clone.set_mask(i, model.mask(i) + rng.uniform(-delta_phi, delta_phi, size=model.grid.shape))
    return clone


def _instance_metrics(model: MPLCModel, modeset: ModeSet, delta_phi: float, seed: int) -> Tuple[float, float]:
    ct = crosstalk_matrix(perturbed_model(model, delta_phi, seed), modeset)
    return 1.0 - float(np.mean(ct.efficiencies)), insertion_loss(ct)


def _perturbed_metrics(
    model: MPLCModel,
    modeset: ModeSet,
    delta_phi: float,
    seeds: List[int],
    workers: int = 1,
) -> List[Tuple[float, float]]:
    # Instâncias avaliadas em paralelo; map preserva a ordem da redução
    if workers <= 1 or len(seeds) == 1:
        return [_instance_metrics(model, modeset, delta_phi, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: _instance_metrics(model, modeset, delta_phi, s), seeds))


def _mean_std(values: List[float]) -> Tuple[float, float]:
    array = np.asarray(values, dtype=np.float64)
    return float(np.mean(array)), float(np.std(array))


def sharpness(
    model: MPLCModel,
    modeset: ModeSet,
    delta_phi: float = DEFAULT_DELTA_PHI,
    instances: int = DEFAULT_INSTANCES,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """
    Nitidez δL_k = |L_{Φ+δΦ_k} − L_Φ| / (1 + |L_Φ|), média e desvio sobre K instâncias.

    Args:
        model (MPLCModel): Modelo
        modeset (ModeSet): Conjunto de modos
        delta_phi (float): Amplitude δΦ da perturbação uniforme (rad)
        instances (int): K
        rng (Optional[np.random.Generator]): Gerador das perturbações

    Returns:
        Tuple[float, float]: (média, desvio padrão)
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    seeds = perturbation_seeds(rng, instances)
    if delta_phi == 0:
        return 0.0, 0.0
    base = 1.0 - float(np.mean(crosstalk_matrix(model, modeset).efficiencies))
    metrics = _perturbed_metrics(model, modeset, delta_phi, seeds)
    return _mean_std([abs(loss - base) / (1.0 + abs(base)) for loss, _ in metrics])


def optical_tolerance(
    model: MPLCModel,
    modeset: ModeSet,
    delta_phi: float = DEFAULT_DELTA_PHI,
    instances: int = DEFAULT_INSTANCES,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """
    Tolerância óptica δIL_k = |IL_{Φ+δΦ_k} − IL_Φ| em dB, média e desvio sobre K instâncias.

    Args:
        model (MPLCModel): Modelo
        modeset (ModeSet): Conjunto de modos
        delta_phi (float): Amplitude δΦ da perturbação uniforme (rad)
        instances (int): K
        rng (Optional[np.random.Generator]): Gerador das perturbações

    Returns:
        Tuple[float, float]: (média, desvio padrão) em dB
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    seeds = perturbation_seeds(rng, instances)
    if delta_phi == 0:
        return 0.0, 0.0
    base = insertion_loss(crosstalk_matrix(model, modeset))
    metrics = _perturbed_metrics(model, modeset, delta_phi, seeds)
    return _mean_std([abs(il - base) for _, il in metrics])


class MPLCEvaluator:
    """
    Classe para avaliar um projeto MPLC completo sobre um conjunto de modos.

    As mesmas K perturbações alimentam a nitidez e a tolerância óptica.
    """

    def __init__(
        self,
        model: MPLCModel,
        modeset: ModeSet,
        delta_phi: float = DEFAULT_DELTA_PHI,
        instances: int = DEFAULT_INSTANCES,
        seed: int = 0,
        workers: int = 1,
    ):
        """
        Inicializa o avaliador.

        Args:
            model (MPLCModel): Modelo
            modeset (ModeSet): Conjunto de modos
            delta_phi (float): δΦ (rad)
            instances (int): K
            seed (int): Semente das perturbações
            workers (int): Instâncias avaliadas em paralelo
        """
        if delta_phi < 0:
            raise ValidationError(f"δΦ deve ser ≥ 0, recebeu {delta_phi}")
        if instances < 1:
            raise ValidationError(f"K deve ser ≥ 1, recebeu {instances}")
        self.model = model
        self.modeset = modeset
        self.delta_phi = float(delta_phi)
        self.instances = int(instances)
        self.seed = int(seed)
        self.workers = max(1, int(workers))

    def analyze_transfer(self) -> CrosstalkMatrix:
        return crosstalk_matrix(self.model, self.modeset)

    def analyze_perturbations(self, base_loss: float, base_il: float) -> Dict[str, Tuple[float, float]]:
        """
        Avalia as K instâncias perturbadas uma única vez para δL e δIL.

        Returns:
            Dict[str, Tuple[float, float]]: "sharpness" e "tolerance" como (média, desvio)
        """
        seeds = perturbation_seeds(np.random.default_rng(self.seed), self.instances)
        if self.delta_phi == 0:
            return {"sharpness": (0.0, 0.0), "tolerance": (0.0, 0.0)}
        metrics = _perturbed_metrics(self.model, self.modeset, self.delta_phi, seeds, self.workers)
        return {
            "sharpness": _mean_std([abs(loss - base_loss) / (1.0 + abs(base_loss)) for loss, _ in metrics]),
            "tolerance": _mean_std([abs(il - base_il) for _, il in metrics]),
        }

    def run_complete_analysis(self) -> EvalReport:
        """
        Executa a avaliação completa.

        Returns:
            EvalReport: Relatório com todas as métricas
        """
        ct = self.analyze_transfer()
        efficiencies = ct.efficiencies
        loss = 1.0 - float(np.mean(efficiencies))
        il = insertion_loss(ct)
        perturbations = self.analyze_perturbations(loss, il)
        report = EvalReport(
            efficiencies=efficiencies,
            loss=loss,
            sharpness_mean=perturbations["sharpness"][0],
            sharpness_std=perturbations["sharpness"][1],
            insertion_loss_db=il,
            tolerance_mean_db=perturbations["tolerance"][0],
            tolerance_std_db=perturbations["tolerance"][1],
            instances=self.instances,
            delta_phi=self.delta_phi,
            seed=self.seed,
            labels=list(self.modeset.labels),
            crosstalk=ct,
        )
        logger.info(f"Avaliação: η médio = {np.mean(efficiencies):.4f}, L = {loss:.6f}, IL = {il:.4f} dB, "
                    f"δL = {report.sharpness_mean:.3e} ± {report.sharpness_std:.1e}, "
                    f"δIL = {report.tolerance_mean_db:.3e} ± {report.tolerance_std_db:.1e} dB")
        return report
