#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo para geometria da grade, construção de campos ópticos complexos e
métricas elementares entre campos e máscaras de fase.
"""

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Any

import numpy as np

from utils.errors import (
    ClippingWarning,
    ConfigurationError,
    DegenerateFieldError,
    GridMismatchError,
    UnderResolvedWarning,
    ValidationError,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-12

# Fração máxima de potência que pode ficar fora da grade
CLIPPING_THRESHOLD = 1e-3

ORDERINGS = ("raster", "reverse")


@dataclass(frozen=True)
class GridSpec:
    """
    Grade uniforme onde vivem campos e máscaras.

    Os arrays têm formato (ny, nx): linhas ao longo de y, colunas ao longo de x.
    A origem fica no pixel (ny // 2, nx // 2).

    Attributes:
        nx (int): Número de pixels em x
        ny (int): Número de pixels em y
        pitch (float): Tamanho do pixel em metros
        wavelength (float): Comprimento de onda no vácuo em metros
    """
    nx: int
    ny: int
    pitch: float
    wavelength: float = 1550e-9

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError(f"a grade precisa de pelo menos 2×2 pixels, recebeu {self.nx}×{self.ny}", "grid")
        if not self.pitch > 0:
            raise ConfigurationError(f"pitch deve ser positivo, recebeu {self.pitch}", "grid.pitch")
        if not self.wavelength > 0:
            raise ConfigurationError(f"comprimento de onda deve ser positivo, recebeu {self.wavelength}", "grid.wavelength")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    @property
    def k0(self) -> float:
        """Número de onda no vácuo 2π/λ (rad/m)."""
        return 2.0 * np.pi / self.wavelength

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.pitch

    @cached_property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.pitch

    @cached_property
    def kx(self) -> np.ndarray:
        """Frequências espaciais em x (rad/m), na ordem da DFT."""
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.pitch)

    @cached_property
    def ky(self) -> np.ndarray:
        """Frequências espaciais em y (rad/m), na ordem da DFT."""
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.pitch)

    def meshgrid(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    @property
    def half_extent_x(self) -> float:
        return self.nx * self.pitch / 2.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "pitch_um": self.pitch * 1e6,
            "wavelength_nm": self.wavelength * 1e9,
        }


@dataclass(frozen=True, eq=False)
class ComplexField:
    """
    Campo escalar complexo discretizado sobre uma grade.

    Attributes:
        grid (GridSpec): Grade do campo
        values (np.ndarray): Amplitudes complexas, formato (ny, nx)
        normalized (bool): Indica se o campo foi normalizado
    """
    grid: GridSpec
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"valores com formato {values.shape}, grade espera {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("o campo contém valores não finitos")
        object.__setattr__(self, "values", values)
        if self.normalized:
            power = float(np.sum(np.abs(values) ** 2))
            if abs(power - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValidationError(f"campo marcado como normalizado tem potência {power!r}")

    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))

    def scaled(self, factor: complex) -> "ComplexField":
        return ComplexField(self.grid, self.values * factor)


@dataclass(eq=False)
class ModeSet:
    """
    Conjunto de treino: M pares de campos de entrada e alvo normalizados.

    Attributes:
        grid (GridSpec): Grade compartilhada
        inputs (List[ComplexField]): Campos de entrada E₀
        targets (List[ComplexField]): Campos alvo E_t
        labels (List[Tuple[int, int]]): Índices (m, n) do modo alvo de cada par
        spot_centers (List[Tuple[float, float]]): Centros dos spots de entrada
    """
    grid: GridSpec
    inputs: List[ComplexField]
    targets: List[ComplexField]
    labels: List[Tuple[int, int]] = field(default_factory=list)
    spot_centers: List[Tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise ValidationError(f"{len(self.inputs)} entradas para {len(self.targets)} alvos")
        if not self.inputs:
            raise ValidationError("o conjunto de modos precisa de pelo menos um par")
        for fld in list(self.inputs) + list(self.targets):
            if fld.grid != self.grid:
                raise GridMismatchError("todos os campos do conjunto devem compartilhar a mesma grade")
            if abs(fld.power() - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValidationError("todos os campos do conjunto devem estar normalizados")

    @property
    def size(self) -> int:
        return len(self.inputs)

    @cached_property
    def input_stack(self) -> np.ndarray:
        """Entradas empilhadas, formato (M, ny, nx)."""
        return np.stack([f.values for f in self.inputs])

    @cached_property
    def target_stack(self) -> np.ndarray:
        """Alvos empilhados, formato (M, ny, nx)."""
        return np.stack([f.values for f in self.targets])


def check_same_grid(a: ComplexField, b: ComplexField) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grades diferentes: {a.grid} e {b.grid}")


def inner_product(a: ComplexField, b: ComplexField) -> complex:
    """
    Produto interno discreto ⟨a, b⟩ = Σ conj(a)·b, sem elemento de área.

    Args:
        a (ComplexField): Campo conjugado
        b (ComplexField): Segundo campo

    Returns:
        complex: Sobreposição entre os campos
    """
    check_same_grid(a, b)
    return complex(np.vdot(a.values, b.values))


def normalize(fld: ComplexField) -> ComplexField:
    """
    Normaliza o campo para potência unitária.

    Args:
        fld (ComplexField): Campo de entrada

    Returns:
        ComplexField: Campo proporcional ao original com ⟨E, E⟩ = 1
    """
    power = fld.power()
    if power == 0.0:
        raise DegenerateFieldError("não é possível normalizar um campo nulo")
    values = fld.values / np.sqrt(power)
    # Uma segunda passada corrige o arredondamento residual da primeira
    values = values / np.sqrt(np.sum(np.abs(values) ** 2))
    return ComplexField(fld.grid, values, normalized=True)


def _check_center(grid: GridSpec, center: Tuple[float, float]) -> None:
    x0, y0 = center
    if not (grid.x[0] <= x0 <= grid.x[-1] and grid.y[0] <= y0 <= grid.y[-1]):
        raise ConfigurationError(f"centro {center} fora da extensão da grade", "center")


def _warn_under_resolved(grid: GridSpec, waist: float) -> None:
    if waist < 2.0 * grid.pitch:
        message = f"cintura {waist:.3e} m menor que 2 pixels ({2 * grid.pitch:.3e} m)"
        logger.warning(message)
        warnings.warn(message, UnderResolvedWarning, stacklevel=3)


def hermite_polynomial(order: int, x: np.ndarray) -> np.ndarray:
    """
    Polinômio de Hermite físico H_n(x) pela recorrência de três termos.
    """
    h_prev = np.ones_like(x)
    if order == 0:
        return h_prev
    h = 2.0 * x
    for k in range(1, order):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h


def _hg_profile_1d(coords: np.ndarray, order: int, waist: float, center: float) -> np.ndarray:
    u = coords - center
    return hermite_polynomial(order, np.sqrt(2.0) * u / waist) * np.exp(-(u ** 2) / waist ** 2)


def _clipped_fraction_1d(grid_coords: np.ndarray, pitch: float, order: int, waist: float, center: float) -> float:
    # Avalia o perfil numa janela 4× maior para estimar a potência perdida
    n = grid_coords.size
    extended = grid_coords[0] + np.arange(-2 * n, 3 * n) * pitch
    inside = _hg_profile_1d(grid_coords, order, waist, center)
    outside = _hg_profile_1d(extended, order, waist, center)
    total = np.sum(np.abs(outside) ** 2)
    return float(max(0.0, 1.0 - np.sum(np.abs(inside) ** 2) / total)) if total > 0 else 0.0


def gaussian_spot(grid: GridSpec, center: Tuple[float, float], waist: float) -> ComplexField:
    """
    Spot gaussiano normalizado com fase plana.

    Args:
        grid (GridSpec): Grade de destino
        center (Tuple[float, float]): Centro (x, y) em metros
        waist (float): Cintura w₀ em metros

    Returns:
        ComplexField: Campo ∝ exp(−r²/w₀²)
    """
    return hermite_gaussian(grid, 0, 0, waist, center)


def hermite_gaussian(
    grid: GridSpec,
    m: int,
    n: int,
    waist: float,
    center: Tuple[float, float] = (0.0, 0.0),
) -> ComplexField:
    """
    Modo Hermite-Gaussiano HG_mn normalizado no plano da cintura.

    Args:
        grid (GridSpec): Grade de destino
        m (int): Ordem em x
        n (int): Ordem em y
        waist (float): Cintura w₀ em metros
        center (Tuple[float, float]): Centro (x, y) em metros

    Returns:
        ComplexField: Campo H_m(√2x/w₀)·H_n(√2y/w₀)·exp(−(x²+y²)/w₀²) normalizado
    """
    if m < 0 or n < 0:
        raise ConfigurationError(f"ordens do modo devem ser não negativas, recebeu ({m}, {n})", "target.modes")
    if not waist > 0:
        raise ConfigurationError(f"cintura deve ser positiva, recebeu {waist}", "waist")
    _check_center(grid, center)
    _warn_under_resolved(grid, waist)

    x0, y0 = center
    profile_x = _hg_profile_1d(grid.x, m, waist, x0)
    profile_y = _hg_profile_1d(grid.y, n, waist, y0)

    clipped_x = _clipped_fraction_1d(grid.x, grid.pitch, m, waist, x0)
    clipped_y = _clipped_fraction_1d(grid.y, grid.pitch, n, waist, y0)
    clipped = 1.0 - (1.0 - clipped_x) * (1.0 - clipped_y)
    if clipped > CLIPPING_THRESHOLD:
        message = f"HG{m}{n}: {clipped:.2%} da potência fica fora da grade"
        logger.warning(message)
        warnings.warn(message, ClippingWarning, stacklevel=2)

    values = np.outer(profile_y, profile_x).astype(np.complex128)
    return normalize(ComplexField(grid, values))


def mode_group_list(count: int) -> List[Tuple[int, int]]:
    """
    Enumera os modos (m, n) dos primeiros grupos, em ordem raster sobre (grupo, m).

    Args:
        count (int): Número de modos; deve fechar um número inteiro de grupos

    Returns:
        List[Tuple[int, int]]: Índices (m, n) com m + n = g para g = 0, 1, ...
    """
    modes = []
    group = 0
    while len(modes) < count:
        for m in range(group + 1):
            modes.append((m, group - m))
        group += 1
    if len(modes) != count:
        raise ConfigurationError(
            f"{count} modos não fecham grupos completos (1+2+…+G); informe a lista explícita de modos",
            "source.count",
        )
    return modes


def build_linear_array_modeset(
    grid: GridSpec,
    count: int,
    spot_spacing: float,
    spot_waist: float,
    target_waist: float,
    ordering: str = "raster",
    modes: Optional[Sequence[Tuple[int, int]]] = None,
) -> ModeSet:
    """
    Monta o conjunto de treino: arranjo linear de spots gaussianos → modos HG.

    Args:
        grid (GridSpec): Grade
        count (int): Número de modos M
        spot_spacing (float): Espaçamento entre spots em metros
        spot_waist (float): Cintura dos spots em metros
        target_waist (float): Cintura dos modos HG alvo em metros
        ordering (str): "raster" ou "reverse"
        modes (Optional[Sequence[Tuple[int, int]]]): Lista explícita de modos (m, n)

    Returns:
        ModeSet: Pares (spot j, HG do j-ésimo modo na ordem escolhida)
    """
    if count < 1:
        raise ConfigurationError("é preciso pelo menos um modo", "source.count")
    if modes is not None:
        mode_list = [tuple(int(v) for v in mn) for mn in modes]
        if len(mode_list) != count:
            raise ConfigurationError(f"{len(mode_list)} modos listados para count = {count}", "target.modes")
        if len(set(mode_list)) != len(mode_list):
            raise ConfigurationError("modos repetidos na lista", "target.modes")
    else:
        mode_list = mode_group_list(count)

    if ordering == "reverse":
        mode_list = mode_list[::-1]
    elif ordering != "raster":
        raise ConfigurationError(f"ordenação desconhecida {ordering!r}; use uma de {ORDERINGS}", "target.ordering")

    offsets = (np.arange(count) - (count - 1) / 2.0) * spot_spacing
    if count > 1 and np.max(np.abs(offsets)) + spot_waist > min(grid.x[-1], -grid.x[0]):
        raise ConfigurationError(
            f"arranjo de {count} spots com espaçamento {spot_spacing:.3e} m excede a grade",
            "source.spacing_um",
        )

    inputs = []
    centers = []
    for offset in offsets:
        center = (float(offset), 0.0)
        centers.append(center)
        inputs.append(gaussian_spot(grid, center, spot_waist))

    targets = [hermite_gaussian(grid, m, n, target_waist) for (m, n) in mode_list]
    logger.info(f"Conjunto de modos: {count} spots → HG {mode_list}")
    return ModeSet(grid=grid, inputs=inputs, targets=targets, labels=list(mode_list), spot_centers=centers)


def similarity(phi1: np.ndarray, phi2: np.ndarray) -> float:
    """
    Similaridade entre duas máscaras pela correlação de seus fasores.

    Args:
        phi1 (np.ndarray): Primeira máscara (rad)
        phi2 (np.ndarray): Segunda máscara (rad)

    Returns:
        float: |Σ exp(iϕ₁)exp(−iϕ₂)| / N_pixels, em [0, 1]
    """
    phi1 = np.asarray(phi1, dtype=np.float64)
    phi2 = np.asarray(phi2, dtype=np.float64)
    if phi1.shape != phi2.shape:
        raise GridMismatchError(f"máscaras com formatos {phi1.shape} e {phi2.shape}")
    correlation = np.sum(np.exp(1j * (phi1 - phi2)))
    return float(min(1.0, abs(correlation) / phi1.size))
