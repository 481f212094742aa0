#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo de propagação no espaço livre pelo método do espectro angular.
"""

import logging
import os
import threading
from collections import OrderedDict
from typing import Optional

import numpy as np
import scipy.fft

from utils.errors import ConfigurationError, GridMismatchError, ValidationError
from utils.grid_field import ComplexField, GridSpec

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "MPLC_THREADS"

# Quantidade de distâncias mantidas no cache de fatores de transferência
CACHE_SIZE = 32


def default_workers() -> int:
    """
    Número de threads das FFTs, lido de MPLC_THREADS (padrão 1).
    """
    value = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        workers = int(value)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV_VAR}={value!r} não é um inteiro", THREADS_ENV_VAR)
    return max(1, workers)


class SpectralPropagator:
    """
    Propagador de espectro angular F⁻¹ diag(exp(i·k_z·z)) F sobre uma grade.

    Componentes evanescentes usam k_z = i·√(k_x²+k_y²−k₀²), de modo que o
    fator de transferência atenua e nunca amplifica para z ≥ 0. O adjunto
    usa o fator conjugado, nunca distâncias negativas.
    """

    def __init__(self, grid: GridSpec, padding_factor: float = 1.0, workers: Optional[int] = None):
        """
        Inicializa o propagador e pré-calcula k_z.

        Args:
            grid (GridSpec): Grade dos campos
            padding_factor (float): Fator de preenchimento com zeros (≥ 1)
            workers (Optional[int]): Threads das FFTs; None lê MPLC_THREADS
        """
        if padding_factor < 1.0:
            raise ConfigurationError(f"fator de preenchimento deve ser ≥ 1, recebeu {padding_factor}", "grid.padding_factor")
        self.grid = grid
        self.padding_factor = float(padding_factor)
        self.workers = workers if workers is not None else default_workers()

        self.padded_shape = (
            max(grid.ny, int(round(grid.ny * self.padding_factor))),
            max(grid.nx, int(round(grid.nx * self.padding_factor))),
        )
        pad_y = self.padded_shape[0] - grid.ny
        pad_x = self.padded_shape[1] - grid.nx
        self._offset = (pad_y // 2, pad_x // 2)
        self.is_padded = pad_y > 0 or pad_x > 0

        ky = 2.0 * np.pi * np.fft.fftfreq(self.padded_shape[0], d=grid.pitch)
        kx = 2.0 * np.pi * np.fft.fftfreq(self.padded_shape[1], d=grid.pitch)
        kt2 = ky[:, None] ** 2 + kx[None, :] ** 2
        k0 = grid.k0
        self.evanescent = kt2 > k0 ** 2
        kz = np.empty(self.padded_shape, dtype=np.complex128)
        kz[~self.evanescent] = np.sqrt(k0 ** 2 - kt2[~self.evanescent])
        kz[self.evanescent] = 1j * np.sqrt(kt2[self.evanescent] - k0 ** 2)
        kz[0, 0] = k0
        self.kz = kz

        self._cache: "OrderedDict[float, np.ndarray]" = OrderedDict()
        self._lock = threading.Lock()

    @property
    def n_spectral(self) -> int:
        return self.padded_shape[0] * self.padded_shape[1]

    def _check_distance(self, z: float) -> float:
        z = float(z)
        if not np.isfinite(z) or z < 0:
            raise ValidationError(f"distância de propagação deve ser finita e ≥ 0, recebeu {z}")
        return z

    def transfer(self, z: float) -> np.ndarray:
        """
        Fator de transferência exp(i·k_z·z), com cache por valor exato de z.

        Args:
            z (float): Distância em metros

        Returns:
            np.ndarray: Fator complexo no formato espectral
        """
        z = self._check_distance(z)
        with self._lock:
            factor = self._cache.get(z)
            if factor is not None:
                self._cache.move_to_end(z)
                return factor
        factor = np.exp(1j * self.kz * z)
        with self._lock:
            self._cache[z] = factor
            while len(self._cache) > CACHE_SIZE:
                self._cache.popitem(last=False)
        logger.debug(f"Fator de transferência calculado para z = {z:.6e} m")
        return factor

    def transfer_derivative(self, z: float) -> np.ndarray:
        """
        Derivada analítica ∂/∂z do fator de transferência: i·k_z·exp(i·k_z·z).

        Args:
            z (float): Distância em metros

        Returns:
            np.ndarray: Fator complexo no formato espectral
        """
        return 1j * self.kz * self.transfer(z)

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def _check_shape(self, values: np.ndarray) -> None:
        if values.shape[-2:] != self.grid.shape:
            raise GridMismatchError(f"campo com formato {values.shape[-2:]}, propagador espera {self.grid.shape}")

    def spectrum(self, values: np.ndarray) -> np.ndarray:
        """
        Espectro (FFT não normalizada) de um campo ou pilha de campos, já preenchido.
        """
        self._check_shape(values)
        if self.is_padded:
            padded = np.zeros(values.shape[:-2] + self.padded_shape, dtype=np.complex128)
            oy, ox = self._offset
            padded[..., oy:oy + self.grid.ny, ox:ox + self.grid.nx] = values
            values = padded
        return scipy.fft.fft2(values, axes=(-2, -1), workers=self.workers)

    def from_spectrum(self, spectrum: np.ndarray) -> np.ndarray:
        """
        Volta do domínio espectral para a grade (IFFT com 1/N, recorte da janela).
        """
        values = scipy.fft.ifft2(spectrum, axes=(-2, -1), workers=self.workers)
        if self.is_padded:
            oy, ox = self._offset
            values = values[..., oy:oy + self.grid.ny, ox:ox + self.grid.nx]
        return values

    def propagate_values(self, values: np.ndarray, z: float) -> np.ndarray:
        """
        Propaga um array (ny, nx) ou uma pilha (..., ny, nx) pela distância z.
        """
        z = self._check_distance(z)
        if z == 0.0 and not self.is_padded:
            return np.array(values, dtype=np.complex128, copy=True)
        return self.from_spectrum(self.spectrum(values) * self.transfer(z))

    def adjoint_values(self, values: np.ndarray, z: float) -> np.ndarray:
        """
        Aplica o operador adjunto F⁻¹ diag(conj(exp(i·k_z·z))) F.
        """
        z = self._check_distance(z)
        if z == 0.0 and not self.is_padded:
            return np.array(values, dtype=np.complex128, copy=True)
        return self.from_spectrum(self.spectrum(values) * np.conj(self.transfer(z)))

    def propagate(self, fld: ComplexField, z: float) -> ComplexField:
        """
        Propaga um campo pela distância z ≥ 0.

        Args:
            fld (ComplexField): Campo na grade do propagador
            z (float): Distância em metros

        Returns:
            ComplexField: Campo propagado
        """
        if fld.grid != self.grid:
            raise GridMismatchError("campo e propagador estão em grades diferentes")
        return ComplexField(self.grid, self.propagate_values(fld.values, z))

    def propagate_adjoint(self, fld: ComplexField, z: float) -> ComplexField:
        if fld.grid != self.grid:
            raise GridMismatchError("campo e propagador estão em grades diferentes")
        return ComplexField(self.grid, self.adjoint_values(fld.values, z))

