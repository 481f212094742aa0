#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo de persistência: bundle do modelo em disco, exportação das máscaras
para o SLM, trava do diretório de saída e documentos JSON auxiliares.
"""

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from PIL import Image

from analyzers.mplc_model import MPLCModel, wrap_phase
from utils import __version__
from utils.errors import BundleChecksumError, BundleError, MPLCError, OutputLockedError, ValidationError
from utils.grid_field import GridSpec
from utils.propagation import SpectralPropagator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

BUNDLE_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".lock"
EXPORT_FORMATS = ("raw-f32", "png16", "csv")

# Níveis do PNG de 16 bits sobre [−π, π)
PNG16_LEVELS = 65536

MASK_DTYPE = np.dtype("<f4")


def mask_filename(i: int) -> str:
    return f"mask_{i:02d}.f32"


def sha256_of(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False), encoding="utf-8")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_raw_f32(path: PathLike, values: np.ndarray) -> Path:
    """Grava um array como float32 little-endian em ordem de linhas."""
    np.ascontiguousarray(values, dtype=MASK_DTYPE).tofile(path)
    return Path(path)


def read_raw_f32(path: PathLike, shape: Tuple[int, int]) -> np.ndarray:
    values = np.fromfile(path, dtype=MASK_DTYPE)
    if values.size != shape[0] * shape[1]:
        raise BundleError(f"{path}: {values.size} valores, esperado {shape[0]}×{shape[1]}")
    return values.reshape(shape)


def save_bundle(model: MPLCModel, directory: PathLike, provenance: Optional[Dict[str, Any]] = None) -> Path:
    """
    Grava o bundle do modelo: manifesto JSON e uma máscara float32 por arquivo.

    As máscaras são gravadas sem enrolamento, em radianos.

    Args:
        model (MPLCModel): Modelo
        directory (PathLike): Diretório do bundle (criado se necessário)
        provenance (Optional[Dict[str, Any]]): Sementes, macro e demais metadados

    Returns:
        Path: Caminho do manifesto
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    masks = []
    for i in range(1, model.n_masks + 1):
        path = write_raw_f32(directory / mask_filename(i), model.mask(i))
        masks.append({"index": i, "file": path.name, "sha256": sha256_of(path)})

    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "software_version": __version__,
        "grid": {
            "nx": model.grid.nx,
            "ny": model.grid.ny,
            "pitch_m": model.grid.pitch,
            "wavelength_m": model.grid.wavelength,
        },
        "padding_factor": model.propagator.padding_factor,
        "n_masks": model.n_masks,
        "distances_m": list(model.distances),
        "trainable_masks": list(model.trainable_masks),
        "trainable_distances": list(model.trainable_distances),
        "masks": masks,
        "provenance": provenance or {},
    }
    path = write_json(directory / MANIFEST_NAME, manifest)
    logger.info(f"Bundle gravado em {directory} ({model.n_masks} máscaras)")
    return path


def read_manifest(directory: PathLike) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise BundleError(f"manifesto não encontrado: {path}")
    try:
        manifest = read_json(path)
    except json.JSONDecodeError as exc:
        raise BundleError(f"manifesto ilegível {path}: {exc}") from exc
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise BundleError(f"versão de bundle não suportada: {manifest.get('format_version')!r}")
    return manifest


def load_bundle(directory: PathLike, workers: Optional[int] = None) -> Tuple[MPLCModel, Dict[str, Any]]:
    """
    Carrega um bundle, conferindo o checksum de cada máscara.

    Args:
        directory (PathLike): Diretório do bundle
        workers (Optional[int]): Threads das FFTs do propagador

    Returns:
        Tuple[MPLCModel, Dict[str, Any]]: Modelo e manifesto
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    try:
        grid_info = manifest["grid"]
        grid = GridSpec(
            nx=int(grid_info["nx"]),
            ny=int(grid_info["ny"]),
            pitch=float(grid_info["pitch_m"]),
            wavelength=float(grid_info["wavelength_m"]),
        )
        entries = sorted(manifest["masks"], key=lambda e: e["index"])
        distances = [float(z) for z in manifest["distances_m"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"manifesto incompleto em {directory}: {exc}") from exc
    if len(entries) != manifest.get("n_masks"):
        raise BundleError(f"manifesto lista {len(entries)} máscaras, n_masks = {manifest.get('n_masks')}")

    masks = []
    for entry in entries:
        path = directory / entry["file"]
        if not path.is_file():
            raise BundleError(f"arquivo de máscara ausente: {path}")
        if sha256_of(path) != entry["sha256"]:
            raise BundleChecksumError(f"checksum não confere para {path}")
        masks.append(read_raw_f32(path, grid.shape).astype(np.float64))

    propagator = SpectralPropagator(grid, padding_factor=float(manifest.get("padding_factor", 1.0)), workers=workers)
    model = MPLCModel(
        grid,
        masks,
        distances,
        trainable_masks=manifest.get("trainable_masks"),
        trainable_distances=manifest.get("trainable_distances"),
        propagator=propagator,
    )
    logger.info(f"Bundle carregado de {directory} ({model.n_masks} máscaras, {grid.nx}×{grid.ny})")
    return model, manifest


def phase_to_png16(phase: np.ndarray) -> np.ndarray:
    """
    Quantiza a fase enrolada linearmente sobre [−π, π) em 16 bits (ϕ = 0 → 32768).
    """
    levels = np.round((wrap_phase(phase) + np.pi) / (2.0 * np.pi) * PNG16_LEVELS)
    return np.mod(levels, PNG16_LEVELS).astype(np.uint16)


def png16_to_phase(levels: np.ndarray) -> np.ndarray:
    return np.asarray(levels, dtype=np.float64) / PNG16_LEVELS * 2.0 * np.pi - np.pi


def write_png16(path: PathLike, levels: np.ndarray) -> Path:
    Image.fromarray(np.ascontiguousarray(levels, dtype=np.uint16)).save(path)
    return Path(path)


def read_png16(path: PathLike) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img).astype(np.uint16)


def export_masks(model: MPLCModel, directory: PathLike, fmt: str) -> List[Path]:
    """
    Exporta as máscaras enroladas em [−π, π) para o SLM.

    Args:
        model (MPLCModel): Modelo
        directory (PathLike): Diretório de destino
        fmt (str): "raw-f32", "png16" ou "csv"

    Returns:
        List[Path]: Arquivos gravados
    """
    if fmt not in EXPORT_FORMATS:
        raise ValidationError(f"formato desconhecido {fmt!r}; use um de {EXPORT_FORMATS}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, wrapped in enumerate(model.wrapped_masks(), start=1):
        if fmt == "raw-f32":
            written.append(write_raw_f32(directory / f"mask_{i:02d}_wrapped.f32", wrapped))
        elif fmt == "png16":
            written.append(write_png16(directory / f"mask_{i:02d}.png", phase_to_png16(wrapped)))
        else:
            path = directory / f"mask_{i:02d}.csv"
            pd.DataFrame(wrapped).to_csv(path, header=False, index=False, float_format="%.17g")
            written.append(path)
    logger.info(f"{len(written)} máscaras exportadas em {directory} ({fmt})")
    return written


def import_masks(directory: PathLike, fmt: str, shape: Tuple[int, int], n_masks: int) -> List[np.ndarray]:
    """
    Lê de volta máscaras exportadas por export_masks.
    """
    directory = Path(directory)
    masks = []
    for i in range(1, n_masks + 1):
        if fmt == "raw-f32":
            masks.append(read_raw_f32(directory / f"mask_{i:02d}_wrapped.f32", shape))
        elif fmt == "png16":
            masks.append(png16_to_phase(read_png16(directory / f"mask_{i:02d}.png")))
        elif fmt == "csv":
            masks.append(pd.read_csv(directory / f"mask_{i:02d}.csv", header=None, float_precision="round_trip").to_numpy(dtype=np.float64))
        else:
            raise ValidationError(f"formato desconhecido {fmt!r}; use um de {EXPORT_FORMATS}")
    return masks


@contextmanager
def output_lock(directory: PathLike) -> Iterator[Path]:
    """
    Trava exclusiva do diretório de saída enquanto um comando escreve nele.

    Raises:
        OutputLockedError: Outro processo já detém a trava
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLockedError(f"diretório de saída em uso: {lock} existe")
    try:
        os.write(fd, str(os.getpid()).encode())
    finally:
        os.close(fd)
    try:
        yield lock
    finally:
        lock.unlink(missing_ok=True)


def error_record(exc: BaseException) -> Dict[str, Any]:
    """Registro de erro legível por máquina."""
    exit_code = exc.exit_code if isinstance(exc, MPLCError) else 1
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code}
    for attr in ("field_path", "line", "column"):
        value = getattr(exc, attr, None)
        if value is not None:
            record[attr] = value
    return record
