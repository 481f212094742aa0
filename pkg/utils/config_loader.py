#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo de configuração: leitura dos documentos JSON de projeto e construção
da grade, do conjunto de modos, do modelo inicial e do programa de treino.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from analyzers.evaluation import DEFAULT_DELTA_PHI, DEFAULT_INSTANCES
from analyzers.macro_engine import MacroProgram, build_program, parse_macro
from analyzers.mplc_model import MPLCModel
from utils.errors import ConfigSyntaxError, ConfigurationError, GridMismatchError
from utils.grid_field import ORDERINGS, GridSpec, ModeSet, build_linear_array_modeset
from utils.persistence import load_bundle
from utils.propagation import SpectralPropagator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_WAVELENGTH_NM = 1550.0
MODEL_INITS = ("zeros", "bundle")

_TOP_KEYS = {"description", "grid", "source", "target", "model", "macro", "evaluation", "seed", "threads"}
_GRID_KEYS = {"nx", "ny", "pitch_um", "wavelength_nm", "padding_factor"}
_SOURCE_KEYS = {"type", "count", "spacing_um", "waist_um"}
_TARGET_KEYS = {"type", "waist_um", "ordering", "modes"}
_MODEL_KEYS = {"n_masks", "distances_mm", "init", "bundle"}
_EVALUATION_KEYS = {"delta_phi_rad", "instances"}


@dataclass(frozen=True)
class GridConfig:
    nx: int
    ny: int
    pitch_um: float
    wavelength_nm: float = DEFAULT_WAVELENGTH_NM
    padding_factor: float = 1.0

    def to_grid(self) -> GridSpec:
        return GridSpec(nx=self.nx, ny=self.ny, pitch=self.pitch_um * 1e-6, wavelength=self.wavelength_nm * 1e-9)


@dataclass(frozen=True)
class SourceConfig:
    """Arranjo linear de spots gaussianos de entrada."""
    count: int
    spacing_um: float
    waist_um: float
    type: str = "linear_array"


@dataclass(frozen=True)
class TargetConfig:
    """Modos Hermite-Gaussianos alvo."""
    waist_um: float
    ordering: str = "raster"
    modes: Optional[Tuple[Tuple[int, int], ...]] = None
    type: str = "hermite_gaussian"


@dataclass(frozen=True)
class ModelConfig:
    n_masks: int
    distances_mm: Tuple[float, ...]
    init: str = "zeros"
    bundle: Optional[str] = None

    @property
    def distances_m(self) -> Tuple[float, ...]:
        return tuple(z * 1e-3 for z in self.distances_mm)


@dataclass(frozen=True)
class EvaluationConfig:
    delta_phi_rad: float = DEFAULT_DELTA_PHI
    instances: int = DEFAULT_INSTANCES


@dataclass(frozen=True)
class DesignConfig:
    """
    Configuração completa de um projeto.

    Attributes:
        grid (GridConfig): Grade e comprimento de onda
        source (SourceConfig): Spots de entrada
        target (TargetConfig): Modos alvo
        model (ModelConfig): Topologia e inicialização
        macro (Dict[str, Any]): Documento da macro ({"builtin": ...} ou {"stages": [...]})
        evaluation (EvaluationConfig): Parâmetros de nitidez e tolerância
        seed (int): Semente global
        threads (Optional[int]): Threads das FFTs (None usa MPLC_THREADS)
        description (str): Descrição livre
        base_dir (Optional[str]): Diretório do arquivo, para caminhos relativos
    """
    grid: GridConfig
    source: SourceConfig
    target: TargetConfig
    model: ModelConfig
    macro: Dict[str, Any] = field(default_factory=lambda: {"builtin": "default"})
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    seed: int = 0
    threads: Optional[int] = None
    description: str = ""
    base_dir: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Documento normalizado, com todos os padrões usados."""
        data = asdict(self)
        data.pop("base_dir")
        modes = data["target"]["modes"]
        data["target"]["modes"] = [list(mn) for mn in modes] if modes is not None else None
        data["model"]["distances_mm"] = list(self.model.distances_mm)
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def resolve_path(self, relative: str) -> Path:
        path = Path(relative)
        if not path.is_absolute() and self.base_dir is not None:
            path = Path(self.base_dir) / path
        return path

    def build_grid(self) -> GridSpec:
        return self.grid.to_grid()

    def build_propagator(self, workers: Optional[int] = None) -> SpectralPropagator:
        workers = workers if workers is not None else self.threads
        return SpectralPropagator(self.build_grid(), padding_factor=self.grid.padding_factor, workers=workers)

    def build_modeset(self) -> ModeSet:
        """
        Monta o conjunto de modos descrito pelas seções source e target.
        """
        return build_linear_array_modeset(
            self.build_grid(),
            count=self.source.count,
            spot_spacing=self.source.spacing_um * 1e-6,
            spot_waist=self.source.waist_um * 1e-6,
            target_waist=self.target.waist_um * 1e-6,
            ordering=self.target.ordering,
            modes=self.target.modes,
        )

    def build_model(self, propagator: Optional[SpectralPropagator] = None) -> MPLCModel:
        """
        Modelo inicial: máscaras nulas ou máscaras de um bundle existente.

        As distâncias sempre vêm da configuração.
        """
        propagator = propagator if propagator is not None else self.build_propagator()
        grid = propagator.grid
        if self.model.init == "zeros":
            return MPLCModel.zeros(grid, self.model.n_masks, self.model.distances_m, propagator=propagator)
        loaded, _ = load_bundle(self.resolve_path(self.model.bundle), workers=propagator.workers)
        if loaded.grid != grid:
            raise GridMismatchError("o bundle de inicialização usa uma grade diferente da configuração")
        if loaded.n_masks != self.model.n_masks:
            raise ConfigurationError(
                f"bundle com {loaded.n_masks} máscaras para n_masks = {self.model.n_masks}", "model.bundle"
            )
        logger.info(f"Máscaras iniciais carregadas de {self.model.bundle}")
        return MPLCModel(grid, loaded.masks, self.model.distances_m, propagator=propagator)

    def build_program(self, n_modes: Optional[int] = None) -> MacroProgram:
        n_modes = n_modes if n_modes is not None else self.source.count
        if "file" in self.macro:
            if set(self.macro) != {"file"}:
                raise ConfigurationError("'file' não pode ser combinado com outras chaves", "macro")
            path = self.resolve_path(self.macro["file"])
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigurationError(f"não foi possível ler {path}: {exc}", "macro.file") from exc
            return parse_macro(text, self.model.n_masks, n_modes)
        return build_program(self.macro, self.model.n_masks, n_modes)


def _section(document: Dict[str, Any], name: str, allowed: set, required: bool = True) -> Dict[str, Any]:
    section = document.get(name)
    if section is None:
        if required:
            raise ConfigurationError("seção obrigatória ausente", name)
        return {}
    if not isinstance(section, dict):
        raise ConfigurationError("esperado um objeto", name)
    for key in section:
        if key not in allowed:
            raise ConfigurationError(f"chave desconhecida {key!r}", f"{name}.{key}")
    return section


def _required(section: Dict[str, Any], key: str, path: str) -> Any:
    if key not in section:
        raise ConfigurationError("campo obrigatório ausente", f"{path}.{key}")
    return section[key]


def _positive_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigurationError(f"esperado um inteiro positivo, recebeu {value!r}", path)
    return value


def _positive_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigurationError(f"esperado um número positivo, recebeu {value!r}", path)
    return float(value)


def _parse_distances(value: Any, n_masks: int) -> Tuple[float, ...]:
    # Um único número vale para todas as N+1 distâncias
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value] * (n_masks + 1)
    if not isinstance(value, list) or len(value) != n_masks + 1:
        raise ConfigurationError(f"esperadas {n_masks + 1} distâncias", "model.distances_mm")
    distances = []
    for k, z in enumerate(value):
        if isinstance(z, bool) or not isinstance(z, (int, float)) or not np.isfinite(z) or z < 0:
            raise ConfigurationError(f"distância inválida {z!r}", f"model.distances_mm[{k}]")
        distances.append(float(z))
    return tuple(distances)


def _parse_modes(value: Any) -> Optional[Tuple[Tuple[int, int], ...]]:
    if value is None:
        return None
    if not isinstance(value, list):
        raise ConfigurationError("esperada uma lista de pares [m, n]", "target.modes")
    modes = []
    for j, mn in enumerate(value):
        if (not isinstance(mn, list) or len(mn) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in mn)):
            raise ConfigurationError(f"modo inválido {mn!r}", f"target.modes[{j}]")
        modes.append((mn[0], mn[1]))
    return tuple(modes)


def config_from_dict(document: Dict[str, Any], base_dir: Optional[str] = None) -> DesignConfig:
    """
    Converte um documento decodificado em DesignConfig, validando cada seção.

    Args:
        document (Dict[str, Any]): Documento JSON decodificado
        base_dir (Optional[str]): Diretório base para caminhos relativos

    Returns:
        DesignConfig: Configuração validada
    """
    if not isinstance(document, dict):
        raise ConfigurationError("o documento de configuração deve ser um objeto", "")
    for key in document:
        if key not in _TOP_KEYS:
            raise ConfigurationError(f"chave desconhecida {key!r}", key)

    grid_doc = _section(document, "grid", _GRID_KEYS)
    grid = GridConfig(
        nx=_positive_int(_required(grid_doc, "nx", "grid"), "grid.nx"),
        ny=_positive_int(_required(grid_doc, "ny", "grid"), "grid.ny"),
        pitch_um=_positive_float(_required(grid_doc, "pitch_um", "grid"), "grid.pitch_um"),
        wavelength_nm=_positive_float(grid_doc.get("wavelength_nm", DEFAULT_WAVELENGTH_NM), "grid.wavelength_nm"),
        padding_factor=_positive_float(grid_doc.get("padding_factor", 1.0), "grid.padding_factor"),
    )
    if grid.padding_factor < 1.0:
        raise ConfigurationError("o fator de preenchimento deve ser ≥ 1", "grid.padding_factor")

    source_doc = _section(document, "source", _SOURCE_KEYS)
    if source_doc.get("type", "linear_array") != "linear_array":
        raise ConfigurationError(f"tipo de fonte não suportado {source_doc['type']!r}", "source.type")
    source = SourceConfig(
        count=_positive_int(_required(source_doc, "count", "source"), "source.count"),
        spacing_um=_positive_float(_required(source_doc, "spacing_um", "source"), "source.spacing_um"),
        waist_um=_positive_float(_required(source_doc, "waist_um", "source"), "source.waist_um"),
    )

    target_doc = _section(document, "target", _TARGET_KEYS)
    if target_doc.get("type", "hermite_gaussian") != "hermite_gaussian":
        raise ConfigurationError(f"tipo de alvo não suportado {target_doc['type']!r}", "target.type")
    ordering = target_doc.get("ordering", "raster")
    if ordering not in ORDERINGS:
        raise ConfigurationError(f"ordenação desconhecida {ordering!r}; use uma de {ORDERINGS}", "target.ordering")
    target = TargetConfig(
        waist_um=_positive_float(_required(target_doc, "waist_um", "target"), "target.waist_um"),
        ordering=ordering,
        modes=_parse_modes(target_doc.get("modes")),
    )

    model_doc = _section(document, "model", _MODEL_KEYS)
    n_masks = _positive_int(_required(model_doc, "n_masks", "model"), "model.n_masks")
    init = model_doc.get("init", "zeros")
    if init not in MODEL_INITS:
        raise ConfigurationError(f"inicialização desconhecida {init!r}; use uma de {MODEL_INITS}", "model.init")
    if init == "bundle" and not model_doc.get("bundle"):
        raise ConfigurationError("init = 'bundle' exige o caminho do bundle", "model.bundle")
    model = ModelConfig(
        n_masks=n_masks,
        distances_mm=_parse_distances(_required(model_doc, "distances_mm", "model"), n_masks),
        init=init,
        bundle=model_doc.get("bundle"),
    )

    macro = document.get("macro", {"builtin": "default"})
    if not isinstance(macro, dict):
        raise ConfigurationError("esperado um objeto", "macro")

    evaluation_doc = _section(document, "evaluation", _EVALUATION_KEYS, required=False)
    delta_phi = evaluation_doc.get("delta_phi_rad", DEFAULT_DELTA_PHI)
    if isinstance(delta_phi, bool) or not isinstance(delta_phi, (int, float)) or delta_phi < 0:
        raise ConfigurationError(f"δΦ deve ser ≥ 0, recebeu {delta_phi!r}", "evaluation.delta_phi_rad")
    evaluation = EvaluationConfig(
        delta_phi_rad=float(delta_phi),
        instances=_positive_int(evaluation_doc.get("instances", DEFAULT_INSTANCES), "evaluation.instances"),
    )

    seed = document.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigurationError(f"semente inválida {seed!r}", "seed")
    threads = document.get("threads")
    if threads is not None:
        threads = _positive_int(threads, "threads")

    return DesignConfig(
        grid=grid,
        source=source,
        target=target,
        model=model,
        macro=macro,
        evaluation=evaluation,
        seed=seed,
        threads=threads,
        description=str(document.get("description", "")),
        base_dir=base_dir,
    )


def parse_config(text: str, base_dir: Optional[str] = None) -> DesignConfig:
    """
    Lê uma configuração a partir do texto JSON.

    Raises:
        ConfigSyntaxError: JSON mal formado (com linha e coluna)
        ConfigurationError: Erro semântico (com caminho do campo)
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    return config_from_dict(document, base_dir=base_dir)


def load_config(path: PathLike) -> DesignConfig:
    """
    Carrega um arquivo de configuração.

    Args:
        path (PathLike): Caminho do arquivo JSON

    Returns:
        DesignConfig: Configuração validada
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"não foi possível ler {path}: {exc}", "config") from exc
    config = parse_config(text, base_dir=str(path.parent))
    logger.info(f"Configuração carregada de {path} (hash {config.config_hash()[:12]})")
    return config
