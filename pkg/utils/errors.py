#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Exceções e avisos usados por todo o projeto.

Erros de validação (configuração, grades incompatíveis, macros inválidas)
resultam em código de saída 2 na linha de comando; falhas de execução
(otimização divergente, bundle corrompido) resultam em código 1.
"""

from typing import Optional


class MPLCError(Exception):
    """
    Classe base para todos os erros do projeto.
    """

    exit_code = 1

    # Histórico dos estágios concluídos antes da falha, quando houver
    run_log = None


class ValidationError(MPLCError, ValueError):
    """
    Entrada inválida: configuração, parâmetros ou dados inconsistentes.
    """

    exit_code = 2


class GridMismatchError(ValidationError):
    """Campos ou máscaras definidos em grades diferentes."""


class DegenerateFieldError(ValidationError):
    """Campo com potência total nula."""


class ConfigurationError(ValidationError):
    """
    Erro semântico em um documento de configuração.

    Args:
        message (str): Descrição do problema
        field_path (Optional[str]): Caminho do campo (ex.: "grid.nx")
    """

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class ConfigSyntaxError(ValidationError):
    """
    Documento de configuração mal formado, com linha e coluna do erro.
    """

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"linha {line}, coluna {column}: {message}")


class MacroSyntaxError(ConfigSyntaxError):
    """Documento de macro mal formado."""


class MacroValidationError(ConfigurationError):
    """Macro bem formada, mas inconsistente com o modelo ou o conjunto de modos."""


class TopologyMismatchError(ValidationError):
    """Modelos com número ou formato de máscaras diferentes."""


class RuntimeFailure(MPLCError):
    """
    Falha durante a execução de um comando.
    """

    exit_code = 1


class OptimizationError(RuntimeFailure):
    """Gradiente não finito ou outro problema numérico durante o treino."""


class StageDivergedError(RuntimeFailure):
    """
    A perda subiu mais de 10× acima do melhor valor do estágio.

    Args:
        message (str): Descrição do problema
        result: Histórico parcial do estágio (StageResult)
    """

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)


class BundleError(RuntimeFailure):
    """Bundle de modelo ausente ou ilegível."""


class BundleChecksumError(BundleError):
    """Arquivo de máscara não confere com o checksum do manifesto."""


class OutputLockedError(RuntimeFailure):
    """Outro processo já está escrevendo no diretório de saída."""


class ArtifactError(RuntimeFailure):
    """Artefato de um diretório de projeto ilegível ou incompleto."""


class UnderResolvedWarning(UserWarning):
    """Cintura do feixe menor que dois pixels."""


class ClippingWarning(UserWarning):
    """Parte relevante da potência do modo fica fora da grade."""
