#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Módulo para visualização de projetos MPLC: curvas de convergência, mapas de
crosstalk, prévias das máscaras de fase e painel HTML interativo.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from analyzers.evaluation import CrosstalkMatrix, EvalReport
from analyzers.mplc_model import wrap_phase
from utils.persistence import write_png16

logger = logging.getLogger(__name__)

PREVIEW_LEVELS = 65535

# Lado máximo das máscaras no painel HTML
DASHBOARD_MAX_SIDE = 256


def cyclic_gray(phase: np.ndarray) -> np.ndarray:
    """
    Tons de cinza cíclicos de 16 bits: |ϕ|/π com ϕ enrolada, de modo que ±π coincidem.
    """
    return np.round(np.abs(wrap_phase(phase)) / np.pi * PREVIEW_LEVELS).astype(np.uint16)


def _downsample(mask: np.ndarray) -> np.ndarray:
    stride = max(1, int(np.ceil(max(mask.shape) / DASHBOARD_MAX_SIDE)))
    return mask[::stride, ::stride]


class MPLCVisualizer:
    """
    Classe para criar as figuras de um diretório de projeto.
    """

    def __init__(self, output_dir: str):
        """
        Inicializa o visualizador.

        Args:
            output_dir (str): Diretório onde as figuras são gravadas
        """
        self.output_dir = Path(output_dir)
        os.makedirs(self.output_dir, exist_ok=True)

    def _save(self, fig, name: str) -> Path:
        path = self.output_dir / name
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        logger.info(f"Figura gravada: {path}")
        return path

    def plot_convergence(self, history: pd.DataFrame, name: str = "convergence.png") -> Path:
        """
        Eficiência média e perda ao longo das iterações, com os estágios em cores.

        Args:
            history (pd.DataFrame): Colunas stage, iteration, loss, mean_eta, elapsed_s
            name (str): Nome do arquivo

        Returns:
            Path: Caminho do PNG
        """
        fig, (ax_eta, ax_loss) = plt.subplots(1, 2, figsize=(11, 4))
        step = np.arange(1, len(history) + 1)
        for stage, rows in history.groupby("stage", sort=False):
            index = step[rows.index.to_numpy()] if len(history) else []
            ax_eta.plot(index, rows["mean_eta"], marker=".", label=str(stage))
            ax_loss.semilogy(index, rows["loss"], marker=".")
        ax_eta.set_xlabel("Iteração global")
        ax_eta.set_ylabel("η médio")
        ax_eta.set_title("Eficiência de acoplamento")
        ax_loss.set_xlabel("Iteração global")
        ax_loss.set_ylabel("L")
        ax_loss.set_title("Perda")
        if history["stage"].nunique() <= 12:
            ax_eta.legend(fontsize="small")
        return self._save(fig, name)

    def plot_crosstalk_db(self, ct: CrosstalkMatrix, name: str = "crosstalk_db.png") -> Path:
        """
        Mapa de calor de |h_jk|² em dB.
        """
        fig, ax = plt.subplots(figsize=(5, 4.5))
        image = ax.imshow(ct.power_db(), cmap="viridis", vmin=-40.0, vmax=0.0)
        ax.set_xlabel("Entrada k")
        ax.set_ylabel("Alvo j")
        ax.set_title("Crosstalk |h_jk|² (dB)")
        fig.colorbar(image, ax=ax)
        return self._save(fig, name)

    def save_phase_previews(self, masks: Sequence[np.ndarray], prefix: str = "phase") -> List[Path]:
        """
        Grava uma prévia PNG de 16 bits por máscara, em cinza cíclico.
        """
        paths = []
        for i, mask in enumerate(masks, start=1):
            paths.append(write_png16(self.output_dir / f"{prefix}_{i:02d}.png", cyclic_gray(mask)))
        logger.info(f"{len(paths)} prévias de fase gravadas em {self.output_dir}")
        return paths

    def plot_batch_study(self, study: pd.DataFrame, name: str = "batch_study.png") -> Path:
        """
        Perda e nitidez (esquerda), perda de inserção e tolerância (direita) por tamanho de lote.
        """
        fig, (ax_left, ax_right) = plt.subplots(1, 2, figsize=(11, 4))
        b = study["batch_size"]
        ax_left.plot(b, study["loss"], "o-", color="tab:red", label="L")
        ax_left.set_xlabel("Tamanho de lote B")
        ax_left.set_ylabel("L", color="tab:red")
        twin_left = ax_left.twinx()
        twin_left.errorbar(b, study["sharpness_mean"], yerr=study["sharpness_std"], fmt="s--", color="tab:blue")
        twin_left.set_ylabel("δL", color="tab:blue")

        ax_right.plot(b, study["insertion_loss_db"], "o-", color="tab:red")
        ax_right.set_xlabel("Tamanho de lote B")
        ax_right.set_ylabel("IL (dB)", color="tab:red")
        twin_right = ax_right.twinx()
        twin_right.errorbar(b, study["tolerance_mean_db"], yerr=study["tolerance_std_db"], fmt="s--", color="tab:blue")
        twin_right.set_ylabel("δIL (dB)", color="tab:blue")
        fig.tight_layout()
        return self._save(fig, name)

    def create_dashboard(
        self,
        history: Optional[pd.DataFrame],
        ct: Optional[CrosstalkMatrix],
        masks: Sequence[np.ndarray],
        report: Optional[EvalReport] = None,
        name: str = "report.html",
    ) -> Path:
        """
        Painel HTML autocontido com convergência, crosstalk e máscaras enroladas.

        Args:
            history (Optional[pd.DataFrame]): Histórico de convergência
            ct (Optional[CrosstalkMatrix]): Matriz de transferência
            masks (Sequence[np.ndarray]): Máscaras de fase
            report (Optional[EvalReport]): Métricas, exibidas no título
            name (str): Nome do arquivo

        Returns:
            Path: Caminho do HTML
        """
        figures: Dict[str, Any] = {}

        if history is not None and len(history):
            fig_conv = go.Figure()
            step = np.arange(1, len(history) + 1)
            for stage, rows in history.groupby("stage", sort=False):
                fig_conv.add_trace(go.Scatter(
                    x=step[rows.index.to_numpy()],
                    y=rows["mean_eta"],
                    mode="lines+markers",
                    name=str(stage),
                ))
            fig_conv.update_layout(
                title_text="Convergência",
                xaxis_title="Iteração global",
                yaxis_title="η médio",
            )
            figures["convergence"] = fig_conv

        if ct is not None:
            fig_ct = go.Figure(data=go.Heatmap(z=ct.power_db(), zmin=-40, zmax=0, colorscale="Viridis"))
            fig_ct.update_layout(
                title_text="Crosstalk (dB)",
                xaxis_title="Entrada k",
                yaxis_title="Alvo j",
                yaxis=dict(autorange="reversed"),
            )
            figures["crosstalk"] = fig_ct

        if masks:
            fig_masks = make_subplots(rows=1, cols=len(masks), subplot_titles=[f"ϕ{i}" for i in range(1, len(masks) + 1)])
            for i, mask in enumerate(masks, start=1):
                fig_masks.add_trace(
                    go.Heatmap(z=wrap_phase(_downsample(mask)), zmin=-np.pi, zmax=np.pi, colorscale="Twilight", showscale=(i == 1)),
                    row=1, col=i,
                )
            fig_masks.update_layout(title_text="Máscaras de fase enroladas (rad)")
            figures["masks"] = fig_masks

        title = "Projeto MPLC"
        if report is not None:
            title += (f": η médio {np.mean(report.efficiencies):.4f}, IL {report.insertion_loss_db:.3f} dB, "
                      f"δL {report.sharpness_mean:.2e}, δIL {report.tolerance_mean_db:.2e} dB")
        parts = [f"<html><head><meta charset='utf-8'><title>{title}</title></head><body><h2>{title}</h2>"]
        for k, fig in enumerate(figures.values()):
            parts.append(fig.to_html(full_html=False, include_plotlyjs=(k == 0)))
        parts.append("</body></html>")

        path = self.output_dir / name
        path.write_text("\n".join(parts), encoding="utf-8")
        logger.info(f"Painel gravado: {path}")
        return path
