"""
Pacote de utilitários do projetista de conversores de luz multiplano (MPLC):
grade e campos, propagação, configuração, persistência e visualização.
"""

__version__ = "1.0.0"
