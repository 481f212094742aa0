"""
Pacote de analisadores do projetista MPLC: modelo, gradientes, otimizadores,
macros de treino e avaliação.
"""
