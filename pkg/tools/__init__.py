"""Tools package: modelos de partículas, motor de Bethe y oráculo CTMC"""
