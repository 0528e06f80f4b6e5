"""
🚨 BetheLab Errors
Jerarquía de errores del dominio. Cada clase hereda también de la excepción
estándar equivalente (ValueError / RuntimeError) para que el código que ya
captura esas excepciones siga funcionando.
"""
from typing import Any, Optional, Tuple


class BetheLabError(Exception):
    """Raíz de todos los errores de BetheLab"""


class DomainError(BetheLabError, ValueError):
    """Argumento o parámetro fuera de su dominio (ξ = 0, n < 2, N fuera de rango...)"""


class PoleError(DomainError):
    """Denominador de la matriz S (o del integrando) demasiado cercano a cero"""

    def __init__(self, message: str, denominator: complex, arguments: Optional[Tuple[Any, ...]] = None):
        super().__init__(message)
        self.denominator = denominator
        self.arguments = arguments


class ConfigurationError(BetheLabError, ValueError):
    """Configuración inconsistente o radio que no se pudo certificar"""


class ConvergenceError(BetheLabError, RuntimeError):
    """La cuadratura adaptativa no convergió antes de agotar nodos"""

    def __init__(self, message: str, iterates: Tuple[complex, complex], nodes: Tuple[int, int]):
        super().__init__(message)
        self.iterates = iterates
        self.nodes = nodes


class ResourceError(BetheLabError, RuntimeError):
    """Espacio de estados, malla o serie de Poisson por encima del límite configurado"""


class PrecisionError(BetheLabError, RuntimeError):
    """Residuo de avalancha no acotado por la tolerancia dentro del límite de pasos"""
