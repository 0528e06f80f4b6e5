"""
🧮 Contour Grid - Regla trapezoidal sobre círculos centrados en el origen
Una malla por radio, tablas M×M de matrices S entre dos mallas y contracción
tensorial (einsum) de cada término de permutación.
"""
import logging
import math
import string
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tools.particle_models import SMatrixCoefficients, s_matrix_values
from utils.errors import DomainError, PoleError
import config

logger = logging.getLogger("ContourGrid")

SUBSCRIPTS = string.ascii_letters
ROUNDOFF_FACTOR = 8.0
MACHINE_EPS = float(np.finfo(float).eps)


class TermSum(BaseModel):
    """Suma trapezoidal de un término, con su norma L1 y una cota del integrando"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: complex = Field(..., description="Σ sobre la malla de los sumandos")
    l1: float = Field(..., description="Σ |sumandos| (piso de redondeo)")
    peak: float = Field(..., description="Cota superior de max |f(ξ)·ξ| sobre la malla")


class ContourGrid:
    """
    M nodos ξ_j = r·ω^j sobre C_r.

    El diferencial incluye 1/(2πi), por lo que cada nodo pesa ξ_j/M. Las
    variables con el mismo radio comparten malla.
    """

    def __init__(self, nodes: int, radius: float, p: float, q: float, t: float):
        if nodes < 1 or radius <= 0:
            raise DomainError(f"Malla inválida (M={nodes}, r={radius})")
        self.nodes = nodes
        self.radius = radius
        self.index = np.arange(nodes)
        self.roots = np.exp(2j * np.pi * self.index / nodes)
        self.points = radius * self.roots
        self.energy = p / self.points + q * self.points - 1.0
        self.base = np.exp(t * self.energy) * self.points / nodes
        self._tables: Dict[object, Tuple[np.ndarray, np.ndarray]] = {}

    def power(self, exponent: int) -> np.ndarray:
        """ξ_j^e con la fase tomada de la tabla de raíces: r^e · ω^{(j·e) mod M}"""
        return float(self.radius) ** int(exponent) * self.roots[(self.index * int(exponent)) % self.nodes]

    def unary(self, exponent: int, with_energy: bool = False) -> np.ndarray:
        vec = self.power(exponent) * self.base
        if with_energy:
            vec = vec * self.energy
        return vec

    def s_table(self, coeffs: SMatrixCoefficients,
                other: Optional["ContourGrid"] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Tabla T[j_α, j_β] = S(ξ_{j_α}, η_{j_β}) con ξ en esta malla y η en `other` (o en esta)"""
        other = other or self
        if other.nodes != self.nodes:
            raise DomainError(f"Mallas con distinto número de nodos ({self.nodes} ≠ {other.nodes})")
        key = (coeffs, other.radius)
        if key not in self._tables:
            a = self.points[:, None]
            b = other.points[None, :]
            table = s_matrix_values(coeffs, a, b)
            self._tables[key] = (table, np.abs(table))
        return self._tables[key]

    def marginal_table(self, p: float, q: float) -> Tuple[np.ndarray, np.ndarray]:
        """Tabla (ξ_j - ξ_i)/(p + qξ_iξ_j - ξ_i) del integrando de la marginal"""
        key = ("marginal", p, q)
        if key not in self._tables:
            a = self.points[:, None]
            b = self.points[None, :]
            den = p + q * a * b - a
            num = b - a
            bad = np.abs(den) < config.POLE_REL_THRESHOLD * (1.0 + np.abs(num))
            if np.any(bad):
                offending = complex(den[bad].ravel()[0])
                raise PoleError("Denominador del integrando marginal casi nulo", offending)
            table = num / den
            self._tables[key] = (table, np.abs(table))
        return self._tables[key]

    def unit_factor(self) -> np.ndarray:
        """1/(1 - ξ_j); el radio certificado excluye ξ = 1 del contorno"""
        gap = 1.0 - self.points
        if np.min(np.abs(gap)) < config.POLE_REL_THRESHOLD:
            raise PoleError("El contorno pasa por ξ = 1", complex(gap[np.argmin(np.abs(gap))]))
        return 1.0 / gap


def contract(unaries: Sequence[np.ndarray], pairs: Sequence[Tuple[int, int]],
             tables: Sequence[Tuple[np.ndarray, np.ndarray]]) -> TermSum:
    """
    Σ_{j_1..j_N} ∏_k g_k[j_k] · ∏_{(a,b)} T_{ab}[j_a, j_b].

    `tables` trae una pareja (tabla, módulo) por par, en el orden de `pairs`;
    la contracción la ordena einsum.
    """
    n = len(unaries)
    if n > len(SUBSCRIPTS):
        raise DomainError(f"Demasiadas variables para la contracción ({n})")
    if len(tables) != len(pairs):
        raise DomainError(f"Se esperaban {len(pairs)} tablas (recibidas {len(tables)})")
    abs_unaries = [np.abs(g) for g in unaries]
    peak = math.prod(float(np.max(g)) * g.size for g in abs_unaries)
    for _, abs_table in tables:
        peak *= float(np.max(abs_table))

    if not pairs:
        value = complex(np.prod([np.sum(g) for g in unaries]))
        l1 = float(np.prod([np.sum(g) for g in abs_unaries]))
        return TermSum(value=value, l1=l1, peak=peak)

    letters = SUBSCRIPTS[:n]
    operands = list(letters) + [letters[a] + letters[b] for a, b in pairs]
    expr = ",".join(operands) + "->"
    value = complex(np.einsum(expr, *unaries, *[table for table, _ in tables], optimize="greedy"))
    l1 = float(np.real(np.einsum(expr, *abs_unaries, *[abs_table for _, abs_table in tables],
                                 optimize="greedy")))
    return TermSum(value=value, l1=l1, peak=peak)


def pairwise_sum(values: Sequence[complex]) -> complex:
    """Suma en árbol con orden fijo (independiente del número de workers)"""
    if not values:
        return 0j
    if len(values) == 1:
        return complex(values[0])
    mid = len(values) // 2
    return pairwise_sum(values[:mid]) + pairwise_sum(values[mid:])


def combine(parts: List[TermSum]) -> TermSum:
    """Combina términos: suma en árbol de valores, fsum de normas y máximo de cotas"""
    if not parts:
        return TermSum(value=0j, l1=0.0, peak=0.0)
    return TermSum(
        value=pairwise_sum([p.value for p in parts]),
        l1=math.fsum(p.l1 for p in parts),
        peak=max(p.peak for p in parts),
    )


def roundoff_floor(l1: float) -> float:
    return ROUNDOFF_FACTOR * MACHINE_EPS * l1
