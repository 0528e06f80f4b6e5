"""
⚛️ Particle Models - ASEP, PushASEP de dos lados, ASAP y AZRP
Parámetros, tasas de empuje y avalancha, regiones físicas, energía y
matrices S de dispersión de dos cuerpos.
"""
import logging
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from utils.errors import DomainError, PoleError
import config

logger = logging.getLogger("ParticleModels")

SUM_TOLERANCE = 1e-12
RATIO_ONE_TOLERANCE = 1e-12


class ModelKind(str, Enum):
    """Modelo de partículas; el valor es el nombre estable usado en CLI y reportes"""
    ASEP = "asep"
    PUSH = "push"
    ASAP = "asap"
    AZRP = "azrp"

    @classmethod
    def parse(cls, name: Union[str, "ModelKind"]) -> "ModelKind":
        if isinstance(name, ModelKind):
            return name
        key = str(name).strip().lower()
        aliases = {"twosidedpushasep": "push", "pushasep": "push"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"Modelo desconocido: {name!r} (usar asep|push|asap|azrp)")

    @property
    def weakly_ordered(self) -> bool:
        return self is ModelKind.AZRP


class ModelParams(BaseModel):
    """Parámetros validados de un modelo (p, q, λ, μ)"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    model: ModelKind = Field(..., description="Modelo al que pertenecen los parámetros")
    p: float = Field(..., ge=0.0, description="Tasa de salto a la derecha")
    q: float = Field(..., ge=0.0, description="Tasa de salto a la izquierda")
    lam: Optional[float] = Field(None, alias="lambda", description="Parámetro λ (PushASEP / ASAP)")
    mu: Optional[float] = Field(None, description="Parámetro μ (PushASEP / ASAP)")

    @model_validator(mode="before")
    @classmethod
    def _drop_unused(cls, data):
        if isinstance(data, dict):
            kind = ModelKind.parse(data.get("model"))
            data = dict(data, model=kind)
            if kind in (ModelKind.ASEP, ModelKind.AZRP):
                for key in ("lam", "lambda", "mu"):
                    data.pop(key, None)
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> "ModelParams":
        if abs(self.p + self.q - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"p + q debe ser 1 (p={self.p}, q={self.q})")
        if self.model in (ModelKind.PUSH, ModelKind.ASAP):
            if self.lam is None or self.mu is None:
                raise ValueError(f"{self.model.value} requiere λ y μ")
            if abs(self.lam + self.mu - 1.0) > SUM_TOLERANCE:
                raise ValueError(f"λ + μ debe ser 1 (λ={self.lam}, μ={self.mu})")
        if self.model is ModelKind.PUSH and (self.lam == 0.0 or self.mu == 0.0):
            raise ValueError("PushASEP requiere λ ≠ 0 y μ ≠ 0")
        if self.model is ModelKind.ASAP and not (0.0 < self.mu < 1.0):
            raise ValueError(f"ASAP requiere 0 < μ < 1 (μ={self.mu})")
        return self

    def to_record(self) -> Dict[str, str]:
        """Registro plano clave-valor (cadenas decimales)"""
        record = {"model": self.model.value, "p": repr(self.p), "q": repr(self.q)}
        if self.lam is not None:
            record["lambda"] = repr(self.lam)
            record["mu"] = repr(self.mu)
        return record

    @classmethod
    def from_record(cls, record: Dict[str, str]) -> "ModelParams":
        def _num(key):
            value = record.get(key)
            return None if value in (None, "") else float(value)
        return make_params(record["model"], p=_num("p"), q=_num("q"), lam=_num("lambda"), mu=_num("mu"))


def make_params(model: Union[str, ModelKind], p: Optional[float] = None, q: Optional[float] = None,
                lam: Optional[float] = None, mu: Optional[float] = None) -> ModelParams:
    """
    Construye ModelParams completando el parámetro complementario.

    q se deduce de p (q = 1 - p) y λ de μ (o viceversa) cuando falta uno de ellos.
    Los errores de validación se convierten en DomainError.
    """
    kind = ModelKind.parse(model)
    if p is None and q is None:
        raise DomainError("Se requiere p o q")
    if p is None:
        p = 1.0 - q
    if q is None:
        q = 1.0 - p
    if kind in (ModelKind.PUSH, ModelKind.ASAP):
        if lam is None and mu is not None:
            lam = 1.0 - mu
        elif mu is None and lam is not None:
            mu = 1.0 - lam
    try:
        return ModelParams(model=kind, p=p, q=q, lam=lam, mu=mu)
    except ValidationError as e:
        raise DomainError(f"Parámetros inválidos para {kind.value}: {e.errors()[0]['msg']}") from e


class Configuration(BaseModel):
    """Posiciones ordenadas de N partículas en Z (cualquier punto de Z^N es representable)"""
    model_config = ConfigDict(frozen=True)

    positions: Tuple[int, ...] = Field(..., min_length=1, description="Posiciones x_1..x_N")
    model: ModelKind = Field(..., description="Modelo que define la región física")

    @property
    def n(self) -> int:
        return len(self.positions)

    def is_physical(self) -> bool:
        return is_physical(self.model, self.positions)

    def __str__(self) -> str:
        return ",".join(str(x) for x in self.positions)


def parse_configuration(text: str, model: Union[str, ModelKind]) -> Configuration:
    """Convierte '0,1,3' en Configuration; exige la región física del modelo"""
    kind = ModelKind.parse(model)
    try:
        positions = tuple(int(tok) for tok in str(text).split(",") if tok.strip() != "")
    except ValueError:
        raise DomainError(f"Configuración inválida: {text!r}")
    if not positions:
        raise DomainError("La configuración está vacía")
    conf = Configuration(positions=positions, model=kind)
    if not conf.is_physical():
        order = "x_1 ≤ … ≤ x_N" if kind.weakly_ordered else "x_1 < … < x_N"
        raise DomainError(f"{text!r} no está en la región física de {kind.value} ({order})")
    return conf


def as_positions(X: Union[Configuration, Sequence[int]]) -> Tuple[int, ...]:
    if isinstance(X, Configuration):
        return X.positions
    return tuple(int(x) for x in X)


class PushRates(BaseModel):
    """Tasas r_n (derecha) y l_n (izquierda) de un bloque de n partículas"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Tamaño del bloque empujado")
    r_n: float = Field(..., description="Factor de tasa a la derecha")
    l_n: float = Field(..., description="Factor de tasa a la izquierda")


class AvalancheRates(BaseModel):
    """Probabilidades de ramificación de una pila de n partículas"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=2, description="Tamaño de la pila")
    mu_n: float = Field(..., description="Probabilidad de que salten las n partículas")
    lambda_n: float = Field(..., description="Probabilidad de que salten n-1 partículas")


# ========================================
# ⚡ RATES
# ========================================

def _inverse_geometric_sum(ratio: float, n: int) -> float:
    """1 / Σ_{k<n} ratio^k en forma cerrada"""
    if abs(ratio - 1.0) < RATIO_ONE_TOLERANCE:
        return 1.0 / n
    return (1.0 - ratio) / (1.0 - ratio ** n)


def push_rate(n: int, direction: str, params: ModelParams) -> float:
    """
    Factor r_n (direction='right') o l_n (direction='left') del PushASEP.

    r_n = 1/Σ_{k<n}(λ/μ)^k y l_n = 1/Σ_{k<n}(μ/λ)^k; r_1 = l_1 = 1.
    """
    if n < 1:
        raise DomainError(f"El tamaño del bloque debe ser ≥ 1 (n={n})")
    if params.model is not ModelKind.PUSH:
        raise DomainError("push_rate solo aplica al PushASEP")
    if direction == "right":
        return _inverse_geometric_sum(params.lam / params.mu, n)
    if direction == "left":
        return _inverse_geometric_sum(params.mu / params.lam, n)
    raise DomainError(f"Dirección inválida: {direction!r}")


def push_rates(n: int, params: ModelParams) -> PushRates:
    return PushRates(n=n, r_n=push_rate(n, "right", params), l_n=push_rate(n, "left", params))


def avalanche_probs(n: int, params: ModelParams) -> Tuple[float, float]:
    """(μ_n, λ_n) con μ_n = μ(1-(-μ)^{n-1})/(1+μ) y λ_n = 1 - μ_n"""
    if n < 2:
        raise DomainError(f"Una pila requiere n ≥ 2 (n={n})")
    if params.model is not ModelKind.ASAP:
        raise DomainError("avalanche_probs solo aplica al ASAP")
    mu = params.mu
    mu_n = mu * (1.0 - (-mu) ** (n - 1)) / (1.0 + mu)
    return mu_n, 1.0 - mu_n


def avalanche_rates(n: int, params: ModelParams) -> AvalancheRates:
    mu_n, lambda_n = avalanche_probs(n, params)
    return AvalancheRates(n=n, mu_n=mu_n, lambda_n=lambda_n)


def is_physical(model: Union[str, ModelKind], X: Union[Configuration, Sequence[int]]) -> bool:
    """Orden estricto para ASEP/PushASEP/ASAP, orden débil para AZRP"""
    kind = ModelKind.parse(model)
    xs = as_positions(X)
    if kind.weakly_ordered:
        return all(a <= b for a, b in zip(xs, xs[1:]))
    return all(a < b for a, b in zip(xs, xs[1:]))


# ========================================
# 🌀 ENERGY & S-MATRICES
# ========================================

def energy(xi, params: ModelParams):
    """ε(ξ) = p/ξ + qξ - 1 (acepta escalares o arreglos numpy)"""
    arr = np.asarray(xi)
    if np.any(arr == 0):
        raise DomainError("ε(ξ) no está definida en ξ = 0")
    value = params.p / arr + params.q * arr - 1.0
    return value if arr.ndim else complex(value)


class SMatrixCoefficients(BaseModel):
    """
    Forma bilineal de la matriz S.

    Con a = ξ_α y b = ξ_β, numerador y denominador valen c0 + ca·a + cb·b + cab·a·b
    y S = prefactor(a, b) · (-num/den). `scale` es la escala del modelo usada
    para certificar que los denominadores no se anulan sobre el contorno.
    """
    model_config = ConfigDict(frozen=True)

    numerator: Tuple[float, float, float, float] = Field(..., description="(c0, ca, cb, cab) del numerador")
    denominator: Tuple[float, float, float, float] = Field(..., description="(c0, ca, cb, cab) del denominador")
    prefactor: str = Field("none", description="none | b_over_a | a_over_b")
    scale: float = Field(..., description="Escala del modelo para el margen de polos")


def s_matrix_coefficients(model: Union[str, ModelKind], params: ModelParams) -> SMatrixCoefficients:
    kind = ModelKind.parse(model)
    if kind in (ModelKind.ASEP, ModelKind.AZRP):
        p, q = params.p, params.q
        return SMatrixCoefficients(
            numerator=(p, 0.0, -1.0, q),
            denominator=(p, -1.0, 0.0, q),
            prefactor="a_over_b" if kind is ModelKind.AZRP else "none",
            scale=abs(p),
        )
    if params.lam is None or params.mu is None:
        raise DomainError(f"{kind.value} requiere parámetros λ y μ")
    lam, mu = params.lam, params.mu
    if kind is ModelKind.PUSH:
        return SMatrixCoefficients(
            numerator=(mu, -1.0, 0.0, lam),
            denominator=(mu, 0.0, -1.0, lam),
            prefactor="b_over_a",
            scale=abs(mu),
        )
    return SMatrixCoefficients(
        numerator=(mu, 0.0, lam, -1.0),
        denominator=(mu, lam, 0.0, -1.0),
        prefactor="none",
        scale=abs(mu),
    )


def asap_substitution_coefficients(params: ModelParams) -> SMatrixCoefficients:
    """Matriz S del ASEP evaluada en p → -μ/λ, q → 1/λ (coincide con la del ASAP)"""
    if params.model is not ModelKind.ASAP:
        raise DomainError("La sustitución solo aplica a parámetros del ASAP")
    substituted = ModelParams.model_construct(
        model=ModelKind.ASEP, p=-params.mu / params.lam, q=1.0 / params.lam, lam=None, mu=None
    )
    return s_matrix_coefficients(ModelKind.ASEP, substituted)


def _bilinear(c: Tuple[float, float, float, float], a, b):
    return c[0] + c[1] * a + c[2] * b + c[3] * a * b


def s_matrix_values(coeffs: SMatrixCoefficients, a, b):
    """
    Evalúa S_{βα}(a, b) de forma vectorizada.

    Raises:
        PoleError: si algún denominador es < POLE_REL_THRESHOLD·(1 + |num|)
    """
    num = _bilinear(coeffs.numerator, a, b)
    den = _bilinear(coeffs.denominator, a, b)
    bad = np.abs(den) < config.POLE_REL_THRESHOLD * (1.0 + np.abs(num))
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))[0]
        offending = complex(np.atleast_1d(den).ravel()[idx])
        raise PoleError(f"Denominador de la matriz S casi nulo ({abs(offending):.3e})", offending, (a, b))
    core = -num / den
    if coeffs.prefactor == "b_over_a":
        return (b / a) * core
    if coeffs.prefactor == "a_over_b":
        return (a / b) * core
    return core


class SMatrixParts(BaseModel):
    """S = prefactor · núcleo (S† del PushASEP, S‡ del AZRP)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    prefactor: complex = Field(..., description="ξ_β/ξ_α (PushASEP), ξ_α/ξ_β (AZRP) o 1")
    core: complex = Field(..., description="Parte racional bilineal")

    @property
    def value(self) -> complex:
        return self.prefactor * self.core


def s_matrix_parts(model: Union[str, ModelKind], xi_a: complex, xi_b: complex, params: ModelParams) -> SMatrixParts:
    kind = ModelKind.parse(model)
    coeffs = s_matrix_coefficients(kind, params)
    if coeffs.prefactor != "none" and (xi_a == 0 or xi_b == 0):
        raise DomainError("El prefactor de la matriz S no está definido en ξ = 0")
    core = s_matrix_values(coeffs.model_copy(update={"prefactor": "none"}), complex(xi_a), complex(xi_b))
    if coeffs.prefactor == "b_over_a":
        prefactor = complex(xi_b) / complex(xi_a)
    elif coeffs.prefactor == "a_over_b":
        prefactor = complex(xi_a) / complex(xi_b)
    else:
        prefactor = 1.0 + 0.0j
    return SMatrixParts(prefactor=prefactor, core=complex(core))


def s_matrix(model: Union[str, ModelKind], xi_a: complex, xi_b: complex, params: ModelParams) -> complex:
    """
    S_{βα} con (ξ_α, ξ_β) = (xi_a, xi_b), incluido el prefactor del modelo.

    Raises:
        PoleError: denominador (casi) nulo
    """
    return s_matrix_parts(model, xi_a, xi_b, params).value
