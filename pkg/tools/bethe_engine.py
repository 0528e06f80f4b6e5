"""
🔬 Bethe Engine - Probabilidades de transición por integrales de contorno
Evalúa la fórmula integral sobre todas las permutaciones de S_N, las integrales
I(σ) en t = 0, la marginal de la m-ésima partícula del AZRP y la biyección
entre configuraciones del AZRP y del ASEP.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import poisson

import config
from tools.contour_grid import ContourGrid, TermSum, combine, contract, roundoff_floor
from tools.particle_models import (
    Configuration,
    ModelKind,
    ModelParams,
    SMatrixCoefficients,
    as_positions,
    is_physical,
    s_matrix,
    s_matrix_coefficients,
)
from utils.errors import ConfigurationError, ConvergenceError, DomainError, ResourceError

logger = logging.getLogger("BetheEngine")

ORIGIN_TOLERANCE = 1e-12
TINY = 1e-300

CONTOUR_MODES = ("small", "large", "split")

# clase de contorno de la fórmula integral de cada modelo
CONTOUR_CLASS: Dict[ModelKind, str] = {
    ModelKind.ASEP: "small",
    ModelKind.AZRP: "small",
    ModelKind.ASAP: "large",
    ModelKind.PUSH: "split",
}

# malla logarítmica de radios uniformes candidatos (modo split)
SPLIT_SCAN = tuple(10.0 ** (k / 32.0) for k in range(-96, 97))


# ========================================
# 📦 TYPES
# ========================================

class ContourSpec(BaseModel):
    """Contorno de integración y política adaptativa"""
    model_config = ConfigDict(frozen=True)

    radius: Optional[float] = Field(None, gt=0, description="Radio fijo (None: radio certificado automático)")
    nodes: int = Field(default_factory=lambda: config.CONTOUR_INITIAL_NODES, ge=8, description="Nodos iniciales M")
    adaptive: bool = Field(True, description="Duplicar M hasta converger")
    max_nodes: int = Field(default_factory=lambda: config.CONTOUR_MAX_NODES, description="Tope de nodos")
    rel_tol: float = Field(default_factory=lambda: config.CONTOUR_REL_TOL, gt=0, description="Tolerancia relativa")

    @model_validator(mode="after")
    def _check_nodes(self) -> "ContourSpec":
        if self.nodes & (self.nodes - 1):
            raise ValueError(f"nodes debe ser potencia de dos (nodes={self.nodes})")
        if self.max_nodes < self.nodes:
            raise ValueError(f"max_nodes ({self.max_nodes}) < nodes ({self.nodes})")
        return self


class PermutationTerm(BaseModel):
    """Permutación σ (en una línea, 1-based) y su conjunto de inversiones (β, α)"""
    model_config = ConfigDict(frozen=True)

    sigma: Tuple[int, ...] = Field(..., description="(σ(1), …, σ(N))")
    inversions: Tuple[Tuple[int, int], ...] = Field(..., description="Pares (β, α), β > α, β antes que α")

    @property
    def n(self) -> int:
        return len(self.sigma)

    def positions(self) -> Tuple[int, ...]:
        """pos[k-1] = i tal que σ(i) = k"""
        pos = [0] * self.n
        for i, k in enumerate(self.sigma, start=1):
            pos[k - 1] = i
        return tuple(pos)

    def is_identity(self) -> bool:
        return not self.inversions


class ProbabilityResult(BaseModel):
    """Resultado de una cuadratura con su diagnóstico de error"""
    model_config = ConfigDict(frozen=True)

    value: float = Field(..., description="Parte real de la suma trapezoidal")
    abs_error_estimate: float = Field(..., description="|Δ| entre mallas + |Im| + piso de redondeo")
    cancellation: float = Field(..., description="max |integrando| sobre la malla ÷ |valor|")
    nodes_used: int = Field(..., description="Nodos por círculo de la última malla")
    radius: float = Field(..., description="Mayor radio del contorno")
    radii: Tuple[float, ...] = Field((), description="Radio de cada variable ξ_k")
    imag_part: float = Field(0.0, description="Parte imaginaria residual")
    precision_warning: bool = Field(False, description="cancellation > CANCELLATION_LIMIT")


class Distribution(BaseModel):
    """Mapa configuración → probabilidad con contabilidad de masa"""
    model_config = ConfigDict(frozen=True)

    entries: Dict[Tuple[int, ...], float] = Field(..., description="Probabilidad por configuración")
    captured_mass: float = Field(..., description="Σ entries")
    escaped_mass: float = Field(0.0, description="Cota de la masa fuera de la ventana o no evaluada")
    tolerance: float = Field(0.0, description="Tolerancia numérica asociada")

    def probability(self, positions: Union[Configuration, Sequence[int]]) -> float:
        return self.entries.get(as_positions(positions), 0.0)

    def marginal(self, m: int) -> Dict[int, float]:
        """P(x_m = x) acumulada desde las entradas"""
        out: Dict[int, float] = {}
        for positions, prob in self.entries.items():
            out[positions[m - 1]] = out.get(positions[m - 1], 0.0) + prob
        return dict(sorted(out.items()))

    def to_frame(self, column: str = "prob") -> pd.DataFrame:
        if not self.entries:
            return pd.DataFrame(columns=[column])
        n = len(next(iter(self.entries)))
        rows = [list(k) + [v] for k, v in sorted(self.entries.items())]
        return pd.DataFrame(rows, columns=[f"x{i}" for i in range(1, n + 1)] + [column])


class QuadratureEstimate(BaseModel):
    """Valor complejo convergido de una integral de contorno"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: complex
    abs_error: float
    peak: float
    nodes: int
    radius: float
    radii: Tuple[float, ...] = ()


# ========================================
# 🔁 PERMUTATIONS
# ========================================

@lru_cache(maxsize=None)
def _permutation_terms(n: int) -> Tuple[PermutationTerm, ...]:
    terms = []
    for sigma in itertools.permutations(range(1, n + 1)):
        inversions = tuple(
            (sigma[i], sigma[j])
            for i in range(n) for j in range(i + 1, n)
            if sigma[i] > sigma[j]
        )
        terms.append(PermutationTerm(sigma=sigma, inversions=inversions))
    return tuple(terms)


def permutations_with_inversions(N: int) -> List[PermutationTerm]:
    """Las N! permutaciones en orden lexicográfico, cada una con sus inversiones"""
    if not 1 <= N <= config.MAX_PARTICLES:
        raise DomainError(f"N debe estar en [1, {config.MAX_PARTICLES}] (N={N})")
    return list(_permutation_terms(N))


def a_sigma(model: Union[str, ModelKind], term: PermutationTerm, xi: Sequence[complex], params: ModelParams) -> complex:
    """A_σ = ∏_{(β,α)} S_{βα}(ξ_α, ξ_β); A_id = 1"""
    if len(xi) != term.n:
        raise DomainError(f"Se esperaban {term.n} variables ξ (recibidas {len(xi)})")
    value = 1.0 + 0.0j
    for beta, alpha in term.inversions:
        value *= s_matrix(model, xi[alpha - 1], xi[beta - 1], params)
    return value


# ========================================
# ⭕ RADIUS CERTIFICATION
# ========================================

def _pole_moduli(numer: np.ndarray, denom: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        moduli = np.abs(numer) / np.abs(denom)
    moduli[np.abs(denom) < ORIGIN_TOLERANCE] = np.inf
    return moduli


def _certify_torus(coeffs: SMatrixCoefficients, ra: float, rb: float, mode: str) -> bool:
    """
    Certifica el toro C_ra × C_rb de un par (α, β), con a = ξ_α y b = ξ_β.

    El mínimo de |den| es exacto en la fase de b (|u + b·v| ≥ ||u| - rb·|v||) y se
    muestrea en la de a con cota de Lipschitz.
    small: polos de a y de b fuera de sus círculos. large: dentro.
    split: el polo de a fuera de C_ra y el de b dentro de C_rb.
    """
    n_angles = config.RADIUS_CERT_ANGLES
    roots = np.exp(2j * np.pi * np.arange(n_angles) / n_angles)
    a, b = ra * roots, rb * roots
    c0, ca, cb, cab = coeffs.denominator
    u, v = c0 + ca * a, cb + cab * a
    gap = np.abs(np.abs(u) - rb * np.abs(v))
    slack = 0.5 * (2.0 * np.pi / n_angles) * ra * (abs(ca) + rb * abs(cab))
    scale = coeffs.scale if coeffs.scale > 0 else 0.1 * max(ra, rb)
    if float(np.min(gap)) - slack < config.POLE_MARGIN * scale:
        return False

    # polo en a para b sobre C_rb y polo en b para a sobre C_ra
    a_poles = _pole_moduli(c0 + cb * b, ca + cab * b)
    b_poles = _pole_moduli(u, v)
    a_outside = bool(np.all(a_poles[a_poles > ORIGIN_TOLERANCE * ra] > ra))
    if mode == "small":
        return a_outside and bool(np.all(b_poles[b_poles > ORIGIN_TOLERANCE * rb] > rb))
    if mode == "large":
        return bool(np.all(a_poles[np.isfinite(a_poles)] < ra) and np.all(b_poles[np.isfinite(b_poles)] < rb))
    return a_outside and bool(np.all(b_poles < rb))


def _certify(coeffs: SMatrixCoefficients, radius: float, mode: str, pairs: bool) -> bool:
    if mode == "large" and radius - 1.0 < config.POLE_MARGIN:
        return False
    if not pairs:
        return True
    return _certify_torus(coeffs, radius, radius, mode)


def certify_radius(model: Union[str, ModelKind], params: ModelParams, radius: float, mode: str = "small",
                   N: int = 2, coefficients: Optional[SMatrixCoefficients] = None) -> bool:
    """True si el círculo de radio dado deja los polos fuera (small), dentro (large) o separados (split)"""
    if mode not in CONTOUR_MODES:
        raise DomainError(f"Modo de radio inválido: {mode!r}")
    coeffs = coefficients or s_matrix_coefficients(model, params)
    return _certify(coeffs, radius, mode, pairs=N >= 2)


@lru_cache(maxsize=256)
def _search_small(coeffs: SMatrixCoefficients) -> float:
    steps = config.RADIUS_SEARCH_STEPS
    ok = lambda r: _certify(coeffs, r, "small", True)
    start = 0.5
    if ok(start):
        good, bad = start, None
        for _ in range(steps):
            candidate = good * 2.0
            if candidate > config.FREE_RADIUS_CAP:
                break
            if not ok(candidate):
                bad = candidate
                break
            good = candidate
        if bad is None:
            return good
    else:
        good, bad = None, start
        for _ in range(steps):
            candidate = bad / 2.0
            if ok(candidate):
                good = candidate
                break
            bad = candidate
        if good is None:
            raise ConfigurationError("No se pudo certificar un radio pequeño libre de polos")
    for _ in range(steps):
        mid = 0.5 * (good + bad)
        if ok(mid):
            good = mid
        else:
            bad = mid
    return good


@lru_cache(maxsize=256)
def _search_large(coeffs: SMatrixCoefficients, pairs: bool) -> float:
    steps = config.RADIUS_SEARCH_STEPS
    ok = lambda r: _certify(coeffs, r, "large", pairs)
    good, bad = None, 1.0
    candidate = 2.0
    for _ in range(steps):
        if ok(candidate):
            good = candidate
            break
        bad = candidate
        candidate *= 2.0
    if good is None:
        raise ConfigurationError("No se pudo certificar un radio grande que encierre los polos")
    for _ in range(steps):
        mid = 0.5 * (good + bad)
        if ok(mid):
            good = mid
        else:
            bad = mid
    return good


def choose_radius(model: Union[str, ModelKind], params: ModelParams, N: int, mode: str = "small",
                  coefficients: Optional[SMatrixCoefficients] = None) -> float:
    """
    Radio certificado del contorno.

    small: el mayor r encontrado con todos los polos (salvo el origen) fuera de C_r.
    large: el menor R encontrado con todos los polos finitos dentro de C_R.
    split: el radio uniforme certificado más cercano a la media geométrica del
    rango admisible (polo de ξ_α fuera, polo de ξ_β dentro).

    Raises:
        ConfigurationError: si la búsqueda agota RADIUS_SEARCH_STEPS o no hay radio split uniforme
    """
    if mode not in CONTOUR_MODES:
        raise DomainError(f"Modo de radio inválido: {mode!r}")
    if N < 1:
        raise DomainError(f"N debe ser ≥ 1 (N={N})")
    coeffs = coefficients or s_matrix_coefficients(model, params)
    if mode == "small":
        if N == 1:
            return config.FREE_RADIUS_CAP
        return _search_small(coeffs)
    if mode == "split":
        uniform = _split_uniform(coeffs)
        if not uniform:
            raise ConfigurationError("Ningún radio uniforme separa los polos; se necesitan radios crecientes")
        center = math.sqrt(uniform[0] * uniform[-1])
        return min(uniform, key=lambda r: abs(math.log(r / center)))
    return _search_large(coeffs, N >= 2)


@lru_cache(maxsize=256)
def _split_uniform(coeffs: SMatrixCoefficients) -> Tuple[float, ...]:
    return tuple(r for r in SPLIT_SCAN if _certify_torus(coeffs, r, r, "split"))


def _b_pole_bound(coeffs: SMatrixCoefficients, ra: float) -> float:
    """max |polo en ξ_β| con ξ_α sobre C_ra"""
    n_angles = config.RADIUS_CERT_ANGLES
    a = ra * np.exp(2j * np.pi * np.arange(n_angles) / n_angles)
    c0, ca, cb, cab = coeffs.denominator
    return float(np.max(_pole_moduli(c0 + ca * a, cb + cab * a)))


def _ladder(coeffs: SMatrixCoefficients, first: float, n: int, growth: float) -> Tuple[float, ...]:
    radii = [first]
    for _ in range(n - 1):
        radii.append(growth * max(radii[-1], _b_pole_bound(coeffs, radii[-1])))
    return tuple(radii)


@lru_cache(maxsize=256)
def _split_ladder(coeffs: SMatrixCoefficients, n: int, center: float) -> Tuple[float, ...]:
    """
    Radios r_1 < … < r_n con r_{k+1} = g·max(r_k, polo de ξ_β sobre C_{r_k}).

    r_1 se ajusta por bisección para que la media geométrica quede en `center`.
    """
    growth = 1.0 + config.SPLIT_RADIUS_GAP
    target = math.log(center)

    def log_mean(log_first: float) -> float:
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(_ladder(coeffs, math.exp(log_first), n, growth))))

    lo, hi = target - 20.0, target
    for _ in range(config.RADIUS_SEARCH_STEPS * 3):
        mid = 0.5 * (lo + hi)
        if log_mean(mid) > target:
            hi = mid
        else:
            lo = mid
    radii = _ladder(coeffs, math.exp(lo), n, growth)
    certified = all(math.isfinite(r) for r in radii) and all(
        _certify_torus(coeffs, radii[i], radii[j], "split") for i in range(n) for j in range(i + 1, n)
    )
    if not certified:
        raise ConfigurationError(f"No se pudo certificar una escalera de {n} radios crecientes")
    logger.debug(f"🪜 Radios crecientes: {', '.join(f'{r:.4g}' for r in radii)}")
    return radii


def _split_center(params: ModelParams) -> float:
    """Punto fijo de ξ → (μ/λ)/ξ, que conserva la clase split del PushASEP"""
    if params.model is ModelKind.PUSH:
        return math.sqrt(params.mu / params.lam)
    return 1.0


def choose_radii(model: Union[str, ModelKind], params: ModelParams, N: int, t: float = 0.0,
                 degree: float = 0.0, coefficients: Optional[SMatrixCoefficients] = None) -> Tuple[float, ...]:
    """
    Radios de trabajo de las N variables según la clase de contorno del modelo.

    ASEP y AZRP: contorno pequeño; ASAP: contorno grande (R > 1); PushASEP:
    contorno split, uniforme si existe y si no radios crecientes r_1 < … < r_N.
    En los modos uniformes el radio es el punto de silla de r^E·e^{Nt(p/r + qr)}
    acotado al rango certificado, con E = Σx - Σy.
    """
    kind = ModelKind.parse(model)
    mode = CONTOUR_CLASS[kind]
    coeffs = coefficients or s_matrix_coefficients(kind, params)
    p, q = params.p, params.q
    if N == 1:
        return (_working_radius(config.FREE_RADIUS_CAP, mode, True, 1, degree, t, p, q),)
    if mode != "split":
        certified = choose_radius(kind, params, N, mode, coefficients=coeffs)
        return (_working_radius(certified, mode, False, N, degree, t, p, q),) * N
    uniform = _split_uniform(coeffs)
    if not uniform:
        return _split_ladder(coeffs, N, _split_center(params))
    target = _saddle(uniform[0], uniform[-1], N, degree, t, p, q)
    return (min(uniform, key=lambda r: abs(math.log(r / target))),) * N


def _working_radius(certified: float, mode: str, free: bool, n: int, degree: float,
                    t: float, p: float, q: float) -> float:
    """Radio de trabajo: punto de silla de r^E·e^{Nt(p/r + qr)} acotado al rango certificado"""
    if free:
        lo, hi = 1.0 / config.FREE_RADIUS_CAP, config.FREE_RADIUS_CAP
    elif mode == "small":
        lo, hi = config.SMALL_RADIUS_FLOOR * certified, config.SMALL_RADIUS_FACTOR * certified
    else:
        lo, hi = config.LARGE_RADIUS_FACTOR * certified, 4.0 * config.LARGE_RADIUS_FACTOR * certified
    return _saddle(lo, hi, n, degree, t, p, q)


def _saddle(lo: float, hi: float, n: int, degree: float, t: float, p: float, q: float) -> float:
    a, c = n * t * q, n * t * p
    if a == 0.0 and c == 0.0:
        if degree > 0:
            return lo
        if degree < 0:
            return hi
        return math.sqrt(lo * hi)
    if a > 0.0:
        saddle = (-degree + math.sqrt(degree * degree + 4.0 * a * c)) / (2.0 * a)
    elif degree > 0:
        saddle = c / degree
    else:
        return hi
    return min(max(saddle, lo), hi)


# ========================================
# ∮ QUADRATURE DRIVER
# ========================================

def _check_grid(nodes: int, n_vars: int) -> bool:
    return nodes ** n_vars <= config.CONTOUR_MAX_GRID_POINTS


def _adaptive(evaluate: Callable[[int], TermSum], contour: ContourSpec, n_vars: int,
              radii: Sequence[float], label: str) -> QuadratureEstimate:
    """Duplica M hasta que |Δ| ≤ max(rel_tol·|v|, piso de redondeo)"""
    nodes = contour.nodes
    if not _check_grid(nodes, n_vars):
        raise ResourceError(f"Malla {nodes}^{n_vars} supera CONTOUR_MAX_GRID_POINTS ({label})")
    current = evaluate(nodes)
    if not contour.adaptive:
        error = abs(current.value.imag) + roundoff_floor(current.l1)
        return QuadratureEstimate(value=current.value, abs_error=error, peak=current.peak,
                                  nodes=nodes, radius=max(radii), radii=tuple(radii))

    previous = None
    while True:
        refined_nodes = 2 * nodes
        if refined_nodes > contour.max_nodes or not _check_grid(refined_nodes, n_vars):
            last = previous.value if previous is not None else current.value
            raise ConvergenceError(
                f"Cuadratura sin convergencia en M={nodes} ({label}): "
                f"{last:.6g} → {current.value:.6g}",
                iterates=(last, current.value),
                nodes=(nodes // 2 if previous is not None else nodes, nodes),
            )
        refined = evaluate(refined_nodes)
        delta = abs(refined.value - current.value)
        floor = roundoff_floor(max(current.l1, refined.l1))
        if delta <= max(contour.rel_tol * max(abs(refined.value), TINY), floor):
            error = delta + abs(refined.value.imag) + floor
            return QuadratureEstimate(value=refined.value, abs_error=error, peak=refined.peak,
                                      nodes=refined_nodes, radius=max(radii),
                                      radii=tuple(radii))
        logger.debug(f"🔁 {label}: M={refined_nodes} Δ={delta:.3e}")
        previous, current, nodes = current, refined, refined_nodes


def _map_ordered(func, items: Sequence, workers: int) -> List:
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _term_exponents(term: PermutationTerm, xs: Sequence[int], ys: Sequence[int]) -> List[int]:
    """La variable k lleva el exponente x_{σ⁻¹(k)} - y_k - 1"""
    pos = term.positions()
    return [xs[pos[k] - 1] - ys[k] - 1 for k in range(term.n)]


def _grids(nodes: int, radii: Sequence[float], p: float, q: float, t: float) -> List[ContourGrid]:
    """Una malla por variable; las variables con el mismo radio comparten objeto"""
    shared: Dict[float, ContourGrid] = {}
    for r in radii:
        if r not in shared:
            shared[r] = ContourGrid(nodes, r, p, q, t)
    return [shared[r] for r in radii]


def _sum_terms(grids: Sequence[ContourGrid], coeffs: SMatrixCoefficients, terms: Sequence[PermutationTerm],
               xs: Sequence[int], ys: Sequence[int], with_energy: bool, workers: int) -> TermSum:
    n = len(grids)
    tables = {(a, b): grids[a].s_table(coeffs, grids[b]) for a in range(n) for b in range(a + 1, n)}

    def one(term: PermutationTerm) -> TermSum:
        unaries = [grids[k].unary(e) for k, e in enumerate(_term_exponents(term, xs, ys))]
        pairs = [(alpha - 1, beta - 1) for beta, alpha in term.inversions]
        pair_tables = [tables[pair] for pair in pairs]
        if not with_energy:
            return contract(unaries, pairs, pair_tables)
        # d/dt del integrando: factor Σ_k ε(ξ_k)
        parts = []
        for k in range(len(unaries)):
            slot = list(unaries)
            slot[k] = slot[k] * grids[k].energy
            parts.append(contract(slot, pairs, pair_tables))
        return combine(parts)

    return combine(_map_ordered(one, list(terms), workers))


def _validate_query(kind: ModelKind, ys: Tuple[int, ...], xs: Tuple[int, ...], t: float) -> None:
    if not 1 <= len(ys) <= config.MAX_PARTICLES:
        raise DomainError(f"N debe estar en [1, {config.MAX_PARTICLES}] (N={len(ys)})")
    if len(xs) != len(ys):
        raise DomainError(f"X e Y deben tener el mismo número de partículas ({len(xs)} ≠ {len(ys)})")
    if not is_physical(kind, ys):
        raise DomainError(f"Y={ys} no está en la región física de {kind.value}")
    if not (t >= 0.0 and math.isfinite(t)):
        raise DomainError(f"t debe ser finito y ≥ 0 (t={t})")


def _resolve_radii(kind: ModelKind, params: ModelParams, coeffs: SMatrixCoefficients, n: int,
                   contour: ContourSpec, degree: float, t: float) -> Tuple[float, ...]:
    if contour.radius is not None:
        mode = CONTOUR_CLASS[kind]
        if n >= 2 and not _certify(coeffs, contour.radius, mode, pairs=True):
            raise ConfigurationError(
                f"El radio {contour.radius} no cumple la clase de contorno '{mode}' de {kind.value}")
        return (contour.radius,) * n
    return choose_radii(kind, params, n, t, degree, coefficients=coeffs)


def _to_result(estimate: QuadratureEstimate) -> ProbabilityResult:
    value = estimate.value.real
    cancellation = estimate.peak / max(abs(value), TINY)
    warning = cancellation > config.CANCELLATION_LIMIT
    if warning:
        logger.debug(f"⚠️ Cancelación alta ({cancellation:.2e}) con valor {value:.3e}")
    return ProbabilityResult(
        value=value,
        abs_error_estimate=estimate.abs_error,
        cancellation=cancellation,
        nodes_used=estimate.nodes,
        radius=estimate.radius,
        radii=estimate.radii,
        imag_part=estimate.value.imag,
        precision_warning=warning,
    )


def _integrate(kind: ModelKind, ys: Tuple[int, ...], xs: Tuple[int, ...], t: float, params: ModelParams,
               terms: Sequence[PermutationTerm], contour: Optional[ContourSpec], workers: Optional[int],
               scattering: Optional[SMatrixCoefficients], with_energy: bool, label: str) -> QuadratureEstimate:
    contour = contour or ContourSpec()
    workers = config.ENGINE_WORKERS if workers is None else workers
    coeffs = scattering or s_matrix_coefficients(kind, params)
    n = len(ys)
    radii = _resolve_radii(kind, params, coeffs, n, contour, float(sum(xs) - sum(ys)), t)

    def evaluate(nodes: int) -> TermSum:
        grids = _grids(nodes, radii, params.p, params.q, t)
        return _sum_terms(grids, coeffs, terms, xs, ys, with_energy, workers)

    return _adaptive(evaluate, contour, n, radii, label)


# ========================================
# 🎯 PUBLIC OPERATIONS
# ========================================

def transition_probability(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]],
                           X: Union[Configuration, Sequence[int]], t: float, params: ModelParams,
                           contour: Optional[ContourSpec] = None, workers: Optional[int] = None,
                           scattering: Optional[SMatrixCoefficients] = None) -> ProbabilityResult:
    """
    P_Y(X; t) por la fórmula integral de Bethe.

    X puede ser cualquier punto de Z^N: fuera de la región física el valor es la
    continuación analítica u(X; t). `scattering` reemplaza la matriz S del modelo
    conservando la energía ε(ξ) de `params`.

    Raises:
        PoleError, ConvergenceError, ResourceError, ConfigurationError
    """
    kind = ModelKind.parse(model)
    ys, xs = as_positions(Y), as_positions(X)
    _validate_query(kind, ys, xs, t)
    terms = permutations_with_inversions(len(ys))
    estimate = _integrate(kind, ys, xs, t, params, terms, contour, workers, scattering,
                          with_energy=False, label=f"P[{kind.value}]")
    return _to_result(estimate)


def time_derivative(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]],
                    X: Union[Configuration, Sequence[int]], t: float, params: ModelParams,
                    contour: Optional[ContourSpec] = None, workers: Optional[int] = None) -> ProbabilityResult:
    """d/dt u(X; t), derivando bajo la integral (factor Σ ε(ξ_i))"""
    kind = ModelKind.parse(model)
    ys, xs = as_positions(Y), as_positions(X)
    _validate_query(kind, ys, xs, t)
    terms = permutations_with_inversions(len(ys))
    estimate = _integrate(kind, ys, xs, t, params, terms, contour, workers, None,
                          with_energy=True, label=f"dP/dt[{kind.value}]")
    return _to_result(estimate)


def i_sigma_at_t0(model: Union[str, ModelKind], term: PermutationTerm, Y: Union[Configuration, Sequence[int]],
                  X: Union[Configuration, Sequence[int]], params: ModelParams,
                  contour: Optional[ContourSpec] = None) -> complex:
    """I(σ): integral de un solo término de permutación, sin el factor exponencial"""
    kind = ModelKind.parse(model)
    ys, xs = as_positions(Y), as_positions(X)
    _validate_query(kind, ys, xs, 0.0)
    if term.n != len(ys):
        raise DomainError(f"La permutación tiene {term.n} entradas y la configuración {len(ys)}")
    estimate = _integrate(kind, ys, xs, 0.0, params, [term], contour, 1, None,
                          with_energy=False, label=f"I{term.sigma}")
    return estimate.value


@lru_cache(maxsize=None)
def _gaussian_coefficients(n: int, k: int) -> Tuple[int, ...]:
    """Coeficientes enteros del polinomio [n, k]_τ"""
    if k < 0 or k > n:
        return ()
    if k == 0 or k == n:
        return (1,)
    left = _gaussian_coefficients(n - 1, k - 1)
    right = (0,) * k + _gaussian_coefficients(n - 1, k)
    size = max(len(left), len(right))
    left = left + (0,) * (size - len(left))
    right = right + (0,) * (size - len(right))
    return tuple(a + b for a, b in zip(left, right))


def q_binomial(n: int, k: int, tau: float) -> float:
    """Coeficiente binomial gaussiano [n, k]_τ; 0 fuera de 0 ≤ k ≤ n"""
    if k < 0 or k > n:
        return 0.0
    return float(np.polynomial.polynomial.polyval(tau, _gaussian_coefficients(n, k)))


def azrp_mth_particle_distribution(m: int, Y: Union[Configuration, Sequence[int]], x: int, t: float,
                                   params: ModelParams, contour_large: Optional[ContourSpec] = None,
                                   workers: Optional[int] = None) -> ProbabilityResult:
    """
    P(x_m(t) = x) para el AZRP (coordenadas del AZRP).

    Suma sobre subconjuntos S con |S| ≥ m de integrales |S|-dimensionales sobre
    C_R; la base del binomial gaussiano es τ = p/q. El integrando se evalúa en el
    sitio x + m del ASEP, imagen de la m-ésima partícula por la biyección.
    """
    ys = as_positions(Y)
    n = len(ys)
    _validate_query(ModelKind.AZRP, ys, ys, t)
    if not 1 <= m <= n:
        raise DomainError(f"m debe estar en [1, {n}] (m={m})")
    p, q = params.p, params.q
    if p <= 0.0 or q <= 0.0:
        raise DomainError("La marginal requiere p > 0 y q > 0")
    contour = contour_large or ContourSpec()
    workers = config.ENGINE_WORKERS if workers is None else workers
    tau = p / q
    site = x + m
    asep_coeffs = s_matrix_coefficients(ModelKind.ASEP, params)
    certified = _search_large(asep_coeffs, n >= 2)

    subsets = [s for size in range(m, n + 1) for s in itertools.combinations(range(1, n + 1), size)]

    def one(subset: Tuple[int, ...]) -> Tuple[float, QuadratureEstimate]:
        k = len(subset)
        weight = sum(subset)
        coefficient = ((-1) ** (m + 1) * (p * q) ** (m * (m - 1) / 2)
                       * q_binomial(k - 1, k - m, tau)
                       * p ** (weight - m * k) / q ** (weight - k * (k + 1) / 2))
        exponents = [site - (ys[i - 1] + i) - 1 for i in subset]
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        degree = float(sum(e + 1 for e in exponents) - len(pairs))
        if contour.radius is not None:
            if not _certify(asep_coeffs, contour.radius, "large", pairs=k >= 2):
                raise ConfigurationError(f"El radio {contour.radius} no encierra todos los polos")
            radius = contour.radius
        else:
            radius = _working_radius(certified, "large", False, k, degree, t, p, q)

        def evaluate(nodes: int) -> TermSum:
            grid = ContourGrid(nodes, radius, p, q, t)
            table, abs_table = grid.marginal_table(p, q)
            unit = grid.unit_factor()
            unaries = [grid.unary(e) * unit for e in exponents]
            # (1 - ξ_1⋯ξ_k) separado en dos contracciones
            tables = [(table, abs_table)] * len(pairs)
            plain = contract(unaries, pairs, tables)
            shifted = contract([u * grid.points for u in unaries], pairs, tables)
            return TermSum(value=plain.value - shifted.value, l1=plain.l1 + shifted.l1,
                           peak=max(plain.peak, shifted.peak))

        return coefficient, _adaptive(evaluate, contour, k, (radius,) * k, f"I_Z{subset}")

    parts = _map_ordered(one, subsets, workers)
    value = combine([TermSum(value=c * est.value, l1=0.0, peak=0.0) for c, est in parts]).value
    error = math.fsum(abs(c) * est.abs_error for c, est in parts)
    peak = max((abs(c) * est.peak for c, est in parts), default=0.0)
    estimate = QuadratureEstimate(
        value=value,
        abs_error=error,
        peak=peak,
        nodes=max((est.nodes for _, est in parts), default=contour.nodes),
        radius=max((est.radius for _, est in parts), default=certified),
    )
    return _to_result(estimate)


def azrp_asep_maps(direction: str, X: Union[Configuration, Sequence[int]]) -> Configuration:
    """f: (x_i) → (x_i + i) del AZRP al ASEP ('to_asep') y su inversa ('to_azrp')"""
    xs = as_positions(X)
    if direction == "to_asep":
        source, target, shift = ModelKind.AZRP, ModelKind.ASEP, 1
    elif direction == "to_azrp":
        source, target, shift = ModelKind.ASEP, ModelKind.AZRP, -1
    else:
        raise DomainError(f"Dirección inválida: {direction!r} (to_asep|to_azrp)")
    if not is_physical(source, xs):
        raise DomainError(f"{xs} no está en la región física de {source.value}")
    mapped = tuple(x + shift * i for i, x in enumerate(xs, start=1))
    assert is_physical(target, mapped), f"Imagen {mapped} fuera de la región física de {target.value}"
    return Configuration(positions=mapped, model=target)


def physical_configurations(model: Union[str, ModelKind], n: int, lo: int, hi: int) -> Iterable[Tuple[int, ...]]:
    """Configuraciones físicas de n partículas en [lo, hi], en orden lexicográfico"""
    kind = ModelKind.parse(model)
    sites = range(lo, hi + 1)
    if kind.weakly_ordered:
        return itertools.combinations_with_replacement(sites, n)
    return itertools.combinations(sites, n)


def left_events_needed(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]],
                       X: Union[Configuration, Sequence[int]]) -> int:
    """
    Mínimo número de saltos a la izquierda para ir de Y a X.

    Cada evento a la izquierda desplaza cada partícula a lo sumo un sitio; solo
    el empuje del PushASEP mueve varias partículas en el mismo evento.
    """
    kind = ModelKind.parse(model)
    shifts = [max(0, y - x) for y, x in zip(as_positions(Y), as_positions(X))]
    if kind is ModelKind.PUSH:
        return max(max(shifts, default=0), -(-sum(shifts) // max(len(shifts), 1)))
    return sum(shifts)


def left_event_cutoff(n: int, t: float, q: float, prune_tol: float) -> Tuple[int, float]:
    """
    Menor D con P(Poisson(n·q·t) ≥ D) ≤ prune_tol, y esa cota.

    Las configuraciones que requieren ≥ D saltos a la izquierda tienen masa total
    acotada por la cota devuelta.
    """
    rate = n * q * t
    if rate == 0.0:
        return 1, 0.0
    cutoff = int(poisson.isf(prune_tol, rate)) + 1
    return cutoff, float(poisson.sf(cutoff - 1, rate))


def exact_distribution(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]], t: float,
                       params: ModelParams, lo: int, hi: int, contour: Optional[ContourSpec] = None,
                       workers: Optional[int] = None, prune_tol: Optional[float] = None) -> Distribution:
    """
    P_Y(·; t) por la fórmula integral en todas las configuraciones físicas de [lo, hi].

    Con prune_tol se omiten las configuraciones que requieren al menos D saltos a
    la izquierda (ver left_event_cutoff); su masa total, acotada por la cola de
    Poisson, queda en escaped_mass. Son las de peor condicionamiento sobre el
    contorno pequeño (integrando ~ r^{Σx-Σy}).
    """
    kind = ModelKind.parse(model)
    ys = as_positions(Y)
    if lo > min(ys) or hi < max(ys):
        raise DomainError(f"La ventana [{lo}, {hi}] no contiene Y={ys}")
    cutoff, bound = (None, 0.0)
    if prune_tol is not None:
        cutoff, bound = left_event_cutoff(len(ys), t, params.q, prune_tol)
    entries: Dict[Tuple[int, ...], float] = {}
    worst = 0.0
    skipped = 0
    for xs in physical_configurations(kind, len(ys), lo, hi):
        if cutoff is not None and left_events_needed(kind, ys, xs) >= cutoff:
            skipped += 1
            continue
        result = transition_probability(kind, ys, xs, t, params, contour=contour, workers=workers)
        entries[xs] = result.value
        worst = max(worst, result.abs_error_estimate)
    captured = math.fsum(entries.values())
    logger.info(f"✅ Distribución exacta {kind.value}: {len(entries)} configuraciones "
                f"({skipped} omitidas), masa {captured:.12f}")
    return Distribution(entries=entries, captured_mass=captured, escaped_mass=bound if skipped else 0.0,
                        tolerance=worst)
