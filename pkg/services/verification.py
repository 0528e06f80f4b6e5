"""
✅ Verification Suite - Identidades del modelo como comprobaciones numéricas
Cada check devuelve un CheckReport (nunca lanza por fallos numéricos): el
residuo máximo, la tolerancia, la semilla y el tiempo de ejecución.
"""
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

import config
from tools import bethe_engine as engine
from tools import ctmc_oracle as oracle
from tools.particle_models import (
    ModelKind,
    ModelParams,
    asap_substitution_coefficients,
    avalanche_probs,
    make_params,
    push_rate,
    s_matrix,
    s_matrix_parts,
    s_matrix_values,
)
from utils.errors import BetheLabError, DomainError, PoleError

logger = logging.getLogger("Verification")

Sigma = Tuple[int, ...]


class CheckReport(BaseModel):
    """Resultado de una comprobación; passed ⇔ residual ≤ tolerance"""
    model_config = ConfigDict(frozen=True)

    check: str = Field(..., description="Nombre del check")
    model: str = Field(..., description="Modelo verificado ('-' si no aplica)")
    params: Dict[str, str] = Field(default_factory=dict, description="Parámetros en registro plano")
    residual: float = Field(..., description="Residuo máximo observado")
    tolerance: float = Field(..., description="Tolerancia del check")
    passed: bool = Field(..., description="Resultado")
    seed: int = Field(..., description="Semilla de los sorteos aleatorios")
    wall_time: float = Field(..., description="Segundos de ejecución")
    trials: int = Field(0, description="Casos evaluados")
    details: Dict[str, float] = Field(default_factory=dict, description="Residuos parciales")
    error: Optional[str] = Field(None, description="Error numérico capturado")

    def to_record(self) -> Dict[str, object]:
        return {
            "check": self.check,
            "model": self.model,
            "params": dict(self.params),
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "seed": self.seed,
        }


DEFAULT_PARAMS: Dict[ModelKind, ModelParams] = {
    ModelKind.ASEP: make_params(ModelKind.ASEP, p=0.7),
    ModelKind.PUSH: make_params(ModelKind.PUSH, p=0.6, mu=0.5),
    ModelKind.ASAP: make_params(ModelKind.ASAP, p=0.7, mu=0.4),
    ModelKind.AZRP: make_params(ModelKind.AZRP, p=0.6),
}

# identidades que la suite debe cubrir
IN_SCOPE_IDENTITIES: Tuple[str, ...] = (
    "energy",
    "s_matrix_asep", "s_matrix_push", "s_matrix_asap", "s_matrix_azrp",
    "push_rates", "avalanche_rates", "rate_limits",
    "transition_formula", "initial_condition", "forward_equation",
    "boundary_asep", "boundary_push", "boundary_asap", "boundary_azrp", "avalanche_series",
    "vanishing_singletons_push", "vanishing_singletons_azrp",
    "pair_cancellation_push", "pair_cancellation_azrp", "push_partition",
    "inversion_monomial", "bijection", "mth_marginal", "asap_substitution",
)

CHECK_COVERAGE: Dict[str, Tuple[str, ...]] = {
    "oracle": ("transition_formula", "s_matrix_asep", "s_matrix_push", "s_matrix_asap", "s_matrix_azrp"),
    "boundary": ("boundary_asep", "boundary_push", "boundary_asap", "boundary_azrp"),
    "avalanche_series": ("avalanche_series",),
    "forward": ("forward_equation", "energy"),
    "lemmas": ("initial_condition", "vanishing_singletons_push", "vanishing_singletons_azrp",
               "pair_cancellation_push", "pair_cancellation_azrp", "push_partition"),
    "inversion_identity": ("inversion_monomial",),
    "bijection": ("bijection",),
    "marginal": ("mth_marginal",),
    "substitution": ("asap_substitution",),
    "rates": ("push_rates", "avalanche_rates", "rate_limits"),
}


# ========================================
# 🧰 HELPERS
# ========================================

def _run(check: str, model: str, params: Optional[ModelParams], seed: int, tol: float,
         body: Callable[[], Tuple[float, int, Dict[str, float]]]) -> CheckReport:
    start = time.perf_counter()
    error = None
    try:
        residual, trials, details = body()
    except (BetheLabError, ArithmeticError) as e:
        residual, trials, details = math.inf, 0, {}
        error = f"{type(e).__name__}: {e}"
        logger.error(f"❌ {check} [{model}]: {error}")
    passed = error is None and bool(residual <= tol)
    report = CheckReport(
        check=check,
        model=model,
        params=params.to_record() if params is not None else {},
        residual=float(residual),
        tolerance=tol,
        passed=passed,
        seed=seed,
        wall_time=time.perf_counter() - start,
        trials=trials,
        details=details,
        error=error,
    )
    icon = "✅" if passed else "❌"
    logger.info(f"{icon} {check} [{model}] residuo={report.residual:.3e} tol={tol:.1e} ({report.wall_time:.2f}s)")
    return report


def _seed(seed: Optional[int]) -> int:
    return config.DEFAULT_SEED if seed is None else int(seed)


def _random_configuration(rng: np.random.Generator, kind: ModelKind, n: int, span: int) -> Tuple[int, ...]:
    if kind.weakly_ordered:
        return tuple(sorted(int(v) for v in rng.integers(0, span, size=n)))
    return tuple(sorted(int(v) for v in rng.choice(span, size=n, replace=False)))


def _shifted_right(rng: np.random.Generator, ys: Sequence[int], low: int, high: int) -> Tuple[int, ...]:
    """X = Y + d con d no decreciente en [low, high]: conserva la región física"""
    d = sorted(int(v) for v in rng.integers(low, high + 1, size=len(ys)))
    return tuple(y + s for y, s in zip(ys, d))


# ========================================
# 🔍 CHECKS
# ========================================

def check_oracle_agreement(model, N: int, params: ModelParams, trials: int = 5, t_max: float = 2.0,
                           tol: Optional[float] = None, seed: Optional[int] = None) -> CheckReport:
    """|fórmula integral - uniformización| en (Y, X, t) aleatorios"""
    kind = ModelKind.parse(model)
    if N not in (2, 3, 4):
        raise DomainError(f"check_oracle_agreement requiere N ∈ {{2,3,4}} (N={N})")
    tol = (1e-8 if N == 2 else 1e-6) if tol is None else tol
    seed = _seed(seed)

    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            ys = _random_configuration(rng, kind, N, N + 2)
            t = float(rng.uniform(0.0, t_max))
            dist = oracle.oracle_distribution(kind, ys, t, params)
            support = [s for s, v in dist.entries.items() if v > 1e-4] or list(dist.entries)
            xs = support[int(rng.integers(len(support)))]
            value = engine.transition_probability(kind, ys, xs, t, params).value
            worst = max(worst, abs(value - dist.probability(xs)))
        return worst, trials, {}

    return _run("oracle", kind.value, params, seed, tol, body)


def _boundary_residual(kind: ModelKind, params: ModelParams, u: Callable[[List[int]], float],
                       base: List[int], i: int) -> float:
    x = base[i]

    def at(a: int, b: int) -> float:
        xs = list(base)
        xs[i], xs[i + 1] = a, b
        return u(xs)

    p, q = params.p, params.q
    if kind is ModelKind.ASEP:
        return p * at(x, x) + q * at(x + 1, x + 1) - at(x, x + 1)
    if kind is ModelKind.PUSH:
        return at(x, x) - params.mu * at(x - 1, x) - params.lam * at(x, x + 1)
    if kind is ModelKind.ASAP:
        return at(x, x) - params.lam * at(x - 1, x) - params.mu * at(x - 1, x - 1)
    return at(x, x) - p * at(x, x - 1) - q * at(x + 1, x)


def check_boundary_conditions(model, N: int, params: ModelParams, t: float = 0.5, trials: int = 5,
                              tol: float = 1e-8, seed: Optional[int] = None) -> CheckReport:
    """Condición de contorno de dos partículas de cada modelo sobre la continuación u(X; t)"""
    kind = ModelKind.parse(model)
    if N < 2:
        raise DomainError("Las condiciones de contorno requieren N ≥ 2")
    seed = _seed(seed)

    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            ys = _random_configuration(rng, kind, N, N + 2)
            base = [y + int(d) for y, d in zip(ys, rng.integers(-1, 2, size=N))]
            i = int(rng.integers(0, N - 1))
            u = lambda xs: engine.transition_probability(kind, ys, xs, t, params).value
            worst = max(worst, abs(_boundary_residual(kind, params, u, base, i)))
        return worst, trials, {}

    return _run("boundary", kind.value, params, seed, tol, body)


def check_avalanche_series(params: ModelParams, t: float = 0.5, trials: int = 3, tol: float = 1e-7,
                           seed: Optional[int] = None, cutoff: float = 1e-14) -> CheckReport:
    """
    u(x,x) = λ Σ_{n≥0} μ^n u(x-n-1, x-n) para el ASAP con N = 2.

    La serie se suma sin resto mientras μ^n ≥ cutoff.
    """
    if params.model is not ModelKind.ASAP:
        raise DomainError("check_avalanche_series requiere parámetros del ASAP")
    seed = _seed(seed)
    lam, mu = params.lam, params.mu
    terms = int(math.ceil(math.log(cutoff) / math.log(mu)))

    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            ys = _random_configuration(rng, ModelKind.ASAP, 2, 4)
            x = ys[0] + int(rng.integers(0, 2))
            u = lambda a, b: engine.transition_probability(ModelKind.ASAP, ys, (a, b), t, params).value
            series = math.fsum(lam * mu ** n * u(x - n - 1, x - n) for n in range(terms))
            worst = max(worst, abs(u(x, x) - series))
        return worst, trials, {"terms": float(terms)}

    return _run("avalanche_series", ModelKind.ASAP.value, params, seed, tol, body)


def check_forward_equation(model, N: int, params: ModelParams, t: float = 0.7, trials: int = 5,
                           tol: float = 1e-7, seed: Optional[int] = None) -> CheckReport:
    """d/dt u(X) = Σ_i [p u(X - e_i) + q u(X + e_i)] - N u(X) en X ∈ Z^N aleatorio"""
    kind = ModelKind.parse(model)
    seed = _seed(seed)

    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            ys = _random_configuration(rng, kind, N, N + 2)
            xs = [y + int(d) for y, d in zip(ys, rng.integers(-2, 3, size=N))]
            u = lambda z: engine.transition_probability(kind, ys, z, t, params).value
            lhs = engine.time_derivative(kind, ys, xs, t, params).value
            rhs = -N * u(xs)
            for i in range(N):
                left, right = list(xs), list(xs)
                left[i] -= 1
                right[i] += 1
                rhs += params.p * u(left) + params.q * u(right)
            worst = max(worst, abs(lhs - rhs))
        return worst, trials, {}

    return _run("forward", kind.value, params, seed, tol, body)


def lemma_families(model, N: int) -> Tuple[List[Sigma], List[Tuple[Sigma, Sigma]]]:
    """
    Permutaciones cuya integral I(σ) se anula sola y parejas que se cancelan.

    PushASEP y ASAP: β en la posición β+1 seguido solo de entradas mayores;
    parejas (α, β) adyacentes con un γ < α, β a su derecha. En el ASAP son la
    imagen especular (i → N+1-i) de las familias del ASEP sobre el contorno grande.
    ASEP y AZRP: β en la posición β-1 precedido solo de entradas menores; parejas
    (α, β) adyacentes con un γ > α, β a su izquierda.
    """
    kind = ModelKind.parse(model)
    mirrored = kind in (ModelKind.PUSH, ModelKind.ASAP)
    singles: List[Sigma] = []
    pairs = set()
    for term in engine.permutations_with_inversions(N):
        s = term.sigma
        if term.is_identity():
            continue
        for beta in range(1, N + 1):
            pos = s.index(beta) + 1
            if mirrored and pos == beta + 1 and all(v > beta for v in s[pos:]):
                singles.append(s)
                break
            if not mirrored and pos == beta - 1 and all(v < beta for v in s[:pos - 1]):
                singles.append(s)
                break
        for i in range(N - 1):
            a, b = s[i], s[i + 1]
            if mirrored:
                matched = any(g < min(a, b) for g in s[i + 2:])
            else:
                matched = any(g > max(a, b) for g in s[:i])
            if matched:
                partner = s[:i] + (b, a) + s[i + 2:]
                pairs.add(tuple(sorted((s, partner))))
    return singles, sorted(pairs)


def exact_partition(N: int, singles: Sequence[Sigma],
                    pairs: Sequence[Tuple[Sigma, Sigma]]) -> Optional[List[Tuple[Sigma, ...]]]:
    """Partición de S_N \\ {id} en bloques singulares o parejas (búsqueda exacta)"""
    universe = [t.sigma for t in engine.permutations_with_inversions(N) if not t.is_identity()]
    blocks: Dict[Sigma, List[Tuple[Sigma, ...]]] = {s: [] for s in universe}
    for s in singles:
        blocks[s].append((s,))
    for a, b in pairs:
        blocks[a].append((a, b))
        blocks[b].append((a, b))

    chosen: List[Tuple[Sigma, ...]] = []
    covered = set()

    def search(k: int) -> bool:
        while k < len(universe) and universe[k] in covered:
            k += 1
        if k == len(universe):
            return True
        for block in blocks[universe[k]]:
            if any(s in covered for s in block):
                continue
            chosen.append(block)
            covered.update(block)
            if search(k + 1):
                return True
            chosen.pop()
            covered.difference_update(block)
        return False

    return list(chosen) if search(0) else None


def check_lemmas(model, N: int, params: Optional[ModelParams] = None, tol: float = 1e-10,
                 seed: Optional[int] = None) -> CheckReport:
    """
    I(σ) = 0 para las permutaciones singulares, I(σ) + I(σ') = 0 para las parejas
    y Σ_{σ≠id} I(σ) = 0; en el PushASEP además la partición exacta de S_N \\ {id}.
    """
    kind = ModelKind.parse(model)
    if not 2 <= N <= 4:
        raise DomainError(f"check_lemmas requiere 2 ≤ N ≤ 4 (N={N})")
    params = params or DEFAULT_PARAMS[kind]
    seed = _seed(seed)

    def body():
        rng = np.random.default_rng(seed)
        # estrictamente ordenadas: físicas en los cuatro modelos
        ys = _random_configuration(rng, ModelKind.ASEP, N, N + 2)
        xs = _shifted_right(rng, ys, 1, 2)
        terms = [t for t in engine.permutations_with_inversions(N) if not t.is_identity()]
        values = {t.sigma: engine.i_sigma_at_t0(kind, t, ys, xs, params) for t in terms}
        singles, pairs = lemma_families(kind, N)
        single_res = max((abs(values[s]) for s in singles), default=0.0)
        pair_res = max((abs(values[a] + values[b]) for a, b in pairs), default=0.0)
        full = abs(sum(values[t.sigma] for t in terms))
        details = {
            "singletons": single_res,
            "pairs": pair_res,
            "full_sum": full,
            "n_singletons": float(len(singles)),
            "n_pairs": float(len(pairs)),
        }
        residual = max(single_res, pair_res, full)
        partition = exact_partition(N, singles, pairs)
        details["partition"] = 1.0 if partition is not None else 0.0
        if kind is ModelKind.PUSH and partition is None:
            residual = math.inf
        return residual, len(terms), details

    return _run("lemmas", kind.value, params, seed, tol, body)


def check_inversion_identity(N: int = 4, params: Optional[ModelParams] = None, samples: int = 10,
                             tol: float = 1e-12, seed: Optional[int] = None) -> CheckReport:
    """∏_{(β,α)} ξ_β/ξ_α (prefactor del PushASEP) = ∏_i ξ_{σ(i)}^{σ(i)-i}"""
    params = params or DEFAULT_PARAMS[ModelKind.PUSH]
    seed = _seed(seed)

    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        terms = engine.permutations_with_inversions(N)
        for _ in range(samples):
            xi = rng.uniform(0.5, 1.5, N) * np.exp(1j * rng.uniform(0, 2 * np.pi, N))
            for term in terms:
                lhs = 1.0 + 0.0j
                for beta, alpha in term.inversions:
                    lhs *= s_matrix_parts(ModelKind.PUSH, xi[alpha - 1], xi[beta - 1], params).prefactor
                rhs = np.prod([xi[k - 1] ** (k - i) for i, k in enumerate(term.sigma, start=1)])
                worst = max(worst, abs(lhs - rhs) / abs(rhs))
        return worst, samples * len(terms), {}

    return _run("inversion_identity", "-", params, seed, tol, body)


def check_bijection(params: ModelParams, N: int, t: float = 1.0, trials: int = 5, tol: float = 1e-8,
                    seed: Optional[int] = None) -> CheckReport:
    """P^{AZRP}_{Y'}(X'; t) = P^{ASEP}_{f(Y')}(f(X'); t) con f(x)_i = x_i + i"""
    azrp = make_params(ModelKind.AZRP, p=params.p, q=params.q)
    asep = make_params(ModelKind.ASEP, p=params.p, q=params.q)
    seed = _seed(seed)

    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            ys = _random_configuration(rng, ModelKind.AZRP, N, N + 1)
            xs = _random_configuration(rng, ModelKind.AZRP, N, N + 2)
            zrp = engine.transition_probability(ModelKind.AZRP, ys, xs, t, azrp).value
            ex = engine.transition_probability(
                ModelKind.ASEP,
                engine.azrp_asep_maps("to_asep", ys),
                engine.azrp_asep_maps("to_asep", xs),
                t, asep,
            ).value
            worst = max(worst, abs(zrp - ex))
        return worst, trials, {}

    return _run("bijection", ModelKind.AZRP.value, azrp, seed, tol, body)


def _configurations_with(m: int, x: int, n: int, lo: int, hi: int):
    for left in itertools.combinations_with_replacement(range(lo, x + 1), m - 1):
        for right in itertools.combinations_with_replacement(range(x, hi + 1), n - m):
            yield left + (x,) + right


def check_mth_marginal(params: ModelParams, N: int, m: int, t: float = 1.0, tol: float = 1e-6,
                       seed: Optional[int] = None, xs: Optional[Sequence[int]] = None,
                       reference: str = "formula") -> CheckReport:
    """
    Marginal de la m-ésima partícula del AZRP frente a la suma directa de P_Y(X; t)
    sobre las configuraciones con x_m = x dentro de una ventana certificada.
    reference='oracle' usa la uniformización para la suma directa.
    """
    azrp = make_params(ModelKind.AZRP, p=params.p, q=params.q)
    if not 1 <= m <= N:
        raise DomainError(f"m debe estar en [1, {N}] (m={m})")
    if reference not in ("formula", "oracle"):
        raise DomainError(f"Referencia desconocida: {reference!r}")
    seed = _seed(seed)

    def body():
        rng = np.random.default_rng(seed)
        ys = _random_configuration(rng, ModelKind.AZRP, N, 3)
        window = oracle.window_for(ModelKind.AZRP, ys, t, tol / 100.0)
        cutoff, pruned = engine.left_event_cutoff(N, t, azrp.q, tol / 100.0)
        drift = int(round((azrp.p - azrp.q) * t))
        grid = list(xs) if xs is not None else list(range(ys[m - 1] + drift - 5, ys[m - 1] + drift + 6))
        if reference == "oracle":
            marginal = oracle.oracle_distribution(ModelKind.AZRP, ys, t, azrp, tol / 100.0).marginal(m)
        worst = 0.0
        for x in grid:
            if reference == "oracle":
                direct = marginal.get(x, 0.0)
            elif window.lo <= x <= window.hi:
                direct = math.fsum(
                    engine.transition_probability(ModelKind.AZRP, ys, conf, t, azrp).value
                    for conf in _configurations_with(m, x, N, window.lo, window.hi)
                    if engine.left_events_needed(ModelKind.AZRP, ys, conf) < cutoff
                )
            else:
                direct = 0.0
            value = engine.azrp_mth_particle_distribution(m, ys, x, t, azrp).value
            worst = max(worst, abs(value - direct))
        return worst, len(grid), {"m": float(m), "pruned_mass_bound": pruned}

    return _run("marginal", ModelKind.AZRP.value, azrp, seed, tol, body)


def check_asap_substitution(params: ModelParams, trials: int = 100, tol: float = 1e-8,
                            s_tol: float = 1e-12, t: float = 0.6, seed: Optional[int] = None) -> CheckReport:
    """
    Matriz S del ASAP = matriz S del ASEP con p → -μ/λ, q → 1/λ, y misma
    probabilidad de transición (N = 2) con la energía original.

    El residuo reportado es max(residuo de probabilidad, residuo de S·tol/s_tol).
    """
    if params.model is not ModelKind.ASAP:
        raise DomainError("check_asap_substitution requiere parámetros del ASAP")
    seed = _seed(seed)
    substituted = asap_substitution_coefficients(params)

    def body():
        rng = np.random.default_rng(seed)
        s_res = 0.0
        for _ in range(trials):
            a, b = rng.uniform(0.1, 1.5, 2) * np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
            try:
                direct = s_matrix(ModelKind.ASAP, a, b, params)
                via_asep = complex(s_matrix_values(substituted, a, b))
            except PoleError:
                continue
            s_res = max(s_res, abs(direct - via_asep) / max(1.0, abs(direct)))
        p_res = 0.0
        for _ in range(3):
            ys = _random_configuration(rng, ModelKind.ASAP, 2, 4)
            xs = _shifted_right(rng, ys, 0, 2)
            native = engine.transition_probability(ModelKind.ASAP, ys, xs, t, params).value
            mapped = engine.transition_probability(ModelKind.ASAP, ys, xs, t, params, scattering=substituted).value
            p_res = max(p_res, abs(native - mapped))
        residual = max(p_res, s_res * tol / s_tol)
        return residual, trials + 3, {"s_matrix": s_res, "probability": p_res}

    return _run("substitution", ModelKind.ASAP.value, params, seed, tol, body)


def check_rates(params: ModelParams, n_max: int = 20, tol: float = 1e-12, seed: Optional[int] = None) -> CheckReport:
    """
    Formas cerradas de r_n, l_n y μ_n, cota |μ_n - μ/(1+μ)| ≤ μ^n/(1+μ) y
    límites λ → 1 (r_n → [n=1]) y μ → 1 (l_n → [n=1]).
    """
    if params.model is not ModelKind.PUSH:
        raise DomainError("check_rates requiere parámetros del PushASEP")
    seed = _seed(seed)

    def body():
        lam, mu = params.lam, params.mu
        closed = 0.0
        for n in range(1, n_max + 1):
            right = math.fsum((lam / mu) ** k for k in range(n))
            left = math.fsum((mu / lam) ** k for k in range(n))
            closed = max(closed, abs(push_rate(n, "right", params) * right - 1.0),
                         abs(push_rate(n, "left", params) * left - 1.0))
        details = {"closed_forms": closed}

        avalanche = 0.0
        if 0.0 < mu < 1.0:
            asap = make_params(ModelKind.ASAP, p=params.p, mu=mu)
            for n in range(2, 31):
                mu_n, lambda_n = avalanche_probs(n, asap)
                excess = abs(mu_n - mu / (1 + mu)) - mu ** n / (1 + mu) * (1 + 1e-12) - 1e-15
                if not (0.0 < mu_n < 1.0) or abs(mu_n + lambda_n - 1.0) > 1e-15:
                    excess = math.inf
                avalanche = max(avalanche, excess)
        details["avalanche"] = avalanche

        eps = 1e-14
        tasep_like = make_params(ModelKind.PUSH, p=params.p, lam=1.0 - eps)
        drop_like = make_params(ModelKind.PUSH, p=params.p, mu=1.0 - eps)
        limits = max(
            max(abs(push_rate(n, "right", tasep_like) - (1.0 if n == 1 else 0.0)) for n in range(1, n_max + 1)),
            max(abs(push_rate(n, "left", drop_like) - (1.0 if n == 1 else 0.0)) for n in range(1, n_max + 1)),
        )
        details["limits"] = limits
        return max(closed, avalanche, limits), n_max, details

    return _run("rates", ModelKind.PUSH.value, params, seed, tol, body)


# ========================================
# 🧪 SUITE
# ========================================

ALL_CHECKS = tuple(CHECK_COVERAGE)
PER_MODEL_CHECKS = ("oracle", "boundary", "forward", "lemmas")


def _jobs(checks: Sequence[str], models: Sequence[ModelKind], n: Optional[int], seed: int,
          trials: Optional[int]) -> List[Callable[[], CheckReport]]:
    jobs: List[Callable[[], CheckReport]] = []
    n2 = n or 2
    extra = {} if trials is None else {"trials": trials}
    for name in checks:
        if name in PER_MODEL_CHECKS:
            for kind in models:
                params = DEFAULT_PARAMS[kind]
                if name == "oracle":
                    jobs.append(lambda k=kind, pr=params: check_oracle_agreement(k, n2, pr, seed=seed, **extra))
                elif name == "boundary":
                    jobs.append(lambda k=kind, pr=params: check_boundary_conditions(k, n2, pr, seed=seed, **extra))
                elif name == "forward":
                    jobs.append(lambda k=kind, pr=params: check_forward_equation(k, n2, pr, seed=seed, **extra))
                else:
                    jobs.append(lambda k=kind, pr=params: check_lemmas(k, n or 3, pr, seed=seed))
        elif name == "avalanche_series":
            jobs.append(lambda: check_avalanche_series(DEFAULT_PARAMS[ModelKind.ASAP], seed=seed, **extra))
        elif name == "inversion_identity":
            jobs.append(lambda: check_inversion_identity(n or 4, seed=seed))
        elif name == "bijection":
            jobs.append(lambda: check_bijection(DEFAULT_PARAMS[ModelKind.AZRP], n2, seed=seed, **extra))
        elif name == "marginal":
            for m in range(1, n2 + 1):
                jobs.append(lambda m=m: check_mth_marginal(DEFAULT_PARAMS[ModelKind.AZRP], n2, m, seed=seed))
        elif name == "substitution":
            jobs.append(lambda: check_asap_substitution(DEFAULT_PARAMS[ModelKind.ASAP], seed=seed))
        elif name == "rates":
            jobs.append(lambda: check_rates(DEFAULT_PARAMS[ModelKind.PUSH], seed=seed))
        else:
            raise DomainError(f"Check desconocido: {name!r} (disponibles: {', '.join(ALL_CHECKS)})")
    return jobs


def run_suite(checks: Optional[Sequence[str]] = None, model: Optional[str] = None, n: Optional[int] = None,
              seed: Optional[int] = None, workers: Optional[int] = None,
              trials: Optional[int] = None) -> List[CheckReport]:
    """Ejecuta los checks seleccionados (o todos) y devuelve los reportes en orden fijo"""
    selected = list(checks) if checks else list(ALL_CHECKS)
    models = [ModelKind.parse(model)] if model else list(ModelKind)
    seed = _seed(seed)
    workers = config.VERIFY_WORKERS if workers is None else workers
    jobs = _jobs(selected, models, n, seed, trials)
    logger.info(f"🧪 Ejecutando {len(jobs)} checks (seed={seed}, workers={workers})")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda job: job(), jobs))
    else:
        reports = [job() for job in jobs]
    failed = sum(not r.passed for r in reports)
    if failed:
        logger.warning(f"⚠️ {failed} de {len(reports)} checks fallaron")
    else:
        logger.info(f"✅ {len(reports)} checks superados")
    return reports
