"""
🎲 CTMC Oracle - Verdad de referencia independiente de la fórmula integral
Generador truncado de cada modelo, distribución transitoria por uniformización
y simulación exacta (Gillespie) con resolución instantánea de avalanchas.
"""
import logging
import math
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse
from scipy.stats import nbinom, poisson

import config
from tools.bethe_engine import Distribution, physical_configurations
from tools.particle_models import (
    Configuration,
    ModelKind,
    ModelParams,
    as_positions,
    avalanche_probs,
    is_physical,
    push_rate,
)
from utils.errors import DomainError, PrecisionError, ResourceError

logger = logging.getLogger("CTMCOracle")

State = Tuple[int, ...]

WINDOW_GROWTH = 1.5
MAX_WIDENINGS = 3


# ========================================
# 📦 TYPES
# ========================================

class TruncationWindow(BaseModel):
    """Todas las partículas confinadas a [lo, hi]"""
    model_config = ConfigDict(frozen=True)

    lo: int = Field(..., description="Sitio mínimo")
    hi: int = Field(..., description="Sitio máximo")
    n_particles: int = Field(..., ge=1, description="Número de partículas")
    escape_bound: float = Field(0.0, ge=0.0, description="Cota de la masa que alcanza el borde")

    def contains(self, positions: Sequence[int]) -> bool:
        return all(self.lo <= x <= self.hi for x in positions)


class AvalancheOutcome(BaseModel):
    """Configuración final de una avalancha y su peso"""
    model_config = ConfigDict(frozen=True)

    positions: Tuple[int, ...] = Field(..., description="Posiciones estrictamente crecientes")
    weight: float = Field(..., ge=0.0, description="Probabilidad del desenlace")


class SparseGenerator(BaseModel):
    """Generador Q truncado; el último índice es el estado absorbente 'escapado'"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model: ModelKind
    window: TruncationWindow
    states: Tuple[State, ...] = Field(..., description="Índice → configuración")
    index: Dict[State, int] = Field(..., description="Configuración → índice")
    matrix: sparse.csr_matrix = Field(..., description="Q (filas suman cero)")

    @property
    def escaped_index(self) -> int:
        return len(self.states)

    @property
    def size(self) -> int:
        return len(self.states) + 1


# ========================================
# 🌊 AVALANCHES
# ========================================

def _pile_site(multiset: Sequence[int]) -> Optional[int]:
    for a, b in zip(multiset, multiset[1:]):
        if a == b:
            return a
    return None


def _topple(multiset: Tuple[int, ...], site: int, moving: int) -> Tuple[int, ...]:
    """Mueve `moving` partículas de la pila en `site` a site+1"""
    out = list(multiset)
    first = out.index(site)
    count = out.count(site)
    for i in range(first + count - moving, first + count):
        out[i] = site + 1
    return tuple(sorted(out))


def resolve_avalanche(multiset: Sequence[int], params: ModelParams, tol: Optional[float] = None,
                      cache: Optional[Dict] = None) -> List[AvalancheOutcome]:
    """
    Desenlaces de la avalancha iniciada por una pila (un único sitio con ≥ 2 partículas).

    Cada pila de n partículas en x mueve n partículas a x+1 con probabilidad μ_n
    o n-1 con probabilidad λ_n; la cascada se recorre en anchura hasta que la
    probabilidad sin resolver es < tol.

    Raises:
        PrecisionError: si el residuo no baja de tol en AVALANCHE_MAX_STEPS pasos
    """
    tol = config.ORACLE_TOL if tol is None else tol
    start = tuple(sorted(int(x) for x in multiset))
    site = _pile_site(start)
    if site is None:
        raise DomainError(f"{start} no contiene ninguna pila")
    key = (tuple(x - site for x in start), tol)
    if cache is not None and key in cache:
        return [AvalancheOutcome(positions=tuple(x + site for x in pos), weight=w) for pos, w in cache[key]]

    finals: Dict[Tuple[int, ...], float] = {}
    queue = deque([(start, 1.0)])
    pending = 1.0
    steps = 0
    while queue and pending >= tol:
        steps += 1
        if steps > config.AVALANCHE_MAX_STEPS:
            raise PrecisionError(f"Avalancha sin resolver tras {steps - 1} pasos (residuo {pending:.3e})")
        state, weight = queue.popleft()
        pending -= weight
        pile = _pile_site(state)
        n = state.count(pile)
        mu_n, lambda_n = avalanche_probs(n, params)
        for moving, branch in ((n, mu_n), (n - 1, lambda_n)):
            child = _topple(state, pile, moving)
            child_weight = weight * branch
            if child_weight == 0.0:
                continue
            if _pile_site(child) is None:
                finals[child] = finals.get(child, 0.0) + child_weight
            else:
                queue.append((child, child_weight))
                pending += child_weight

    outcomes = [AvalancheOutcome(positions=pos, weight=w) for pos, w in sorted(finals.items())]
    if cache is not None:
        cache[key] = [(tuple(x - site for x in o.positions), o.weight) for o in outcomes]
    return outcomes


def _sample_avalanche(multiset: Tuple[int, ...], params: ModelParams, rng: np.random.Generator) -> Tuple[int, ...]:
    """Avalancha por sorteos Bernoulli sucesivos; tiempo transcurrido nulo"""
    state = multiset
    pile = _pile_site(state)
    while pile is not None:
        n = state.count(pile)
        mu_n, _ = avalanche_probs(n, params)
        moving = n if rng.random() < mu_n else n - 1
        state = _topple(state, pile, moving)
        pile = _pile_site(state)
    return state


# ========================================
# ⚙️ TRANSITIONS
# ========================================

def _exclusion_jumps(xs: State, p: float, q: float) -> List[Tuple[State, float]]:
    occupied = set(xs)
    moves = []
    for i, x in enumerate(xs):
        if p > 0 and x + 1 not in occupied:
            moves.append((xs[:i] + (x + 1,) + xs[i + 1:], p))
        if q > 0 and x - 1 not in occupied:
            moves.append((xs[:i] + (x - 1,) + xs[i + 1:], q))
    return moves


def _push_jumps(xs: State, params: ModelParams) -> List[Tuple[State, float]]:
    """La partícula i empuja el tramo contiguo que tiene delante en la dirección del salto"""
    n = len(xs)
    moves = []
    for i in range(n):
        j = i
        while j + 1 < n and xs[j + 1] == xs[j] + 1:
            j += 1
        run = j - i + 1
        rate = params.p * push_rate(run, "right", params)
        if rate > 0:
            moves.append((xs[:i] + tuple(x + 1 for x in xs[i:j + 1]) + xs[j + 1:], rate))
        k = i
        while k - 1 >= 0 and xs[k - 1] == xs[k] - 1:
            k -= 1
        run = i - k + 1
        rate = params.q * push_rate(run, "left", params)
        if rate > 0:
            moves.append((xs[:k] + tuple(x - 1 for x in xs[k:i + 1]) + xs[i + 1:], rate))
    return moves


def _zero_range_jumps(xs: State, p: float, q: float) -> List[Tuple[State, float]]:
    """Por sitio ocupado: la última partícula sale a la derecha (p), la primera a la izquierda (q)"""
    moves = []
    for site in sorted(set(xs)):
        first = xs.index(site)
        last = first + xs.count(site) - 1
        if p > 0:
            moves.append((xs[:last] + (site + 1,) + xs[last + 1:], p))
        if q > 0:
            moves.append((xs[:first] + (site - 1,) + xs[first + 1:], q))
    return moves


def _avalanche_triggers(xs: State, p: float, q: float) -> List[Tuple[State, float, bool]]:
    """Saltos ±1 del ASAP; el booleano indica que el destino estaba ocupado (pila)"""
    occupied = set(xs)
    moves = []
    for i, x in enumerate(xs):
        for target, rate in ((x + 1, p), (x - 1, q)):
            if rate <= 0:
                continue
            landed = tuple(sorted(xs[:i] + (target,) + xs[i + 1:]))
            moves.append((landed, rate, target in occupied))
    return moves


def _transitions(kind: ModelKind, xs: State, params: ModelParams, tol: float,
                 cache: Dict) -> List[Tuple[State, float]]:
    if kind is ModelKind.ASEP:
        return _exclusion_jumps(xs, params.p, params.q)
    if kind is ModelKind.PUSH:
        return _push_jumps(xs, params)
    if kind is ModelKind.AZRP:
        return _zero_range_jumps(xs, params.p, params.q)
    moves = []
    for landed, rate, piled in _avalanche_triggers(xs, params.p, params.q):
        if not piled:
            moves.append((landed, rate))
            continue
        outcomes = resolve_avalanche(landed, params, tol, cache)
        resolved = 0.0
        for outcome in outcomes:
            resolved += outcome.weight
            moves.append((outcome.positions, rate * outcome.weight))
        if resolved < 1.0:
            moves.append((None, rate * (1.0 - resolved)))
    return moves


def _check_oracle_params(kind: ModelKind, params: ModelParams) -> None:
    if params.model is not kind:
        raise DomainError(f"Parámetros de {params.model.value} usados con {kind.value}")
    if kind is ModelKind.PUSH and not (0.0 < params.mu < 1.0):
        raise DomainError("El oráculo del PushASEP requiere tasas no negativas (0 < μ < 1)")


# ========================================
# 🧱 GENERATOR & UNIFORMIZATION
# ========================================

def _poisson_reach(tol: float, rate: float) -> int:
    return max(1, int(poisson.isf(tol, rate)) + 1)


def window_for(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]], t: float,
               tol: Optional[float] = None, params: Optional[ModelParams] = None) -> TruncationWindow:
    """
    Ventana [min(Y) - K_izq, max(Y) + K_der] con K de la cola de Poisson del número de eventos.

    Cada evento desplaza una partícula a lo sumo un sitio. Las avalanchas del ASAP
    solo avanzan a la derecha: a la izquierda bastan los saltos de tasa q y a la
    derecha se añade la cola binomial negativa de su recorrido (cada paso continúa
    con probabilidad μ_n ≤ μ).
    """
    kind = ModelKind.parse(model)
    tol = config.ORACLE_TOL if tol is None else tol
    ys = as_positions(Y)
    n = len(ys)
    if t < 0:
        raise DomainError(f"t debe ser ≥ 0 (t={t})")
    if t == 0:
        return TruncationWindow(lo=min(ys) - 1, hi=max(ys) + 1, n_particles=n, escape_bound=0.0)

    if kind is not ModelKind.ASAP:
        rate = n * t * config.WINDOW_SAFETY
        reach = _poisson_reach(tol, rate)
        bound = float(poisson.sf(reach - 1, rate))
        return TruncationWindow(lo=min(ys) - reach, hi=max(ys) + reach, n_particles=n, escape_bound=bound)

    if params is None:
        raise DomainError("La ventana del ASAP requiere los parámetros (μ)")
    left_rate = n * t * params.q * config.WINDOW_SAFETY
    right_rate = n * t * params.p * config.WINDOW_SAFETY
    left = _poisson_reach(tol, left_rate) if params.q > 0 else 0
    right = _poisson_reach(tol, right_rate)
    events = _poisson_reach(tol, n * t)
    overshoot = int(nbinom.isf(tol, events, 1.0 - params.mu)) + 1
    bound = (float(poisson.sf(left - 1, left_rate)) if params.q > 0 else 0.0) + float(poisson.sf(right - 1, right_rate))
    bound += float(poisson.sf(events - 1, n * t)) + float(nbinom.sf(overshoot - 1, events, 1.0 - params.mu))
    return TruncationWindow(lo=min(ys) - left, hi=max(ys) + right + overshoot, n_particles=n, escape_bound=bound)


def widen(window: TruncationWindow, Y: Union[Configuration, Sequence[int]],
          factor: float = WINDOW_GROWTH) -> TruncationWindow:
    """Multiplica por `factor` el alcance de cada lado respecto de Y"""
    ys = as_positions(Y)
    left = max(1, min(ys) - window.lo)
    right = max(1, window.hi - max(ys))
    return TruncationWindow(
        lo=min(ys) - int(math.ceil(left * factor)),
        hi=max(ys) + int(math.ceil(right * factor)),
        n_particles=window.n_particles,
        escape_bound=window.escape_bound,
    )


def state_count(model: Union[str, ModelKind], window: TruncationWindow) -> int:
    kind = ModelKind.parse(model)
    width = window.hi - window.lo + 1
    n = window.n_particles
    return math.comb(width + n - 1, n) if kind.weakly_ordered else math.comb(width, n)


def build_generator(model: Union[str, ModelKind], window: TruncationWindow, params: ModelParams,
                    tol: Optional[float] = None) -> SparseGenerator:
    """
    Generador truncado: transiciones que salen de la ventana van al estado absorbente.

    Raises:
        ResourceError: si el número de estados supera ORACLE_MAX_STATES
    """
    kind = ModelKind.parse(model)
    tol = config.ORACLE_TOL if tol is None else tol
    _check_oracle_params(kind, params)
    count = state_count(kind, window)
    if count > config.ORACLE_MAX_STATES:
        raise ResourceError(f"{count} estados superan ORACLE_MAX_STATES={config.ORACLE_MAX_STATES}")

    states = tuple(physical_configurations(kind, window.n_particles, window.lo, window.hi))
    index = {s: i for i, s in enumerate(states)}
    escaped = len(states)
    cache: Dict = {}
    rows, cols, vals = [], [], []
    for i, xs in enumerate(states):
        outflow = 0.0
        for target, rate in _transitions(kind, xs, params, tol, cache):
            j = escaped if target is None or not window.contains(target) else index[target]
            if j == i:
                continue
            rows.append(i)
            cols.append(j)
            vals.append(rate)
            outflow += rate
        rows.append(i)
        cols.append(i)
        vals.append(-outflow)
    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(escaped + 1, escaped + 1)).tocsr()
    logger.info(f"🧱 Generador {kind.value}: {len(states)} estados en [{window.lo}, {window.hi}]")
    # estados ya validados por construcción
    return SparseGenerator.model_construct(model=kind, window=window, states=states, index=index, matrix=matrix)


def uniformization_distribution(gen: SparseGenerator, Y: Union[Configuration, Sequence[int]], t: float,
                                tol: Optional[float] = None) -> Distribution:
    """
    Fila Y de exp(Qt) por uniformización: Σ_k Poisson(k; Λt)·δ_Y P^k con P = I + Q/Λ.

    Raises:
        ResourceError: si la serie de Poisson supera ORACLE_MAX_POISSON_TERMS
    """
    tol = config.ORACLE_TOL if tol is None else tol
    ys = as_positions(Y)
    if ys not in gen.index:
        raise DomainError(f"Y={ys} no está dentro de la ventana del generador")
    start = np.zeros(gen.size)
    start[gen.index[ys]] = 1.0
    diagonal = gen.matrix.diagonal()
    uniform_rate = float(np.max(np.abs(diagonal))) if diagonal.size else 0.0

    if t == 0 or uniform_rate == 0.0:
        vector = start
    else:
        mean = uniform_rate * t
        terms = int(poisson.isf(tol, mean)) + 1
        if terms > config.ORACLE_MAX_POISSON_TERMS:
            raise ResourceError(f"Serie de Poisson de {terms} términos supera ORACLE_MAX_POISSON_TERMS")
        weights = poisson.pmf(np.arange(terms + 1), mean)
        step = (sparse.identity(gen.size, format="csr") + gen.matrix / uniform_rate).T.tocsr()
        vector = np.zeros(gen.size)
        power = start
        for k in range(terms + 1):
            vector += weights[k] * power
            power = step @ power

    entries = {state: float(vector[i]) for i, state in enumerate(gen.states) if vector[i] != 0.0}
    captured = math.fsum(entries.values())
    return Distribution(entries=entries, captured_mass=captured,
                        escaped_mass=float(vector[gen.escaped_index]), tolerance=tol)


def oracle_distribution(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]], t: float,
                        params: ModelParams, tol: Optional[float] = None) -> Distribution:
    """
    Atajo: ventana + generador + uniformización.

    La masa absorbida se mide; si supera tol la ventana se ensancha hasta
    MAX_WIDENINGS veces.
    """
    kind = ModelKind.parse(model)
    tol = config.ORACLE_TOL if tol is None else tol
    window = window_for(kind, Y, t, tol, params)
    dist = uniformization_distribution(build_generator(kind, window, params, tol), Y, t, tol)
    for _ in range(MAX_WIDENINGS):
        if dist.escaped_mass <= tol:
            break
        window = widen(window, Y)
        logger.warning(f"↔️ Masa escapada {dist.escaped_mass:.2e} > {tol:.0e}: ventana [{window.lo}, {window.hi}]")
        dist = uniformization_distribution(build_generator(kind, window, params, tol), Y, t, tol)
    return dist


# ========================================
# 🎰 GILLESPIE
# ========================================

def _simulate(kind: ModelKind, ys: State, t: float, params: ModelParams, rng: np.random.Generator,
              record: bool = False) -> Tuple[State, List[Tuple[float, State]]]:
    state, now = ys, 0.0
    path = [(0.0, state)] if record else []
    while True:
        if kind is ModelKind.ASAP:
            triggers = _avalanche_triggers(state, params.p, params.q)
            moves = [(landed, rate) for landed, rate, _ in triggers]
        else:
            moves = _transitions(kind, state, params, config.ORACLE_TOL, {})
        if not moves:
            break
        rates = np.array([rate for _, rate in moves])
        total = float(rates.sum())
        now += rng.exponential(1.0 / total)
        if now > t:
            break
        pick = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        state = moves[min(pick, len(moves) - 1)][0]
        if kind is ModelKind.ASAP and _pile_site(state) is not None:
            state = _sample_avalanche(state, params, rng)
        if record:
            path.append((now, state))
    return state, path


def _check_sampler(kind: ModelKind, ys: State, t: float, params: ModelParams) -> None:
    _check_oracle_params(kind, params)
    if not is_physical(kind, ys):
        raise DomainError(f"Y={ys} no está en la región física de {kind.value}")
    if t < 0:
        raise DomainError(f"t debe ser ≥ 0 (t={t})")


def gillespie_sample(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]], t: float,
                     params: ModelParams, seed: Optional[int] = None) -> Configuration:
    """Muestra exacta del estado en t; determinista dada la semilla"""
    kind = ModelKind.parse(model)
    ys = as_positions(Y)
    _check_sampler(kind, ys, t, params)
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    state, _ = _simulate(kind, ys, t, params, rng)
    return Configuration(positions=state, model=kind)


def gillespie_trajectory(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]], t: float,
                         params: ModelParams, seed: Optional[int] = None) -> List[Tuple[float, Tuple[int, ...]]]:
    """Trayectoria completa: lista de (tiempo del evento, configuración tras el evento)"""
    kind = ModelKind.parse(model)
    ys = as_positions(Y)
    _check_sampler(kind, ys, t, params)
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    _, path = _simulate(kind, ys, t, params, rng, record=True)
    return path


def sample_distribution(model: Union[str, ModelKind], Y: Union[Configuration, Sequence[int]], t: float,
                        params: ModelParams, samples: int, seed: Optional[int] = None,
                        workers: int = 1) -> Distribution:
    """
    Distribución empírica de `samples` simulaciones.

    Las muestras se agrupan en bloques de SIMULATION_CHUNK con semillas hijas de
    SeedSequence, de modo que el resultado no depende del número de workers.
    """
    kind = ModelKind.parse(model)
    ys = as_positions(Y)
    _check_sampler(kind, ys, t, params)
    if samples < 0:
        raise DomainError(f"samples debe ser ≥ 0 (samples={samples})")
    chunk = config.SIMULATION_CHUNK
    sizes = [min(chunk, samples - start) for start in range(0, samples, chunk)]
    children = np.random.SeedSequence(config.DEFAULT_SEED if seed is None else seed).spawn(len(sizes))

    def run(job) -> Counter:
        size, child = job
        rng = np.random.default_rng(child)
        return Counter(_simulate(kind, ys, t, params, rng)[0] for _ in range(size))

    jobs = list(zip(sizes, children))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(run, jobs))
    else:
        counts = [run(job) for job in jobs]
    total = Counter()
    for c in counts:
        total.update(c)
    entries = {state: total[state] / samples for state in sorted(total)} if samples else {}
    logger.info(f"🎰 {samples} muestras Gillespie de {kind.value} ({len(entries)} configuraciones)")
    return Distribution(entries=entries, captured_mass=math.fsum(entries.values()))
