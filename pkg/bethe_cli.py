"""
🧪 BetheLab CLI - Probabilidades de transición, simulación y verificación
Comandos: prob, marginal, simulate, verify, sweep.

Precedencia de configuración: valores por defecto < config.py / entorno
< archivo --config (líneas `clave = valor`) < flags de la línea de comandos.

Códigos de salida: 0 éxito, 1 algún check falló, 2 uso/configuración,
3 fallo numérico (polo, convergencia, recursos, precisión).
"""
import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

import config
from services.report_writer import FORMATS, ReportResult, ReportWriter
from services.verification import ALL_CHECKS, run_suite
from tools import bethe_engine as engine
from tools import ctmc_oracle as oracle
from tools.particle_models import ModelKind, ModelParams, make_params, parse_configuration
from utils.errors import (
    BetheLabError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    PoleError,
    PrecisionError,
    ResourceError,
)
from utils.logger import get_logger, log_error_with_context, set_console_level

logger = get_logger("BetheCLI")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

COMMANDS = ("prob", "marginal", "simulate", "verify", "sweep")
SWEEP_PARAMS = ("t", "p", "mu")


# ========================================
# ⚙️ RUN CONFIG
# ========================================

class RunConfig(BaseModel):
    """Configuración completa y validada de una ejecución"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: str = Field(..., description="prob|marginal|simulate|verify|sweep")
    model: Optional[ModelKind] = Field(None, description="Modelo de partículas")
    p: Optional[float] = Field(None, description="Tasa de salto a la derecha")
    q: Optional[float] = Field(None, description="Tasa de salto a la izquierda")
    lam: Optional[float] = Field(None, description="λ (PushASEP / ASAP)")
    mu: Optional[float] = Field(None, description="μ (PushASEP / ASAP)")
    y: Optional[str] = Field(None, description="Configuración inicial 'y1,y2,...'")
    x: Optional[str] = Field(None, description="Configuración final 'x1,x2,...'")
    m: Optional[int] = Field(None, description="Índice de partícula para la marginal")
    t: float = Field(1.0, ge=0, description="Tiempo")
    grid: Optional[str] = Field(None, description="Rejilla 'inicio:fin:paso' o lista 'a,b,c'")
    sweep: str = Field("t", description="Parámetro barrido (t|p|mu)")
    radius: Optional[float] = Field(None, gt=0, description="Radio fijo del contorno")
    nodes: int = Field(default_factory=lambda: config.CONTOUR_INITIAL_NODES, description="Nodos iniciales")
    max_nodes: int = Field(default_factory=lambda: config.CONTOUR_MAX_NODES, description="Tope de nodos")
    rel_tol: float = Field(default_factory=lambda: config.CONTOUR_REL_TOL, gt=0, description="Tolerancia relativa")
    oracle_tol: float = Field(default_factory=lambda: config.ORACLE_TOL, gt=0, description="Tolerancia del oráculo")
    oracle: bool = Field(False, description="Comparar con el oráculo CTMC")
    samples: int = Field(10000, ge=0, description="Muestras de Gillespie")
    trajectory: bool = Field(False, description="Volcar una trayectoria en vez de la distribución")
    seed: int = Field(default_factory=lambda: config.DEFAULT_SEED, description="Semilla")
    check: List[str] = Field(default_factory=list, description="Checks seleccionados (vacío: todos)")
    n: Optional[int] = Field(None, ge=1, description="Número de partículas de los checks")
    trials: Optional[int] = Field(None, ge=1, description="Casos aleatorios por check")
    workers: int = Field(default_factory=lambda: config.ENGINE_WORKERS, ge=1, description="Hilos")
    output: Optional[str] = Field(None, description="Archivo de salida (stdout si falta)")
    format: str = Field("csv", description="csv|json|xlsx")
    quiet: bool = Field(False, description="Sin resumen humano")

    @field_validator("check", mode="before")
    @classmethod
    def _split_checks(cls, value):
        if isinstance(value, str):
            value = [value]
        return [tok.strip() for item in value or [] for tok in str(item).split(",") if tok.strip()]

    @field_validator("model", mode="before")
    @classmethod
    def _parse_model(cls, value):
        return None if value is None else ModelKind.parse(value)

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ValueError(f"comando desconocido: {self.command}")
        if self.format not in FORMATS:
            raise ValueError(f"formato desconocido: {self.format}")
        if self.m is not None and self.command != "marginal":
            raise ValueError("m solo aplica al comando marginal")
        if self.command in ("prob", "marginal", "simulate", "sweep"):
            if self.y is None:
                raise ValueError(f"{self.command} requiere --y")
            if self.model is None and self.command != "marginal":
                raise ValueError(f"{self.command} requiere --model")
        if self.command in ("prob", "sweep") and self.x is None:
            raise ValueError(f"{self.command} requiere --x")
        if self.command == "marginal":
            if self.m is None:
                raise ValueError("marginal requiere --m")
            if self.model not in (None, ModelKind.AZRP):
                raise ValueError("marginal solo está definida para el AZRP")
        if self.command == "sweep" and self.sweep not in SWEEP_PARAMS:
            raise ValueError(f"--sweep debe ser uno de {SWEEP_PARAMS}")
        unknown = [c for c in self.check if c not in ALL_CHECKS]
        if unknown:
            raise ValueError(f"checks desconocidos: {unknown} (disponibles: {', '.join(ALL_CHECKS)})")
        return self

    @property
    def kind(self) -> ModelKind:
        return self.model or ModelKind.AZRP

    def params(self, **override: float) -> ModelParams:
        values = {"p": self.p, "q": self.q, "lam": self.lam, "mu": self.mu}
        values.update(override)
        if "p" in override:
            values["q"] = None
        if "mu" in override:
            values["lam"] = None
        return make_params(self.kind, **values)

    def contour(self) -> engine.ContourSpec:
        try:
            return engine.ContourSpec(radius=self.radius, nodes=self.nodes, max_nodes=self.max_nodes,
                                      rel_tol=self.rel_tol)
        except ValidationError as e:
            raise ConfigurationError(f"Contorno inválido: {e.errors()[0]['msg']}") from e


def read_config_file(path: str) -> Dict[str, str]:
    """Archivo `clave = valor` (UTF-8, comentarios con #); guiones → guiones bajos"""
    values: Dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"No se pudo leer el archivo de configuración {path}: {e}") from e
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{number}: se esperaba 'clave = valor'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Combina archivo y flags (los flags ganan) y valida el resultado"""
    merged: Dict[str, Any] = {}
    if args.config:
        merged.update(read_config_file(args.config))
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config",)}
    merged.update(flags)
    if "lambda" in merged:
        merged["lam"] = merged.pop("lambda")
    if not merged.get("check"):
        merged.pop("check", None)
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ())) or "config"
        raise ConfigurationError(f"Configuración inválida ({where}): {first['msg']}") from e


def parse_grid(text: Optional[str]) -> List[float]:
    """'0:2:0.1' (extremos incluidos) o '0.1,0.5,1'; cadena vacía → rejilla vacía"""
    if text is None or not text.strip():
        return []
    if ":" in text:
        try:
            start, stop, step = (float(tok) for tok in text.split(":"))
        except ValueError as e:
            raise ConfigurationError(f"Rejilla inválida: {text!r}") from e
        if step <= 0:
            raise ConfigurationError(f"El paso de la rejilla debe ser > 0 ({text!r})")
        if stop < start:
            return []
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Rejilla inválida: {text!r}") from e


# ========================================
# 🎯 COMMANDS
# ========================================

def _writer(cfg: RunConfig) -> ReportWriter:
    return ReportWriter(cfg.format)


def _summary(cfg: RunConfig, message: str) -> None:
    if not cfg.quiet:
        logger.info(message)


def _emit(cfg: RunConfig, frame: Optional[pd.DataFrame] = None,
          records: Optional[List[Dict[str, Any]]] = None) -> ReportResult:
    writer = _writer(cfg)
    result = writer.write_records(records, cfg.output) if records is not None else writer.write_frame(frame, cfg.output)
    if result.destination != "stdout":
        _summary(cfg, f"📄 {result.rows} filas ({result.fmt}) en {result.destination}")
    return result


def cmd_prob(cfg: RunConfig) -> int:
    """P_Y(X; t) con su diagnóstico; --oracle añade el valor por uniformización"""
    params = cfg.params()
    ys = parse_configuration(cfg.y, cfg.kind)
    xs = parse_configuration(cfg.x, cfg.kind)
    result = engine.transition_probability(cfg.kind, ys, xs, cfg.t, params, contour=cfg.contour(),
                                           workers=cfg.workers)
    row: Dict[str, Any] = {
        "model": cfg.kind.value,
        "t": cfg.t,
        "y": str(ys),
        "x": str(xs),
        "prob": result.value,
        "err": result.abs_error_estimate,
        "cancellation": result.cancellation,
        "nodes": result.nodes_used,
        "radius": result.radius,
        "precision_warning": result.precision_warning,
    }
    if cfg.oracle:
        dist = oracle.oracle_distribution(cfg.kind, ys, cfg.t, params, cfg.oracle_tol)
        row["oracle"] = dist.probability(xs)
        row["diff"] = abs(result.value - row["oracle"])
    _emit(cfg, pd.DataFrame([row]))
    _summary(cfg, f"✅ P = {result.value:.15g} ± {result.abs_error_estimate:.2e} "
                  f"(M={result.nodes_used}, r={result.radius:.4g}, cancelación={result.cancellation:.2e})")
    if cfg.oracle:
        _summary(cfg, f"🎲 Oráculo = {row['oracle']:.15g} (|Δ| = {row['diff']:.2e})")
    return EXIT_OK


def cmd_marginal(cfg: RunConfig) -> int:
    """Tabla (x, prob, err) de P(x_m(t) = x) para el AZRP"""
    params = cfg.params()
    ys = parse_configuration(cfg.y, ModelKind.AZRP)
    if not 1 <= cfg.m <= ys.n:
        raise DomainError(f"m debe estar en [1, {ys.n}] (m={cfg.m})")
    if cfg.grid is not None:
        xs = [int(round(v)) for v in parse_grid(cfg.grid)]
    else:
        center = ys.positions[cfg.m - 1]
        xs = list(range(center - 5, center + 6))
    rows = []
    for x in xs:
        result = engine.azrp_mth_particle_distribution(cfg.m, ys, x, cfg.t, params, workers=cfg.workers)
        rows.append({"x": x, "prob": result.value, "err": result.abs_error_estimate})
    frame = pd.DataFrame(rows, columns=["x", "prob", "err"])
    _emit(cfg, frame)
    _summary(cfg, f"✅ Marginal m={cfg.m}: {len(rows)} puntos, masa en la rejilla {frame['prob'].sum():.10f}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    """Distribución empírica (o trayectoria) de Gillespie; --oracle la contrasta con la fórmula integral"""
    params = cfg.params()
    ys = parse_configuration(cfg.y, cfg.kind)
    columns = [f"x{i}" for i in range(1, ys.n + 1)]
    if cfg.trajectory:
        path = oracle.gillespie_trajectory(cfg.kind, ys, cfg.t, params, seed=cfg.seed)
        frame = pd.DataFrame([[time_] + list(state) for time_, state in path], columns=["time"] + columns)
        _emit(cfg, frame)
        _summary(cfg, f"✅ Trayectoria: {len(path) - 1} eventos hasta t={cfg.t}")
        return EXIT_OK

    empirical = oracle.sample_distribution(cfg.kind, ys, cfg.t, params, cfg.samples, seed=cfg.seed,
                                           workers=cfg.workers)
    frame = empirical.to_frame("freq")
    if cfg.oracle:
        sites = [x for state in empirical.entries for x in state] or list(ys.positions)
        exact = engine.exact_distribution(cfg.kind, ys, cfg.t, params, lo=min(sites) - 1, hi=max(sites) + 1,
                                          contour=cfg.contour(), workers=cfg.workers, prune_tol=cfg.oracle_tol)
        states = sorted(set(empirical.entries) | set(exact.entries))
        freq = np.array([empirical.entries.get(s, 0.0) for s in states])
        ref = np.array([exact.probability(s) for s in states])
        n_samples = max(cfg.samples, 1)
        sd = np.sqrt((np.maximum(ref * (1.0 - ref), 0.0) + 1.0 / n_samples) / n_samples)
        frame = pd.DataFrame([list(s) for s in states], columns=columns)
        frame["freq"] = freq
        frame["exact"] = ref
        frame["z"] = (freq - ref) / sd
        worst = float(np.max(np.abs(frame["z"]))) if len(frame) else 0.0
        _summary(cfg, f"🎲 Máxima desviación: {worst:.2f} desviaciones binomiales")
    _emit(cfg, frame)
    _summary(cfg, f"✅ {cfg.samples} muestras, {len(empirical.entries)} configuraciones distintas")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    """Suite de verificación; salida 0 si y solo si todos los checks pasan"""
    start = time.perf_counter()
    reports = run_suite(checks=cfg.check or None, model=cfg.model.value if cfg.model else None, n=cfg.n,
                        seed=cfg.seed, workers=cfg.workers, trials=cfg.trials)
    _emit(cfg, records=[r.to_record() for r in reports])
    if not cfg.quiet:
        for r in reports:
            icon = "✅" if r.passed else "❌"
            logger.info(f"{icon} {r.check:<20} {r.model:<6} residuo={r.residual:.3e} tol={r.tolerance:.1e} "
                        f"{r.wall_time:7.2f}s" + (f"  {r.error}" if r.error else ""))
        logger.info(f"⏱️ Suite completa en {time.perf_counter() - start:.1f}s")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


def cmd_sweep(cfg: RunConfig) -> int:
    """Una fila (parámetro, valor, err) por punto de la rejilla"""
    grid = parse_grid(cfg.grid)
    ys = parse_configuration(cfg.y, cfg.kind)
    xs = parse_configuration(cfg.x, cfg.kind)
    contour = cfg.contour()
    rows = []
    for value in grid:
        t = value if cfg.sweep == "t" else cfg.t
        params = cfg.params() if cfg.sweep == "t" else cfg.params(**{cfg.sweep: value})
        result = engine.transition_probability(cfg.kind, ys, xs, t, params, contour=contour, workers=cfg.workers)
        rows.append({cfg.sweep: value, "value": result.value, "err": result.abs_error_estimate})
    frame = pd.DataFrame(rows, columns=[cfg.sweep, "value", "err"])
    _emit(cfg, frame)
    _summary(cfg, f"✅ Barrido de {cfg.sweep}: {len(rows)} puntos")
    return EXIT_OK


HANDLERS = {
    "prob": cmd_prob,
    "marginal": cmd_marginal,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


# ========================================
# 🚀 ENTRY POINT
# ========================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bethe_cli", description=f"{config.APP_NAME} {config.APP_VERSION}")
    parser.add_argument("--version", action="version", version=f"{config.APP_NAME} {config.APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Archivo 'clave = valor'")
    common.add_argument("--format", choices=FORMATS, help="Formato de salida (csv por defecto)")
    common.add_argument("--output", help="Archivo de salida (stdout si falta)")
    common.add_argument("--quiet", action="store_true", default=None, help="Sin resumen humano")
    common.add_argument("--seed", type=int, help="Semilla")
    common.add_argument("--workers", type=int, help="Hilos de cómputo")

    model_args = argparse.ArgumentParser(add_help=False)
    model_args.add_argument("--model", help="asep|push|asap|azrp")
    model_args.add_argument("--p", type=float, help="Tasa a la derecha")
    model_args.add_argument("--q", type=float, help="Tasa a la izquierda")
    model_args.add_argument("--lambda", dest="lam", type=float, help="λ (PushASEP / ASAP)")
    model_args.add_argument("--mu", type=float, help="μ (PushASEP / ASAP)")
    model_args.add_argument("--y", help="Configuración inicial 'y1,y2,...'")
    model_args.add_argument("--t", type=float, help="Tiempo")

    contour_args = argparse.ArgumentParser(add_help=False)
    contour_args.add_argument("--radius", type=float, help="Radio fijo del contorno")
    contour_args.add_argument("--nodes", type=int, help="Nodos iniciales por círculo")
    contour_args.add_argument("--max-nodes", dest="max_nodes", type=int, help="Tope de nodos")
    contour_args.add_argument("--rel-tol", dest="rel_tol", type=float, help="Tolerancia relativa")
    contour_args.add_argument("--oracle", action="store_true", default=None, help="Comparar con el oráculo")
    contour_args.add_argument("--oracle-tol", dest="oracle_tol", type=float, help="Tolerancia del oráculo")

    p_prob = sub.add_parser("prob", parents=[common, model_args, contour_args], help="P_Y(X; t)")
    p_prob.add_argument("--x", help="Configuración final")

    p_marg = sub.add_parser("marginal", parents=[common, model_args, contour_args], help="P(x_m(t) = x) del AZRP")
    p_marg.add_argument("--m", type=int, help="Índice de partícula")
    p_marg.add_argument("--grid", help="Rejilla de x ('a:b:1' o 'a,b,c')")

    p_sim = sub.add_parser("simulate", parents=[common, model_args, contour_args], help="Gillespie")
    p_sim.add_argument("--samples", type=int, help="Número de muestras")
    p_sim.add_argument("--trajectory", action="store_true", default=None, help="Volcar una trayectoria")

    p_ver = sub.add_parser("verify", parents=[common], help="Suite de verificación")
    p_ver.add_argument("--check", action="append", help=f"Check ({', '.join(ALL_CHECKS)}); repetible")
    p_ver.add_argument("--model", help="Restringe los checks por modelo")
    p_ver.add_argument("--n", type=int, help="Número de partículas")
    p_ver.add_argument("--trials", type=int, help="Casos aleatorios por check")

    p_sweep = sub.add_parser("sweep", parents=[common, model_args, contour_args], help="Barrido de t o parámetros")
    p_sweep.add_argument("--x", help="Configuración final")
    p_sweep.add_argument("--sweep", help="Parámetro barrido: t|p|mu")
    p_sweep.add_argument("--grid", help="Rejilla 'inicio:fin:paso' o lista")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    context = {"command": args.command, "argv": list(argv) if argv is not None else sys.argv[1:]}
    try:
        cfg = build_run_config(args)
        if cfg.quiet:
            set_console_level(logging.WARNING)
        return HANDLERS[cfg.command](cfg)
    except (PoleError, ConvergenceError, ResourceError, PrecisionError) as e:
        log_error_with_context(logger, e, context)
        return EXIT_NUMERIC
    except (DomainError, ConfigurationError) as e:
        log_error_with_context(logger, e, context)
        return EXIT_USAGE
    except BetheLabError as e:
        log_error_with_context(logger, e, context)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
