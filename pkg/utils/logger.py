"""
📝 BetheLab Logging System
Logging estructurado: consola (stderr) + archivo rotativo, texto o JSON.
"""
import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Dict, Any

from pythonjsonlogger import jsonlogger

import config

TEXT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _build_formatter() -> logging.Formatter:
    if config.LOG_FORMAT == "json":
        return jsonlogger.JsonFormatter(TEXT_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
    return logging.Formatter(TEXT_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')


def get_logger(name: str = "BetheLab") -> logging.Logger:
    """
    Obtiene un logger configurado con rotación y salida a consola.
    La consola es stderr: stdout queda reservado para las tablas CSV/JSON.
    """
    logger = logging.getLogger(name)

    # Evitar duplicados si el logger ya tiene handlers
    if logger.handlers:
        return logger

    level = "DEBUG" if config.DEBUG_MODE else config.LOG_LEVEL.upper()
    logger.setLevel(getattr(logging, level, logging.INFO))
    formatter = _build_formatter()

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(formatter)
    logger.addHandler(console)

    # Archivo rotativo (si el directorio existe)
    log_dir = Path(config.LOGS_DIR)
    if log_dir.exists():
        file_handler = logging.handlers.RotatingFileHandler(
            log_dir / f"{name.lower()}.log",
            maxBytes=config.LOG_MAX_BYTES,
            backupCount=config.LOG_BACKUP_COUNT,
            encoding='utf-8'
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def set_console_level(level: int) -> None:
    """Ajusta el nivel de todos los loggers ya creados (usado por --quiet)."""
    logging.getLogger().setLevel(level)
    for logger in logging.Logger.manager.loggerDict.values():
        if isinstance(logger, logging.Logger):
            logger.setLevel(level)


def log_error_with_context(logger: logging.Logger, error: Exception, context: Dict[str, Any]):
    """Helper para registrar errores con contexto adicional de forma limpia"""
    msg = f"❌ Error: {str(error)} | Context: {context}"
    logger.error(msg)
