"""
🗄️ Storage Provider - Abstracción para escribir tablas de resultados
Escritura determinista: el mismo nombre sobrescribe el mismo archivo.
"""
from abc import ABC, abstractmethod
from pathlib import Path
import logging

from utils.errors import ConfigurationError

logger = logging.getLogger("StorageProvider")


class StorageProvider(ABC):
    """Interface para providers de almacenamiento"""

    @abstractmethod
    def save(self, data: bytes, target: str) -> str:
        """Guarda datos y retorna el path final"""

    @abstractmethod
    def get_path(self, target: str) -> str:
        """Resuelve el path local de un archivo"""


class LocalStorageProvider(StorageProvider):
    """Provider para el filesystem local"""

    def __init__(self, base_dir: str):
        self.base_dir = Path(base_dir)
        logger.debug(f"📁 LocalStorageProvider: {self.base_dir}")

    def get_path(self, target: str) -> str:
        """
        Un nombre simple se resuelve dentro de base_dir; un path con directorio
        (relativo o absoluto) se respeta tal cual.
        """
        path = Path(target)
        if path.is_absolute() or len(path.parts) > 1:
            return str(path)
        return str(self.base_dir / path)

    def save(self, data: bytes, target: str) -> str:
        """
        Escribe el archivo completo de una vez, sobrescribiendo si existe.

        Args:
            data: Contenido en bytes
            target: Nombre de archivo o path explícito

        Returns:
            Path del archivo escrito
        """
        path = Path(self.get_path(target))
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
        logger.info(f"📁 Archivo guardado: {path} ({len(data)} bytes)")
        return str(path)


def get_storage_provider() -> StorageProvider:
    """
    Factory del storage provider configurado (config.STORAGE_BACKEND).

    Raises:
        ConfigurationError: backend desconocido
    """
    import config

    backend = getattr(config, "STORAGE_BACKEND", "local")
    if backend == "local":
        return LocalStorageProvider(base_dir=config.EXPORTS_DIR)
    raise ConfigurationError(f"Storage backend no soportado: {backend}")
