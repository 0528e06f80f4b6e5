"""
📊 Report Writer - Tablas de resultados en CSV, JSON o Excel
Todas las salidas se construyen en memoria como DataFrame y se escriben
una sola vez (archivo vía Storage Provider o stdout).
"""
import io
import json
import logging
import math
import sys
from typing import Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, Field

from services.storage_provider import StorageProvider, get_storage_provider
from utils.errors import ConfigurationError

logger = logging.getLogger("ReportWriter")

FORMATS = ("csv", "json", "xlsx")
FLOAT_FORMAT = "%.17g"


class ReportResult(BaseModel):
    """Resultado estructurado de una escritura"""
    success: bool = Field(..., description="Indica si la tabla se escribió")
    destination: str = Field(..., description="Path del archivo o 'stdout'")
    rows: int = Field(..., description="Filas escritas")
    fmt: str = Field(..., description="Formato de salida")


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    return value


class ReportWriter:
    """Renderiza DataFrames y los entrega al storage provider"""

    def __init__(self, fmt: str = "csv", storage: Optional[StorageProvider] = None):
        if fmt not in FORMATS:
            raise ConfigurationError(f"Formato no soportado: {fmt!r} ({'|'.join(FORMATS)})")
        self.fmt = fmt
        self._storage = storage

    @property
    def storage(self) -> StorageProvider:
        if self._storage is None:
            self._storage = get_storage_provider()
        return self._storage

    def render(self, frame: pd.DataFrame) -> bytes:
        """Bytes deterministas de la tabla en el formato configurado"""
        if self.fmt == "csv":
            return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n").encode("utf-8")
        if self.fmt == "json":
            records = [_json_safe(r) for r in frame.to_dict(orient="records")]
            return (json.dumps(records, indent=2, ensure_ascii=False, default=str) + "\n").encode("utf-8")
        return self._render_xlsx(frame)

    def render_records(self, records: Sequence[Dict[str, object]]) -> bytes:
        """Lista de registros anidados (p.ej. reportes de verificación)"""
        if self.fmt == "json":
            payload = [_json_safe(dict(r)) for r in records]
            return (json.dumps(payload, indent=2, ensure_ascii=False, default=str) + "\n").encode("utf-8")
        flat: List[Dict[str, object]] = []
        for record in records:
            row = {k: v for k, v in record.items() if not isinstance(v, dict)}
            for key, nested in record.items():
                if isinstance(nested, dict):
                    row[key] = ";".join(f"{k}={v}" for k, v in nested.items())
            flat.append(row)
        return self.render(pd.DataFrame(flat))

    def _render_xlsx(self, frame: pd.DataFrame) -> bytes:
        buf = io.BytesIO()
        with pd.ExcelWriter(buf, engine="openpyxl") as writer:
            frame.to_excel(writer, index=False, sheet_name="Resultados")
            worksheet = writer.sheets["Resultados"]
            for idx, col in enumerate(frame.columns):
                values = frame[col].astype(str).map(len)
                width = max(int(values.max()) if len(values) else 0, len(str(col))) + 2
                worksheet.column_dimensions[worksheet.cell(row=1, column=idx + 1).column_letter].width = min(width, 50)
        return buf.getvalue()

    def write(self, data: bytes, output: Optional[str] = None, rows: int = 0) -> ReportResult:
        """Escribe a `output` (vía storage) o a stdout si no hay destino"""
        if output is None:
            if self.fmt == "xlsx":
                raise ConfigurationError("El formato xlsx requiere --output")
            sys.stdout.write(data.decode("utf-8"))
            sys.stdout.flush()
            logger.debug(f"📤 {rows} filas {self.fmt} a stdout")
            return ReportResult(success=True, destination="stdout", rows=rows, fmt=self.fmt)
        path = self.storage.save(data, output)
        return ReportResult(success=True, destination=path, rows=rows, fmt=self.fmt)

    def write_frame(self, frame: pd.DataFrame, output: Optional[str] = None) -> ReportResult:
        return self.write(self.render(frame), output, rows=len(frame))

    def write_records(self, records: Sequence[Dict[str, object]], output: Optional[str] = None) -> ReportResult:
        return self.write(self.render_records(records), output, rows=len(records))
