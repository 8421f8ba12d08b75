"""
Configuración de ejecución del banco de pruebas.

Estos valores controlan logging, rutas y el servicio HTTP. Nunca influyen en
los resultados numéricos: los experimentos se describen por completo en su
archivo JSON (ver app.schemas.config).
"""

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configuración de la aplicación."""

    # Configuración general
    APP_NAME: str = Field(default="sgcap-workbench")
    ENVIRONMENT: str = Field(default="development")
    DEBUG: bool = Field(default=False)
    VERSION: str = Field(default="0.3.0")

    # Configuración del servidor
    HOST: str = Field(default="127.0.0.1")
    PORT: int = Field(default=8080)

    # Configuración de logging
    LOG_LEVEL: str = Field(default="INFO")
    LOG_DIR: str = Field(default="./logs")
    LOG_FORMAT: str = Field(default="json")
    LOG_TO_FILE: bool = Field(default=False)
    LOG_MAX_BYTES: int = Field(default=10485760)  # 10MB
    LOG_BACKUP_COUNT: int = Field(default=5)

    # Métricas
    METRICS_FILENAME: str = Field(default="metrics.prom")

    @field_validator("LOG_FORMAT")
    @classmethod
    def check_log_format(cls, v: str) -> str:
        """Solo se aceptan los formatos json y text."""
        v = v.lower()
        if v not in ("json", "text"):
            raise ValueError("LOG_FORMAT debe ser 'json' o 'text'")
        return v

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


# Instancia global de configuración
settings = Settings()
