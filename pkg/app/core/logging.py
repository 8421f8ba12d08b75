from pythonjsonlogger import jsonlogger
import logging
import logging.handlers
from pathlib import Path
from typing import Optional, Dict, Any
from app.core.config import settings

ROOT_LOGGER_NAME = "app"


class LogManager:
    """Gestor central de logs del banco de pruebas"""

    _configured = False

    @classmethod
    def setup_logger(cls, level: Optional[str] = None, force: bool = False) -> logging.Logger:
        """
        Configura los handlers del logger raíz de la aplicación

        Args:
            level: Nivel de logging (por defecto settings.LOG_LEVEL)
            force: Reconfigurar aunque ya se haya hecho

        Returns:
            Logger raíz configurado
        """
        root = logging.getLogger(ROOT_LOGGER_NAME)
        if cls._configured and not force:
            return root

        try:
            log_level = getattr(logging, (level or settings.LOG_LEVEL).upper())
        except AttributeError:
            log_level = logging.INFO
        root.setLevel(log_level)

        for handler in list(root.handlers):
            root.removeHandler(handler)

        if settings.LOG_FORMAT == "json":
            formatter: logging.Formatter = jsonlogger.JsonFormatter(
                "%(asctime)s %(name)s %(levelname)s %(message)s"
            )
        else:
            formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        root.addHandler(console_handler)

        if settings.LOG_TO_FILE:
            log_dir = Path(settings.LOG_DIR)
            log_dir.mkdir(parents=True, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                log_dir / "workbench.log",
                maxBytes=settings.LOG_MAX_BYTES,
                backupCount=settings.LOG_BACKUP_COUNT,
                encoding="utf-8"
            )
            file_handler.setFormatter(formatter)
            root.addHandler(file_handler)

        cls._configured = True
        return root

    @classmethod
    def get_logger(cls, name: str) -> logging.Logger:
        """
        Obtiene un logger hijo del logger de la aplicación

        Args:
            name: Nombre del logger (normalmente __name__)

        Returns:
            Logger configurado
        """
        if name == ROOT_LOGGER_NAME or name.startswith(ROOT_LOGGER_NAME + "."):
            return logging.getLogger(name)
        return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")

    @classmethod
    def log_info(cls, message: str, extra: Optional[Dict[str, Any]] = None) -> None:
        """
        Registra un mensaje de información

        Args:
            message: Mensaje a registrar
            extra: Datos adicionales
        """
        logging.getLogger(ROOT_LOGGER_NAME).info(message, extra=extra or {})

    @classmethod
    def log_warning(cls, message: str, extra: Optional[Dict[str, Any]] = None) -> None:
        """Registra una advertencia"""
        logging.getLogger(ROOT_LOGGER_NAME).warning(message, extra=extra or {})

    @classmethod
    def log_error(
        cls,
        message: str,
        error: Optional[BaseException] = None,
        extra: Optional[Dict[str, Any]] = None
    ) -> None:
        """
        Registra un mensaje de error

        Args:
            message: Mensaje a registrar
            error: Excepción asociada
            extra: Datos adicionales
        """
        data = dict(extra or {})
        if error is not None:
            data.setdefault("error_type", error.__class__.__name__)
            data.setdefault("error_code", getattr(error, "error_code", None))
        logging.getLogger(ROOT_LOGGER_NAME).error(message, exc_info=error, extra=data)
