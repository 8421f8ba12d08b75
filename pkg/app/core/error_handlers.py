from typing import Any, Dict, Optional

from fastapi import Request
from fastapi.responses import JSONResponse

from app.core.exceptions import WorkbenchError
from app.core.logging import LogManager


def error_payload(code: str, message: str, details: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Cuerpo JSON común de todas las respuestas de error"""
    return {"error": {"code": code, "message": message, "details": details or {}}}


async def workbench_error_handler(request: Request, exc: WorkbenchError) -> JSONResponse:
    """
    Traduce un WorkbenchError a su código HTTP

    Los errores de cliente (4xx) se registran como advertencia; el resto como
    error con el código de la excepción.
    """
    extra = {"path": request.url.path, "error_code": exc.error_code, "status_code": exc.status_code}
    if exc.status_code < 500:
        LogManager.log_warning(f"Solicitud rechazada: {exc.message}", extra=extra)
    else:
        LogManager.log_error("Fallo al atender la solicitud", error=exc, extra=extra)
    return JSONResponse(
        status_code=exc.status_code,
        content=error_payload(exc.error_code, exc.message, exc.details),
    )


async def unhandled_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    """
    Respuesta 500 para excepciones no previstas, sin exponer el mensaje
    """
    LogManager.log_error(
        "Error HTTP no manejado",
        error=exc,
        extra={"path": request.url.path, "method": request.method}
    )
    return JSONResponse(
        status_code=500,
        content=error_payload("INTERNAL_SERVER_ERROR", "Error inesperado", {"type": exc.__class__.__name__}),
    )
