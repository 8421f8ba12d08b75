from fastapi import APIRouter, Request

from app.core.config import settings
from app.core.logging import LogManager
from app.schemas.captions import HealthResponse

router = APIRouter(prefix="/health", tags=["health"])


@router.get("", response_model=HealthResponse)
async def health_check(request: Request) -> HealthResponse:
    """
    Verifica el estado general del servicio.

    Returns:
        HealthResponse: ok con un modelo cargado, degraded sin él
    """
    service = getattr(request.app.state, "caption_service", None)
    status = HealthResponse(
        status="ok" if service is not None else "degraded",
        version=settings.VERSION,
        model_loaded=service is not None,
        variant=service.variant if service is not None else None,
    )
    LogManager.log_info(f"Health check: {status.status}")
    return status
