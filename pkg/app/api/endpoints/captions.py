from fastapi import APIRouter, HTTPException, Request, status
from fastapi.responses import Response
from prometheus_client import CONTENT_TYPE_LATEST, generate_latest
import time

from app.core.exceptions import WorkbenchError
from app.core.logging import LogManager
from app.core.metrics import service_metrics
from app.schemas.captions import CaptionRequest, CaptionResponse

router = APIRouter(tags=["captions"])
logger = LogManager.get_logger("caption_endpoints")


@router.post("/captions", response_model=CaptionResponse)
def create_caption(payload: CaptionRequest, request: Request) -> CaptionResponse:
    """
    Genera la caption de una escena con el modelo cargado

    Args:
        payload: Características, grafo y opciones de decodificación

    Returns:
        CaptionResponse con la caption y sus tuplas
    """
    start_time = time.time()
    service = getattr(request.app.state, "caption_service", None)
    if service is None:
        service_metrics.track_request("captions", 503, time.time() - start_time)
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="No hay ningún modelo cargado"
        )

    try:
        response = service.caption(payload)
    except WorkbenchError as e:
        service_metrics.track_request("captions", e.status_code, time.time() - start_time)
        logger.warning(f"Solicitud de caption rechazada: {e.message}")
        raise

    service_metrics.track_request("captions", 200, time.time() - start_time)
    logger.debug(f"Caption generada: {response.text}")
    return response


@router.get("/metrics")
async def metrics() -> Response:
    """Métricas del servicio en formato Prometheus"""
    return Response(generate_latest(service_metrics.registry), media_type=CONTENT_TYPE_LATEST)
