from typing import Optional

from fastapi import FastAPI

from app.api.endpoints import router
from app.core.config import settings
from app.core.error_handlers import unhandled_exception_handler, workbench_error_handler
from app.core.exceptions import WorkbenchError
from app.services.caption_service import CaptionService


def create_app(service: Optional[CaptionService] = None) -> FastAPI:
    """
    Construye la aplicación del servicio de captions

    Args:
        service: Modelo cargado; sin él /captions responde 503
    """
    app = FastAPI(
        title="SGCap Workbench API",
        description="Servicio de captions condicionadas por grafos de escena",
        version=settings.VERSION
    )
    app.state.caption_service = service
    app.add_exception_handler(WorkbenchError, workbench_error_handler)
    app.add_exception_handler(Exception, unhandled_exception_handler)
    app.include_router(router)

    @app.get("/")
    async def root():
        return {"message": settings.APP_NAME}

    return app


app = create_app()
