from fastapi import APIRouter
from app.api.endpoints.health import router as health_router
from app.api.endpoints.captions import router as captions_router

router = APIRouter()

router.include_router(health_router)
router.include_router(captions_router)

__all__ = [
    "router",
    "health_router",
    "captions_router"
]
