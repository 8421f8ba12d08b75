from pydantic import BaseModel, Field
from typing import List, Optional

from app.schemas.graph import GraphDocument


class CaptionRequest(BaseModel):
    """
    Solicitud de caption para una escena
    """
    features: List[List[float]] = Field(..., min_length=1, description="Características de objetos X (n x d)")
    graph: Optional[GraphDocument] = Field(None, description="Grafo de escena predicho (obligatorio salvo BUTD)")
    gold_graph: Optional[GraphDocument] = Field(None, description="Grafo de referencia para calcular SGDet recall")
    beam_width: int = Field(5, ge=1, le=20, description="Ancho de haz")
    max_length: int = Field(40, ge=1, le=200, description="Longitud máxima de la caption")
    recall_k: int = Field(100, ge=1, description="k de SGDet recall")


class CaptionResponse(BaseModel):
    """
    Caption generada y sus tuplas semánticas
    """
    variant: str = Field(..., description="Variante del modelo")
    tokens: List[str] = Field(..., description="Palabras de la caption")
    text: str = Field(..., description="Caption como texto")
    score: float = Field(..., description="Log-probabilidad (normalizada por longitud)")
    objects: List[str] = Field(default_factory=list, description="Objetos mencionados")
    triplets: List[List[str]] = Field(default_factory=list, description="Tripletas (sujeto, predicado, objeto)")
    sgdet_recall: Optional[float] = Field(None, description="Recall@k del grafo frente al de referencia")


class HealthResponse(BaseModel):
    """
    Estado del servicio
    """
    status: str = Field(..., description="ok o degraded")
    version: str = Field(..., description="Versión de la aplicación")
    model_loaded: bool = Field(..., description="Hay un checkpoint cargado")
    variant: Optional[str] = Field(None, description="Variante del checkpoint cargado")

    model_config = {"protected_namespaces": ()}
