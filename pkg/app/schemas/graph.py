from pydantic import BaseModel, Field
from typing import Dict, List

from app.schemas.config import CorpusConfig


class ObjectEntry(BaseModel):
    """
    Vértice de objeto en formato JSON
    """
    label: str = Field(..., description="Etiqueta del objeto (vocabulario de objetos)")
    feature: List[float] = Field(..., description="Vector de características de longitud k")


class RelationEntry(BaseModel):
    """
    Vértice de relación en formato JSON
    """
    predicate: str = Field(..., description="Predicado (vocabulario de predicados)")
    subject: int = Field(..., ge=0, description="Índice del objeto sujeto")
    object: int = Field(..., ge=0, description="Índice del objeto destino")
    score: float = Field(1.0, ge=0.0, le=1.0, description="Confianza usada para ordenar tripletas")
    feature: List[float] = Field(..., description="Vector de características de longitud k")


class GraphDocument(BaseModel):
    """
    Grafo de escena serializado
    """
    objects: List[ObjectEntry] = Field(default_factory=list, description="Vértices de objeto")
    relations: List[RelationEntry] = Field(default_factory=list, description="Vértices de relación")


class SceneDocument(BaseModel):
    """
    Escena del corpus sintético tal como se guarda en disco
    """
    scene_id: int = Field(..., ge=0, description="Identificador de la escena")
    split: str = Field(..., description="Partición: train, val o test")
    corruption_rate: float = Field(..., ge=0.0, le=1.0, description="Tasa p usada para corromper el grafo")
    gold_graph: GraphDocument = Field(..., description="Grafo de referencia")
    predicted_graph: GraphDocument = Field(..., description="Grafo predicho (corrompido) con puntuaciones")
    features: List[List[float]] = Field(..., description="Características de objetos X (n x d, con relleno)")
    feature_mask: List[bool] = Field(..., description="Filas de X que corresponden a objetos reales")
    captions: List[List[str]] = Field(..., min_length=1, description="Captions tokenizadas")


class CorpusManifest(BaseModel):
    """
    Manifiesto del directorio de corpus
    """
    format_version: int = Field(1, description="Versión del formato en disco")
    config_hash: str = Field(..., description="Hash de la configuración de experimento que generó el corpus")
    seed: int = Field(..., description="Semilla usada")
    corpus: CorpusConfig = Field(..., description="Configuración del generador")
    vocab_hash: str = Field(..., description="Hash de los vocabularios de objetos y predicados")
    num_scenes: int = Field(..., ge=0, description="Número de escenas")
    splits: Dict[str, int] = Field(default_factory=dict, description="Escenas por partición")
