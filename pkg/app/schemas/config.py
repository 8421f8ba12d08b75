"""
Esquemas de configuración de experimentos.

Un experimento se describe por completo en un único archivo JSON; el hash
canónico de ese archivo (``config_hash``) se incrusta en cada artefacto.
"""

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.core.exceptions import ConfigurationError


class Variant(str, Enum):
    """Variantes del decodificador"""
    BUTD = "BUTD"
    FA = "FA"
    HA_SG = "HA-SG"
    HA_IM = "HA-IM"
    HA_SG_GAT = "HA-SG+GAT"
    HA_SG_CGAT = "HA-SG+CGAT"

    @property
    def uses_graph(self) -> bool:
        return self is not Variant.BUTD

    @property
    def sg_first(self) -> bool:
        return self in (Variant.HA_SG, Variant.HA_SG_GAT, Variant.HA_SG_CGAT)

    @classmethod
    def names(cls) -> List[str]:
        return [v.value for v in cls]

    @classmethod
    def parse(cls, name: str) -> "Variant":
        try:
            return cls(name)
        except ValueError:
            raise ConfigurationError(
                f"Variante desconocida: {name}. Variantes válidas: {', '.join(cls.names())}",
                {"variant": name, "valid": cls.names()}
            )


class CorpusConfig(BaseModel):
    """
    Parámetros del generador de escenas sintéticas
    """
    num_object_labels: int = Field(20, gt=0, description="Tamaño del vocabulario de objetos")
    num_predicates: int = Field(10, gt=0, description="Tamaño del vocabulario de predicados")
    objects_per_scene: Tuple[int, int] = Field((3, 6), description="Rango [min, max] de objetos por escena")
    relations_per_scene: Tuple[int, int] = Field((2, 5), description="Rango [min, max] de relaciones por escena")
    max_objects: int = Field(8, gt=0, description="Número n de ranuras de objeto (con relleno)")
    image_feature_dim: int = Field(32, gt=0, description="Dimensión d de las características de objeto")
    graph_feature_dim: int = Field(32, gt=0, description="Dimensión k de las características del grafo")
    feature_noise: float = Field(0.1, ge=0.0, description="Desviación sigma del ruido gaussiano")
    corruption_rate: float = Field(0.0, ge=0.0, le=1.0, description="Tasa p de corrupción del grafo")
    corruption_mixture: Optional[List[float]] = Field(
        None, description="Valores de p entre los que se elige uno por escena"
    )
    corruption_weights: Optional[List[float]] = Field(
        None, description="Pesos relativos de cada valor de la mezcla (por defecto uniformes)"
    )
    num_scenes: int = Field(32, gt=0, description="Número de escenas")
    val_fraction: float = Field(0.0, ge=0.0, lt=1.0, description="Fracción de escenas de validación")
    test_fraction: float = Field(0.0, ge=0.0, lt=1.0, description="Fracción de escenas de prueba")
    allow_self_loops: bool = Field(False, description="Permitir relaciones sujeto == objeto")
    seed: int = Field(0, ge=0, description="Semilla del generador")

    @field_validator("objects_per_scene", "relations_per_scene")
    @classmethod
    def check_range(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        low, high = v
        if low < 0 or low > high:
            raise ValueError(f"Rango vacío o negativo: {list(v)}")
        return v

    @field_validator("corruption_mixture")
    @classmethod
    def check_mixture(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None:
            if not v:
                raise ValueError("La mezcla de corrupción no puede estar vacía")
            if any(not 0.0 <= p <= 1.0 for p in v):
                raise ValueError("Cada p de la mezcla debe estar en [0, 1]")
        return v

    @model_validator(mode="after")
    def check_layout(self) -> "CorpusConfig":
        if self.objects_per_scene[0] < (1 if self.allow_self_loops else 2):
            raise ValueError("Cada escena necesita objetos suficientes para al menos una relación")
        if self.relations_per_scene[0] < 1:
            raise ValueError("Cada escena necesita al menos una relación (caption no vacía)")
        if self.objects_per_scene[1] > self.max_objects:
            raise ValueError("objects_per_scene supera el número de ranuras max_objects")
        if (self.objects_per_scene[1] + 1) // 2 > self.relations_per_scene[1]:
            raise ValueError("relations_per_scene no alcanza para que cada objeto aparezca en una relación")
        if self.corruption_weights is not None:
            if self.corruption_mixture is None or len(self.corruption_weights) != len(self.corruption_mixture):
                raise ValueError("corruption_weights necesita un peso por valor de corruption_mixture")
            if any(w < 0.0 for w in self.corruption_weights) or sum(self.corruption_weights) <= 0.0:
                raise ValueError("Los pesos de la mezcla deben ser no negativos y no todos nulos")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction debe ser menor que 1")
        return self


class ModelSettings(BaseModel):
    """
    Tamaños del modelo comunes a todas las variantes
    """
    hidden_size: int = Field(64, gt=0, description="Tamaño oculto de las LSTM")
    embedding_size: int = Field(64, gt=0, description="Tamaño del embedding de palabras")
    attention_size: Optional[int] = Field(None, gt=0, description="Tamaño oculto del scorer (por defecto hidden_size)")
    dropout: float = Field(0.5, ge=0.0, lt=1.0, description="Probabilidad de dropout")


class ModelConfig(ModelSettings):
    """
    Configuración completa de un decodificador
    """
    variant: Variant = Field(..., description="Variante del decodificador")
    vocab_size: int = Field(..., gt=4, description="Tamaño V del vocabulario de captions")
    image_feature_dim: int = Field(32, gt=0, description="Dimensión d")
    graph_feature_dim: int = Field(32, gt=0, description="Dimensión k")

    @property
    def attention_hidden(self) -> int:
        return self.attention_size or self.hidden_size


class TrainConfig(BaseModel):
    """
    Parámetros de entrenamiento
    """
    learning_rate: float = Field(0.002, gt=0.0, le=1.0, description="Tasa de aprendizaje inicial")
    decay_factor: float = Field(0.8, gt=0.0, le=1.0, description="Factor de decaimiento en meseta")
    decay_patience: int = Field(8, gt=0, description="Épocas sin mejora antes de decaer")
    early_stop_patience: int = Field(20, gt=0, description="Épocas sin mejora antes de parar")
    max_epochs: int = Field(50, gt=0, description="Máximo de épocas")
    batch_size: int = Field(16, gt=0, description="Tamaño de lote")
    validation_metric: Literal["bleu4", "rouge_l", "spice_f1"] = Field("bleu4", description="Métrica de validación")
    val_beam_width: int = Field(1, gt=0, description="Ancho de haz en validación")
    max_caption_length: int = Field(40, gt=0, description="Longitud máxima de decodificación")
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)
    seed: int = Field(0, ge=0, description="Semilla de barajado, dropout e inicialización")


class EvaluationOptions(BaseModel):
    """
    Opciones de evaluación
    """
    beam_width: int = Field(5, gt=0, description="Ancho de haz")
    max_length: int = Field(40, gt=0, description="Longitud máxima de la caption")
    length_normalize: bool = Field(True, description="Normalizar log-probabilidad por longitud")
    buckets: bool = Field(True, description="Filas por cubeta de calidad")
    gold_graphs: bool = Field(False, description="Añadir filas con grafos de referencia")
    recall_k: Optional[int] = Field(None, gt=0, description="k de SGDet recall (por defecto min(100, r-max))")
    histogram_bins: int = Field(10, gt=0, description="Bins del histograma de recall")


class ExperimentConfig(BaseModel):
    """
    Archivo de experimento completo
    """
    name: str = Field("experiment", description="Nombre del experimento")
    corpus_dir: str = Field("corpus", description="Directorio del corpus (relativo al archivo)")
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    model: ModelSettings = Field(default_factory=ModelSettings)
    train: TrainConfig = Field(default_factory=TrainConfig)
    variants: List[Variant] = Field(default_factory=lambda: [Variant.BUTD], min_length=1)
    evaluation: EvaluationOptions = Field(default_factory=EvaluationOptions)
    train_split: str = Field("train")
    val_split: str = Field("val")
    eval_split: str = Field("test")
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)

    base_dir: Optional[str] = Field(None, exclude=True, description="Directorio del archivo de origen")

    def config_hash(self) -> str:
        return config_hash(self)

    def resolve(self, relative: Union[str, Path]) -> Path:
        path = Path(relative)
        if path.is_absolute() or self.base_dir is None:
            return path
        return Path(self.base_dir) / path

    def corpus_path(self) -> Path:
        return self.resolve(self.corpus_dir)

    def build_model_config(self, variant: Variant, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            **self.model.model_dump(),
            variant=variant,
            vocab_size=vocab_size,
            image_feature_dim=self.corpus.image_feature_dim,
            graph_feature_dim=self.corpus.graph_feature_dim,
        )


def canonical_json(model: BaseModel) -> str:
    return json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(model: BaseModel) -> str:
    """SHA-256 del JSON canónico de la configuración"""
    return hashlib.sha256(canonical_json(model).encode("utf-8")).hexdigest()


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Lee y valida un archivo de experimento

    Args:
        path: Ruta al JSON

    Returns:
        Configuración validada

    Raises:
        ConfigurationError: Archivo ilegible o valores inválidos
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigurationError(f"No se pudo leer la configuración: {path}", {"path": str(path), "error": str(e)})
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"JSON inválido en {path}: {e}", {"path": str(path)})
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(
            f"Configuración inválida en {path}: {e.errors(include_url=False)[0]['msg']}",
            {"path": str(path), "errors": e.errors(include_url=False, include_context=False)}
        )
    config.base_dir = str(path.parent.resolve())
    return config
