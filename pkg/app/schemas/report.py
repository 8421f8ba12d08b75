from pydantic import BaseModel, ConfigDict, Field
from typing import Dict, List, Optional
from enum import Enum


class QualityBucket(str, Enum):
    """Cubeta de calidad del grafo según SGDet recall"""
    LOW = "low"
    AVERAGE = "average"
    HIGH = "high"


class SpiceScores(BaseModel):
    """
    Precisión, recall y F1 de un conjunto de tuplas
    """
    precision: float = Field(0.0, ge=0.0, le=1.0)
    recall: float = Field(0.0, ge=0.0, le=1.0)
    f1: float = Field(0.0, ge=0.0, le=1.0)


class SpiceBreakdown(BaseModel):
    """
    SPICE desglosado en objetos y relaciones
    """
    overall: SpiceScores = Field(default_factory=SpiceScores)
    object: SpiceScores = Field(default_factory=SpiceScores)
    relation: SpiceScores = Field(default_factory=SpiceScores)


class ReportRow(BaseModel):
    """
    Fila del informe CSV de evaluación
    """
    model_config = ConfigDict(populate_by_name=True, protected_namespaces=())

    config_hash: str = Field(..., description="Hash de la configuración")
    model: str = Field(..., description="Variante evaluada")
    graphs: str = Field(..., description="Grafos usados en inferencia: predicted o gold")
    bucket: str = Field(..., description="all, low, average o high")
    seed: Optional[int] = Field(None, description="Semilla de entrenamiento")
    bleu1: Optional[float] = Field(None, alias="B1")
    bleu2: Optional[float] = Field(None, alias="B2")
    bleu3: Optional[float] = Field(None, alias="B3")
    bleu4: Optional[float] = Field(None, alias="B4")
    rouge_l: Optional[float] = Field(None, alias="R-L")
    spice_all_f1: Optional[float] = Field(None, alias="SPICE-all-F1")
    spice_all_p: Optional[float] = Field(None, alias="SPICE-all-P")
    spice_all_r: Optional[float] = Field(None, alias="SPICE-all-R")
    spice_obj_f1: Optional[float] = Field(None, alias="SPICE-obj-F1")
    spice_obj_p: Optional[float] = Field(None, alias="SPICE-obj-P")
    spice_obj_r: Optional[float] = Field(None, alias="SPICE-obj-R")
    spice_rel_f1: Optional[float] = Field(None, alias="SPICE-rel-F1")
    spice_rel_p: Optional[float] = Field(None, alias="SPICE-rel-P")
    spice_rel_r: Optional[float] = Field(None, alias="SPICE-rel-R")
    mean_sgdet_recall: Optional[float] = Field(None, alias="mean-SGDet-recall")
    n_scenes: int = Field(0, alias="n-scenes")


CSV_COLUMNS: List[str] = [
    field.alias or name for name, field in ReportRow.model_fields.items()
]


class QualitySummary(BaseModel):
    """
    Distribución de SGDet recall sobre un corpus
    """
    count: int = Field(..., ge=0, description="Escenas")
    k: int = Field(..., ge=1, description="k usado para el recall")
    mean: Optional[float] = Field(None, description="Recall medio")
    median: Optional[float] = Field(None, description="Recall mediano")
    buckets: Dict[str, int] = Field(default_factory=dict, description="Escenas por cubeta")
    histogram_edges: List[float] = Field(default_factory=list, description="Bordes de los bins")
    histogram_counts: List[int] = Field(default_factory=list, description="Escenas por bin")


class GradCheckEntry(BaseModel):
    """
    Error relativo máximo de un parámetro
    """
    parameter: str
    relative_error: float
    passed: bool


class GradCheckReport(BaseModel):
    """
    Resultado de una comprobación de gradiente
    """
    name: str = Field("closure", description="Caso comprobado")
    tolerance: float
    entries: List[GradCheckEntry] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def max_error(self) -> float:
        return max((entry.relative_error for entry in self.entries), default=0.0)

    def failures(self) -> List[GradCheckEntry]:
        return [entry for entry in self.entries if not entry.passed]


class EpochRecord(BaseModel):
    """
    Registro por época del log de entrenamiento
    """
    model_config = ConfigDict(protected_namespaces=())

    epoch: int
    train_loss: float
    val_metric: float
    lr: float
    best: bool = False
    stagnant_epochs: int = 0
    config_hash: str = ""
    variant: str = ""
    seed: int = 0
