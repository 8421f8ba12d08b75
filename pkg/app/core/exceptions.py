from typing import Optional, Dict, Any


class WorkbenchError(Exception):
    """Excepción base para errores del banco de pruebas de captioning"""
    def __init__(
        self,
        message: str,
        error_code: str,
        status_code: int = 500,
        exit_code: int = 2,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code
        self.status_code = status_code
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class ShapeMismatchError(WorkbenchError):
    """Formas incompatibles en una primitiva"""
    def __init__(self, op: str, *shapes, details: Optional[Dict[str, Any]] = None):
        shape_text = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(
            f"Formas incompatibles en '{op}': {shape_text}",
            "SHAPE_MISMATCH",
            400,
            2,
            {"op": op, "shapes": [list(s) for s in shapes], **(details or {})}
        )


class MaskedRowError(WorkbenchError):
    """Fila de softmax con todas las entradas enmascaradas"""
    def __init__(self, row: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            f"Todas las entradas de la fila {row} están enmascaradas",
            "MASKED_ROW",
            400,
            2,
            {"row": row, **(details or {})}
        )


class AutodiffError(WorkbenchError):
    """Error en la cinta de diferenciación automática"""
    def __init__(
        self,
        message: str,
        error_code: str = "AUTODIFF_ERROR",
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, 500, 2, details)


class NonDeterministicClosureError(AutodiffError):
    """Dos evaluaciones de la misma clausura dieron resultados distintos"""
    def __init__(self, first: float, second: float):
        super().__init__(
            f"La clausura no es determinista: {first!r} != {second!r}",
            "NON_DETERMINISTIC_CLOSURE",
            {"first": first, "second": second}
        )


class GraphValidationError(WorkbenchError):
    """Grafo de escena que viola las reglas estructurales"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "GRAPH_VALIDATION_ERROR", 422, 1, details)


class UnknownVertexError(WorkbenchError):
    """Vértice inexistente en el grafo"""
    def __init__(self, vertex: Any):
        super().__init__(
            f"El vértice {vertex} no existe en el grafo",
            "UNKNOWN_VERTEX",
            404,
            2,
            {"vertex": str(vertex)}
        )


class ConfigurationError(WorkbenchError):
    """Configuración inválida"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CONFIGURATION_ERROR", 400, 1, details)


class GraphInputError(ConfigurationError):
    """La variante exige (o prohíbe) un grafo de escena"""
    def __init__(self, variant: str, message: str):
        super().__init__(message, {"variant": variant})
        self.error_code = "GRAPH_INPUT_ERROR"


class EmptyCaptionError(WorkbenchError):
    """Caption vacía en el cálculo de la pérdida"""
    def __init__(self, message: str = "La caption no contiene tokens entre inicio y fin"):
        super().__init__(message, "EMPTY_CAPTION", 400, 2)


class CorpusError(WorkbenchError):
    """Error al generar, leer o escribir un corpus"""
    def __init__(
        self,
        message: str,
        error_code: str = "CORPUS_ERROR",
        exit_code: int = 2,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message, error_code, 500, exit_code, details)


class MetricInputError(WorkbenchError):
    """Entradas inválidas para una métrica"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "METRIC_INPUT_ERROR", 400, 1, details)


class UndefinedRecallError(MetricInputError):
    """Recall indefinido: el grafo de referencia no tiene relaciones"""
    def __init__(self):
        super().__init__("El grafo de referencia no tiene relaciones; el recall no está definido")
        self.error_code = "UNDEFINED_RECALL"


class NaNGradientError(WorkbenchError):
    """Gradiente con valores NaN"""
    def __init__(self, parameter: str):
        super().__init__(
            f"Gradiente NaN en el parámetro '{parameter}'",
            "NAN_GRADIENT",
            500,
            2,
            {"parameter": parameter}
        )


class DivergenceError(WorkbenchError):
    """La pérdida de entrenamiento divergió"""
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(
            f"Pérdida no finita ({loss}) en la época {epoch}, paso {step}",
            "TRAINING_DIVERGED",
            500,
            2,
            {"epoch": epoch, "step": step, "loss": loss}
        )


class CheckpointError(WorkbenchError):
    """Error al guardar o cargar un checkpoint"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CHECKPOINT_ERROR", 500, 2, details)


class IncompatibleCheckpointError(CheckpointError):
    """Checkpoint incompatible con el corpus"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "INCOMPATIBLE_CHECKPOINT"
        self.exit_code = 1


class OutputExistsError(WorkbenchError):
    """El directorio de salida ya existe"""
    def __init__(self, path: str):
        super().__init__(
            f"El directorio de salida ya existe: {path} (use --force para sobrescribir)",
            "OUTPUT_EXISTS",
            409,
            1,
            {"path": path}
        )
