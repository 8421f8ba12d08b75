from pathlib import Path
from typing import Union

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

from app.core.config import settings
from app.core.logging import LogManager


class TrainingMetrics:
    """Métricas de una ejecución de entrenamiento con registro propio"""

    def __init__(self, variant: str, seed: int):
        self.logger = LogManager.get_logger("training_metrics")
        self.registry = CollectorRegistry()
        self.labels = {"variant": variant, "seed": str(seed)}

        # Contadores
        self.optimizer_steps = Counter(
            "workbench_optimizer_steps_total",
            "Pasos de optimizador ejecutados",
            ["variant", "seed"],
            registry=self.registry
        )

        # Gauges
        self.learning_rate = Gauge(
            "workbench_learning_rate",
            "Tasa de aprendizaje de la última época",
            ["variant", "seed"],
            registry=self.registry
        )
        self.train_loss = Gauge(
            "workbench_train_loss",
            "Pérdida media de entrenamiento de la última época",
            ["variant", "seed"],
            registry=self.registry
        )
        self.validation_metric = Gauge(
            "workbench_validation_metric",
            "Métrica de validación de la última época",
            ["variant", "seed"],
            registry=self.registry
        )

        # Histogramas
        self.epoch_duration = Histogram(
            "workbench_epoch_duration_seconds",
            "Duración de cada época",
            ["variant", "seed"],
            buckets=[0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0],
            registry=self.registry
        )

    def track_step(self) -> None:
        self.optimizer_steps.labels(**self.labels).inc()

    def track_epoch(self, train_loss: float, val_metric: float, lr: float, seconds: float) -> None:
        """Registra el resumen de una época"""
        self.train_loss.labels(**self.labels).set(train_loss)
        self.validation_metric.labels(**self.labels).set(val_metric)
        self.learning_rate.labels(**self.labels).set(lr)
        self.epoch_duration.labels(**self.labels).observe(seconds)

    def write(self, out_dir: Union[str, Path]) -> Path:
        """Escribe las métricas en formato de texto de Prometheus"""
        path = Path(out_dir) / settings.METRICS_FILENAME
        write_to_textfile(str(path), self.registry)
        self.logger.debug(f"Métricas de entrenamiento escritas en {path}")
        return path


class ServiceMetrics:
    """Métricas del servicio de captions"""

    def __init__(self):
        self.registry = CollectorRegistry()

        self.requests_total = Counter(
            "workbench_caption_requests_total",
            "Solicitudes de caption",
            ["endpoint", "status"],
            registry=self.registry
        )
        self.request_duration = Histogram(
            "workbench_caption_request_duration_seconds",
            "Duración de las solicitudes de caption",
            ["endpoint"],
            buckets=[0.01, 0.05, 0.1, 0.5, 1.0, 5.0],
            registry=self.registry
        )

    def track_request(self, endpoint: str, status: int, duration: float) -> None:
        self.requests_total.labels(endpoint=endpoint, status=str(status)).inc()
        self.request_duration.labels(endpoint=endpoint).observe(duration)


# Instancia del servicio
service_metrics = ServiceMetrics()
