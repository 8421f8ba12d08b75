"""
Optimizador Adamax y calendario de tasa de aprendizaje por meseta.
"""

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from app.core.exceptions import NaNGradientError, ShapeMismatchError
from app.schemas.config import TrainConfig
from app.services.parameters import ParameterStore


def adamax_step(
    store: ParameterStore,
    grads: Mapping[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8
) -> ParameterStore:
    """
    Aplica un paso de Adamax a todos los parámetros

    m ← β1·m + (1−β1)·g; u ← max(β2·u, |g|); θ ← θ − lr/(1−β1^t) · m/(u+ε)

    Args:
        store: Parámetros y acumuladores (se modifican en sitio)
        grads: Gradiente por nombre de parámetro
        lr: Tasa de aprendizaje
        beta1: Decaimiento del primer momento
        beta2: Decaimiento de la norma infinito
        eps: Término de estabilidad

    Returns:
        El mismo almacén, actualizado

    Raises:
        NaNGradientError: Algún gradiente contiene NaN (no se modifica nada)
        ShapeMismatchError: Gradiente con forma distinta a la del parámetro
    """
    for name in store:
        grad = grads[name]
        if grad.shape != store[name].shape:
            raise ShapeMismatchError("adamax_step", store[name].shape, grad.shape, details={"parameter": name})
        if np.isnan(grad).any():
            raise NaNGradientError(name)

    store.step += 1
    correction = lr / (1.0 - beta1 ** store.step)
    for name in store:
        grad = grads[name]
        m = beta1 * store.first_moment[name] + (1.0 - beta1) * grad
        u = np.maximum(beta2 * store.inf_norm[name], np.abs(grad))
        store.first_moment[name] = m
        store.inf_norm[name] = u
        store.set(name, store[name] - correction * m / (u + eps))
    return store


@dataclass
class PlateauSchedule:
    """
    Decaimiento por meseta y parada temprana sobre una métrica a maximizar.

    Tras ``decay_patience`` épocas seguidas sin mejora la tasa se multiplica
    por ``decay_factor`` y el contador de decaimiento vuelve a cero. El
    entrenamiento termina con ``early_stop_patience`` épocas sin mejora o al
    llegar a ``max_epochs``.
    """

    learning_rate: float
    decay_factor: float = 0.8
    decay_patience: int = 8
    early_stop_patience: int = 20
    max_epochs: int = 50
    best: Optional[float] = None
    best_epoch: int = 0
    epoch: int = 0
    stagnant_epochs: int = 0
    decay_counter: int = 0

    @classmethod
    def from_config(cls, config: TrainConfig) -> "PlateauSchedule":
        return cls(
            learning_rate=config.learning_rate,
            decay_factor=config.decay_factor,
            decay_patience=config.decay_patience,
            early_stop_patience=config.early_stop_patience,
            max_epochs=config.max_epochs,
        )

    def update(self, metric: float) -> bool:
        """
        Registra la métrica de validación de una época

        Returns:
            True si la métrica mejora estrictamente la mejor vista
        """
        self.epoch += 1
        if self.best is None or metric > self.best:
            self.best = metric
            self.best_epoch = self.epoch
            self.stagnant_epochs = 0
            self.decay_counter = 0
            return True

        self.stagnant_epochs += 1
        self.decay_counter += 1
        if self.decay_counter >= self.decay_patience:
            self.learning_rate *= self.decay_factor
            self.decay_counter = 0
        return False

    @property
    def should_stop(self) -> bool:
        return self.stagnant_epochs >= self.early_stop_patience or self.epoch >= self.max_epochs
