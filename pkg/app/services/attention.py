"""
Cabeza de atención aditiva (MLP) usada por todas las variantes del decodificador.

score_i = w · tanh(W_f^T f_i + W_q^T q); pesos = softmax enmascarado; contexto
= suma ponderada de las filas. Sin términos de sesgo.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from app.core.exceptions import ShapeMismatchError
from app.services.tensor import (
    Tensor,
    add,
    masked_softmax_rows,
    matmul,
    repeat_rows,
    tanh,
)


@dataclass
class AttentionParams:
    feature_proj: Tensor
    query_proj: Tensor
    score: Tensor

    @classmethod
    def from_tensors(cls, tensors: Mapping[str, Tensor], prefix: str) -> "AttentionParams":
        return cls(
            tensors[f"{prefix}.feature_proj"],
            tensors[f"{prefix}.query_proj"],
            tensors[f"{prefix}.score"],
        )

    @property
    def hidden_size(self) -> int:
        return self.score.shape[0]


def attention_shapes(prefix: str, feature_dim: int, query_dim: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    """Formas de los parámetros de una cabeza de atención"""
    return {
        f"{prefix}.feature_proj": (feature_dim, hidden),
        f"{prefix}.query_proj": (query_dim, hidden),
        f"{prefix}.score": (hidden,),
    }


def attend(
    features: Tensor,
    query: Tensor,
    params: AttentionParams,
    mask: Optional[np.ndarray] = None
) -> Tuple[Tensor, Tensor]:
    """
    Atención aditiva sobre las filas de ``features``

    Acepta un eje de lote opcional: features (…,N,D_f), query (…,D_q),
    mask (…,N).

    Args:
        features: Filas candidatas
        query: Vector de consulta
        params: Parámetros de la cabeza
        mask: Filas activas (True) o None

    Returns:
        Tupla (contexto (…,D_f), pesos (…,N))

    Raises:
        ShapeMismatchError: Si N = 0 o las formas no coinciden
        MaskedRowError: Si todas las filas están enmascaradas
    """
    if features.ndim < 2 or features.shape[-2] == 0:
        raise ShapeMismatchError("attend", features.shape, query.shape)
    if query.shape[:-1] != features.shape[:-2]:
        raise ShapeMismatchError("attend", features.shape, query.shape)

    rows = features.shape[-2]
    projected = matmul(features, params.feature_proj)
    projected_query = repeat_rows(matmul(query, params.query_proj), rows)
    scores = matmul(tanh(add(projected, projected_query)), params.score)
    weights = masked_softmax_rows(scores, mask)
    context = matmul(weights, features)
    return context, weights
