"""
Construcción de lotes del decodificador a partir de escenas del corpus.
"""

from typing import List, Sequence, Tuple

import numpy as np

from app.schemas.config import ModelConfig
from app.services.decoder import CaptionInputs
from app.services.graph_attention import GraphBatch
from app.services.synthetic_scenes import Scene
from app.services.tensor import constant
from app.services.vocabulary import CaptionVocabulary


def scene_inputs(scenes: Sequence[Scene], config: ModelConfig, gold_graphs: bool = False) -> CaptionInputs:
    """
    Entradas visuales de un lote de escenas

    Args:
        scenes: Escenas del lote
        config: Configuración del modelo (decide si se adjuntan grafos)
        gold_graphs: Usar el grafo de referencia en lugar del predicho

    Returns:
        Entradas listas para ``sequence_loss`` o la decodificación
    """
    features = np.stack([scene.features for scene in scenes])
    feature_mask = np.stack([scene.feature_mask for scene in scenes])
    graphs = None
    if config.variant.uses_graph:
        graphs = GraphBatch.from_graphs([scene.gold if gold_graphs else scene.predicted for scene in scenes])
    return CaptionInputs(constant(features), feature_mask, graphs)


def training_pairs(scenes: Sequence[Scene], vocab: CaptionVocabulary) -> List[Tuple[Scene, List[int]]]:
    """Una pareja (escena, ids de caption) por cada caption de referencia"""
    return [(scene, vocab.encode(caption)) for scene in scenes for caption in scene.captions]


def batches(order: Sequence[int], batch_size: int) -> List[np.ndarray]:
    order = np.asarray(order, dtype=np.int64)
    return [order[start:start + batch_size] for start in range(0, len(order), batch_size)]
