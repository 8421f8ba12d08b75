"""
Servicio de inferencia sobre un checkpoint congelado.

Los parámetros se convierten a constantes una sola vez; ``caption`` no usa
cinta ni estado mutable y puede atender solicitudes concurrentes.
"""

from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.core.exceptions import GraphInputError, IncompatibleCheckpointError, ShapeMismatchError
from app.core.logging import LogManager
from app.schemas.captions import CaptionRequest, CaptionResponse
from app.schemas.config import CorpusConfig, ModelConfig
from app.services.beam_search import decode_beam
from app.services.caption_metrics import sgdet_recall_at_k
from app.services.corpus_store import OBJECTS_FILE, PREDICATES_FILE, read_manifest, vocab_hash
from app.services.decoder import CaptionInputs, as_constants
from app.services.graph_attention import GraphBatch
from app.services.parameters import ParameterStore
from app.services.scene_graph import graph_from_document
from app.services.synthetic_scenes import tuples_from_caption
from app.services.tensor import constant
from app.services.vocabulary import CaptionVocabulary, Vocabulary

logger = LogManager.get_logger(__name__)


class CaptionService:
    """Genera captions para escenas sueltas con un modelo entrenado"""

    def __init__(
        self,
        params: ParameterStore,
        config: ModelConfig,
        objects: Vocabulary,
        predicates: Vocabulary,
        corpus_config: Optional[CorpusConfig] = None
    ):
        self.config = config
        self.objects = objects
        self.predicates = predicates
        self.vocab = CaptionVocabulary(objects, predicates)
        self.allow_self_loops = corpus_config.allow_self_loops if corpus_config else False
        self._params = as_constants(params)

    @classmethod
    def from_files(cls, checkpoint: Union[str, Path], corpus_dir: Union[str, Path]) -> "CaptionService":
        """
        Carga checkpoint y vocabularios del corpus con el que se entrenó

        Raises:
            CheckpointError: Checkpoint ilegible
            IncompatibleCheckpointError: Vocabularios distintos
        """
        corpus_dir = Path(corpus_dir)
        manifest = read_manifest(corpus_dir)
        objects = Vocabulary.load(corpus_dir / OBJECTS_FILE)
        predicates = Vocabulary.load(corpus_dir / PREDICATES_FILE)
        params, metadata = ParameterStore.load(checkpoint)
        if metadata.get("vocab_hash") != vocab_hash(objects, predicates):
            raise IncompatibleCheckpointError(
                "El vocabulario del checkpoint no coincide con el del corpus",
                {"checkpoint": str(checkpoint), "corpus": str(corpus_dir)}
            )
        config = ModelConfig.model_validate(metadata["model"])
        logger.info(
            "Modelo cargado",
            extra={"checkpoint": str(checkpoint), "variant": config.variant.value, "parameters": params.size()}
        )
        return cls(params, config, objects, predicates, manifest.corpus)

    @property
    def variant(self) -> str:
        return self.config.variant.value

    def caption(self, request: CaptionRequest) -> CaptionResponse:
        """
        Decodifica la caption de una escena

        Raises:
            ShapeMismatchError: Características con dimensión distinta de d
            GraphInputError: Falta el grafo (o sobra, para BUTD)
            GraphValidationError: Grafo inválido o con etiquetas desconocidas
        """
        features = np.asarray(request.features, dtype=np.float64)
        d, k = self.config.image_feature_dim, self.config.graph_feature_dim
        if features.ndim != 2 or features.shape[1] != d:
            raise ShapeMismatchError("caption_request", features.shape, ("n", d))

        graph = None
        if request.graph is not None:
            if not self.config.variant.uses_graph:
                raise GraphInputError(self.variant, "La variante BUTD no admite grafo de escena")
            graph = graph_from_document(request.graph, self.objects, self.predicates, k, self.allow_self_loops)
        elif self.config.variant.uses_graph:
            raise GraphInputError(self.variant, f"La variante {self.variant} requiere un grafo de escena")

        inputs = CaptionInputs(
            constant(features[None]),
            np.ones((1, features.shape[0]), dtype=bool),
            GraphBatch.from_graphs([graph]) if graph is not None else None,
        )
        result = decode_beam(inputs, self._params, self.config, request.beam_width, request.max_length)
        words = self.vocab.decode(result.tokens)
        found_objects, found_triplets = tuples_from_caption(words, self.objects, self.predicates)

        recall = None
        if request.gold_graph is not None and graph is not None:
            gold = graph_from_document(request.gold_graph, self.objects, self.predicates, k, self.allow_self_loops)
            if gold.num_relations:
                recall = sgdet_recall_at_k(graph, gold, request.recall_k)

        return CaptionResponse(
            variant=self.variant,
            tokens=words,
            text=" ".join(words),
            score=result.score,
            objects=sorted(found_objects),
            triplets=[list(t) for t in sorted(found_triplets)],
            sgdet_recall=recall,
        )
