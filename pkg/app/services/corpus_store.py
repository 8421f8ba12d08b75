"""
Lectura y escritura del directorio de corpus.

Estructura::

    <dir>/manifest.json
    <dir>/objects.txt
    <dir>/predicates.txt
    <dir>/scenes/scene_00000.json
"""

import shutil
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from app.core.exceptions import CorpusError, OutputExistsError
from app.core.logging import LogManager
from app.schemas.graph import CorpusManifest, SceneDocument
from app.services.scene_graph import graph_from_document, graph_to_document
from app.services.synthetic_scenes import SPLITS, Scene, SyntheticCorpus
from app.services.vocabulary import CaptionVocabulary, Vocabulary

logger = LogManager.get_logger(__name__)

MANIFEST = "manifest.json"
OBJECTS_FILE = "objects.txt"
PREDICATES_FILE = "predicates.txt"
SCENES_DIR = "scenes"


def prepare_output_dir(out_dir: Union[str, Path], force: bool = False) -> Path:
    """
    Prepara un directorio de salida vacío

    Raises:
        OutputExistsError: El directorio existe, no está vacío y no se forzó
    """
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise OutputExistsError(str(out_dir))
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def vocab_hash(objects: Vocabulary, predicates: Vocabulary) -> str:
    return CaptionVocabulary(objects, predicates).digest()


def write_corpus(
    corpus: SyntheticCorpus,
    out_dir: Union[str, Path],
    config_hash: str,
    force: bool = False
) -> CorpusManifest:
    """
    Escribe el corpus en disco

    Args:
        corpus: Corpus generado
        out_dir: Directorio destino
        config_hash: Hash de la configuración de experimento
        force: Sobrescribir un directorio existente no vacío

    Returns:
        Manifiesto escrito

    Raises:
        OutputExistsError: El directorio existe, no está vacío y no se forzó
        CorpusError: Fallo de escritura
    """
    out_dir = prepare_output_dir(out_dir, force)
    manifest = CorpusManifest(
        config_hash=config_hash,
        seed=corpus.config.seed,
        corpus=corpus.config,
        vocab_hash=vocab_hash(corpus.objects, corpus.predicates),
        num_scenes=len(corpus.scenes),
        splits={name: len(corpus.split(name)) for name in SPLITS},
    )
    try:
        (out_dir / SCENES_DIR).mkdir(parents=True, exist_ok=True)
        corpus.objects.save(out_dir / OBJECTS_FILE)
        corpus.predicates.save(out_dir / PREDICATES_FILE)
        for scene in corpus.scenes:
            document = SceneDocument(
                scene_id=scene.scene_id,
                split=scene.split,
                corruption_rate=scene.corruption_rate,
                gold_graph=graph_to_document(scene.gold, corpus.objects, corpus.predicates),
                predicted_graph=graph_to_document(scene.predicted, corpus.objects, corpus.predicates),
                features=scene.features.tolist(),
                feature_mask=scene.feature_mask.tolist(),
                captions=scene.captions,
            )
            (out_dir / SCENES_DIR / f"scene_{scene.scene_id:05d}.json").write_text(
                document.model_dump_json(), encoding="utf-8"
            )
        (out_dir / MANIFEST).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"No se pudo escribir el corpus en {out_dir}: {e}", details={"path": str(out_dir)})

    logger.info("Corpus escrito", extra={"path": str(out_dir), "scenes": len(corpus.scenes)})
    return manifest


def read_manifest(corpus_dir: Union[str, Path]) -> CorpusManifest:
    path = Path(corpus_dir) / MANIFEST
    if not path.is_file():
        raise CorpusError(f"No existe el manifiesto del corpus: {path}", "CORPUS_NOT_FOUND", 1, {"path": str(path)})
    try:
        return CorpusManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise CorpusError(f"Manifiesto inválido: {path}", "CORPUS_INVALID", 1, {"error": str(e)})


def load_corpus(corpus_dir: Union[str, Path]) -> SyntheticCorpus:
    """
    Carga un corpus escrito por ``write_corpus``

    Raises:
        CorpusError: Directorio inexistente, vocabulario alterado o escena inválida
    """
    corpus_dir = Path(corpus_dir)
    manifest = read_manifest(corpus_dir)
    objects = Vocabulary.load(corpus_dir / OBJECTS_FILE)
    predicates = Vocabulary.load(corpus_dir / PREDICATES_FILE)
    if vocab_hash(objects, predicates) != manifest.vocab_hash:
        raise CorpusError(
            f"Los vocabularios de {corpus_dir} no coinciden con el manifiesto", "VOCAB_MISMATCH", 1
        )

    config = manifest.corpus
    corpus = SyntheticCorpus(config, objects, predicates)
    for path in sorted((corpus_dir / SCENES_DIR).glob("scene_*.json")):
        try:
            document = SceneDocument.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise CorpusError(f"Escena inválida: {path}", "CORPUS_INVALID", 1, {"error": str(e)})
        k = config.graph_feature_dim
        corpus.scenes.append(Scene(
            document.scene_id,
            document.split,
            document.corruption_rate,
            graph_from_document(document.gold_graph, objects, predicates, k, config.allow_self_loops),
            graph_from_document(document.predicted_graph, objects, predicates, k, config.allow_self_loops),
            np.asarray(document.features, dtype=np.float64),
            np.asarray(document.feature_mask, dtype=bool),
            [list(c) for c in document.captions],
        ))

    if len(corpus.scenes) != manifest.num_scenes:
        raise CorpusError(
            f"Se esperaban {manifest.num_scenes} escenas en {corpus_dir}, hay {len(corpus.scenes)}",
            "CORPUS_INVALID", 1
        )
    logger.debug("Corpus cargado", extra={"path": str(corpus_dir), "scenes": len(corpus.scenes)})
    return corpus
