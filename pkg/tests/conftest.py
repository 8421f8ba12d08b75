"""
Configuración de pytest y fixtures comunes.

Este módulo proporciona corpus sintéticos pequeños, configuraciones de
modelo y de experimento reutilizados en todo el proyecto.
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

# Agregar el directorio raíz al path para importaciones
sys.path.append(str(Path(__file__).parent.parent))

from app.schemas.config import CorpusConfig, ModelConfig, TrainConfig, Variant
from app.services.scene_graph import ObjectVertex, RelationVertex, SceneGraph
from app.services.synthetic_scenes import SyntheticCorpus, generate_corpus


@pytest.fixture
def rng() -> np.random.Generator:
    """Generador con semilla fija"""
    return np.random.default_rng(1234)


@pytest.fixture
def corpus_config() -> CorpusConfig:
    """
    Configuración de corpus diminuta para pruebas rápidas

    Returns:
        CorpusConfig: 24 escenas con particiones train/val/test
    """
    return CorpusConfig(
        num_object_labels=8,
        num_predicates=4,
        objects_per_scene=(2, 4),
        relations_per_scene=(1, 3),
        max_objects=5,
        image_feature_dim=6,
        graph_feature_dim=5,
        feature_noise=0.05,
        corruption_rate=0.3,
        num_scenes=24,
        val_fraction=0.25,
        test_fraction=0.25,
        seed=7,
    )


@pytest.fixture
def corpus(corpus_config: CorpusConfig) -> SyntheticCorpus:
    """Corpus generado a partir de ``corpus_config``"""
    return generate_corpus(corpus_config)


@pytest.fixture
def model_factory(corpus: SyntheticCorpus):
    """
    Fábrica de configuraciones de modelo compatibles con ``corpus``

    Returns:
        Callable que recibe una variante y devuelve un ModelConfig
    """
    def build(variant: Variant = Variant.BUTD, **overrides: Any) -> ModelConfig:
        values: Dict[str, Any] = dict(
            variant=variant,
            vocab_size=len(corpus.caption_vocab),
            hidden_size=8,
            embedding_size=6,
            attention_size=5,
            dropout=0.0,
            image_feature_dim=corpus.config.image_feature_dim,
            graph_feature_dim=corpus.config.graph_feature_dim,
        )
        values.update(overrides)
        return ModelConfig(**values)

    return build


@pytest.fixture
def fast_train_config() -> TrainConfig:
    """Entrenamiento corto para pruebas de integración"""
    return TrainConfig(learning_rate=0.01, max_epochs=2, batch_size=4, seed=3)


@pytest.fixture
def small_graph() -> SceneGraph:
    """
    Grafo con tres objetos y dos relaciones: 0 -p1-> 1, 2 -p0-> 1

    Returns:
        SceneGraph: Grafo con k = 2
    """
    objects = (
        ObjectVertex(0, [1.0, 0.0]),
        ObjectVertex(1, [0.0, 1.0]),
        ObjectVertex(2, [1.0, 1.0]),
    )
    relations = (
        RelationVertex(1, 0, 1, [0.5, -0.5], 0.9),
        RelationVertex(0, 2, 1, [-0.5, 0.5], 0.4),
    )
    return SceneGraph(objects, relations, 2)


@pytest.fixture
def experiment_file(tmp_path: Path, corpus_config: CorpusConfig):
    """
    Escribe un archivo de experimento JSON en un directorio temporal

    Returns:
        Callable que acepta sobreescrituras y devuelve la ruta del archivo
    """
    def write(**overrides: Any) -> Path:
        document: Dict[str, Any] = {
            "name": "pytest",
            "corpus_dir": "corpus",
            "corpus": corpus_config.model_dump(mode="json"),
            "model": {"hidden_size": 8, "embedding_size": 6, "attention_size": 5, "dropout": 0.0},
            "train": {"learning_rate": 0.01, "max_epochs": 1, "batch_size": 6, "seed": 0},
            "variants": ["BUTD"],
            "evaluation": {"beam_width": 2, "max_length": 12},
            "seeds": [0],
        }
        document.update(overrides)
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return write
