"""
Pruebas unitarias del generador de corpus sintéticos.
"""

from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import ConfigurationError
from app.schemas.config import CorpusConfig, load_config
from app.services.caption_metrics import sgdet_recall_at_k
from app.services.evaluation import recall_k
from app.services.synthetic_scenes import (
    FeatureBank,
    build_vocabularies,
    corrupt_graph,
    generate_corpus,
    render_caption,
    triplet_names,
    tuples_from_caption,
)

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@pytest.mark.unit
class TestGenerateCorpus:
    """Pruebas de generación"""

    def test_deterministic(self, corpus_config):
        """Prueba que la misma semilla produce el mismo corpus"""
        first, second = generate_corpus(corpus_config), generate_corpus(corpus_config)
        for a, b in zip(first.scenes, second.scenes):
            np.testing.assert_array_equal(a.features, b.features)
            assert a.gold.triplets() == b.gold.triplets()
            assert a.predicted.triplets() == b.predicted.triplets()
            assert a.split == b.split

    def test_different_seed(self, corpus_config):
        """Prueba que otra semilla produce otro corpus"""
        other = generate_corpus(corpus_config.model_copy(update={"seed": 8}))
        base = generate_corpus(corpus_config)
        assert any(
            a.gold.triplets() != b.gold.triplets() for a, b in zip(base.scenes, other.scenes)
        )

    def test_split_sizes(self, corpus):
        """Prueba el tamaño de cada partición"""
        assert len(corpus.split("test")) == 6
        assert len(corpus.split("val")) == 6
        assert len(corpus.split("train")) == 12

    def test_unknown_split(self, corpus):
        """Prueba el error con una partición desconocida"""
        with pytest.raises(ConfigurationError):
            corpus.split("dev")

    def test_scene_layout(self, corpus, corpus_config):
        """Prueba la forma de las características y la máscara"""
        for scene in corpus.scenes:
            assert scene.features.shape == (corpus_config.max_objects, corpus_config.image_feature_dim)
            assert scene.feature_mask.sum() == scene.gold.num_objects
            assert scene.gold.num_relations >= 1
            assert len(scene.captions) == 1
            np.testing.assert_array_equal(scene.features[~scene.feature_mask], 0.0)

    def test_caption_matches_gold_graph(self, corpus):
        """Prueba que la caption describe exactamente las tripletas de referencia"""
        for scene in corpus.scenes:
            objects, triplets = corpus.gold_tuples(scene)
            expected = {triplet_names(t, corpus.objects, corpus.predicates) for t in scene.gold.triplets()}
            assert triplets == expected
            assert objects == {corpus.objects.token(o.label) for o in scene.gold.objects}

    def test_every_object_in_caption(self):
        """Prueba que cada objeto y cada fila de características aparece en la caption"""
        corpus = generate_corpus(CorpusConfig(num_scenes=32))
        for scene in corpus.scenes:
            names = [corpus.objects.token(o.label) for o in scene.gold.objects]
            caption_objects, _ = tuples_from_caption(
                render_caption(scene.gold, corpus.objects, corpus.predicates), corpus.objects, corpus.predicates
            )
            assert caption_objects == set(names)
            assert int(scene.feature_mask.sum()) == len(names)

    def test_object_and_relation_ranges(self):
        """Prueba que los tamaños respetan los rangos configurados"""
        config = CorpusConfig(num_scenes=64)
        for scene in generate_corpus(config).scenes:
            assert 3 <= scene.gold.num_objects <= 6
            assert 2 <= scene.gold.num_relations <= 5
            pairs = [(r.subject, r.object) for r in scene.gold.relations]
            assert len(set(pairs)) == len(pairs)

    def test_self_loop_single_object(self):
        """Prueba que un único objeto se cubre con un bucle"""
        config = CorpusConfig(objects_per_scene=(1, 1), relations_per_scene=(1, 1), allow_self_loops=True,
                              num_scenes=4)
        for scene in generate_corpus(config).scenes:
            (relation,) = scene.gold.relations
            assert relation.subject == relation.object == 0

    def test_vocabulary_too_small(self):
        """Prueba el error cuando faltan etiquetas de objeto"""
        config = CorpusConfig(num_object_labels=3, objects_per_scene=(2, 4), max_objects=5, num_scenes=2)
        with pytest.raises(ConfigurationError):
            generate_corpus(config)

    def test_corruption_mixture(self, corpus_config):
        """Prueba que cada escena usa una tasa de la mezcla"""
        config = corpus_config.model_copy(update={"corruption_mixture": [0.0, 0.75]})
        rates = {scene.corruption_rate for scene in generate_corpus(config).scenes}
        assert rates <= {0.0, 0.75}
        assert len(rates) == 2

    def test_weighted_mixture(self, corpus_config):
        """Prueba que un peso nulo excluye su tasa de la mezcla"""
        config = corpus_config.model_copy(
            update={"corruption_mixture": [0.0, 0.75], "corruption_weights": [0.0, 1.0]}
        )
        assert {scene.corruption_rate for scene in generate_corpus(config).scenes} == {0.75}

    def test_trend_corpus_recall_skews_low(self):
        """Prueba que la mezcla del experimento de tendencia da mediana de recall menor que la media"""
        config = load_config(CONFIG_DIR / "quality_trend.json")
        corpus = generate_corpus(config.corpus)
        k = recall_k(corpus, config.evaluation)
        recalls = [sgdet_recall_at_k(scene.predicted, scene.gold, k) for scene in corpus.scenes]
        assert np.median(recalls) < np.mean(recalls)

    def test_invalid_fractions(self):
        """Prueba que val + test debe ser menor que 1"""
        with pytest.raises(ValidationError):
            CorpusConfig(val_fraction=0.5, test_fraction=0.5)

    def test_vocabulary_names(self):
        """Prueba los nombres generados más allá de la lista base"""
        objects, predicates = build_vocabularies(CorpusConfig(num_object_labels=42, max_objects=8))
        assert objects.token(0) == "man"
        assert objects.token(41) == "object41"
        assert len(predicates) == 10


@pytest.mark.unit
class TestCorruption:
    """Pruebas de la corrupción de grafos"""

    @pytest.fixture
    def bank(self, corpus_config, rng):
        return FeatureBank.create(corpus_config, rng)

    def test_rate_zero_keeps_triplets(self, corpus, bank):
        """Prueba que p = 0 conserva todas las tripletas con puntuación alta"""
        gold = corpus.scenes[0].gold
        predicted = corrupt_graph(gold, 0.0, 3, bank)
        assert predicted.triplets() == gold.triplets()
        assert all(0.5 <= r.score <= 1.0 for r in predicted.relations)

    def test_rate_one_corrupts_everything(self, corpus, bank):
        """Prueba que p = 1 altera cada relación"""
        for seed, scene in enumerate(corpus.scenes):
            predicted = corrupt_graph(scene.gold, 1.0, seed, bank)
            assert all(r.score < 0.5 for r in predicted.relations)
            assert predicted.num_relations <= scene.gold.num_relations

    def test_rate_one_recall_near_zero(self):
        """Prueba que con p = 1 el recall medio queda en nivel de azar"""
        corpus = generate_corpus(CorpusConfig(num_scenes=1000, corruption_rate=1.0, seed=2))
        recalls = [sgdet_recall_at_k(s.predicted, s.gold, 5) for s in corpus.scenes]
        assert np.mean(recalls) < 0.05

    def test_recall_decreases_with_rate(self):
        """Prueba que el recall medio baja al aumentar p"""
        means = []
        for rate in (0.0, 0.25, 0.5, 0.75, 1.0):
            corpus = generate_corpus(CorpusConfig(num_scenes=400, corruption_rate=rate, seed=5))
            means.append(np.mean([sgdet_recall_at_k(s.predicted, s.gold, 5) for s in corpus.scenes]))
        assert means[0] == pytest.approx(1.0)
        assert all(a > b for a, b in zip(means, means[1:]))

    def test_invalid_rate(self, corpus, bank):
        """Prueba el error con una tasa fuera de [0, 1]"""
        with pytest.raises(ConfigurationError):
            corrupt_graph(corpus.scenes[0].gold, 1.5, 0, bank)


@pytest.mark.unit
class TestCaptionTemplate:
    """Pruebas de la plantilla de captions"""

    def test_render(self, small_graph):
        """Prueba la plantilla "a S P a O ." por relación"""
        objects, predicates = build_vocabularies(CorpusConfig())
        tokens = render_caption(small_graph, objects, predicates)
        assert " ".join(tokens) == "a man wears a woman . a dog rides a woman ."

    def test_partial_sentences(self):
        """Prueba la lectura de frases incompletas"""
        objects, predicates = build_vocabularies(CorpusConfig())
        tokens = "a man rides . a dog rides a cat . horse on a hat . a".split()
        found_objects, found_triplets = tuples_from_caption(tokens, objects, predicates)
        assert found_objects == {"man", "dog", "cat"}
        assert found_triplets == {("dog", "rides", "cat")}
