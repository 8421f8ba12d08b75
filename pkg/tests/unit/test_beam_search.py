"""
Pruebas unitarias de la decodificación voraz y por haz.
"""

import numpy as np
import pytest

from app.core.exceptions import ConfigurationError
from app.schemas.config import Variant
from app.services.batching import scene_inputs
from app.services.beam_search import Hypothesis, decode_beam, decode_greedy, decode_greedy_batch
from app.services.decoder import as_constants, encode_inputs, init_params, score_sequence
from app.services.tensor import constant
from app.services.vocabulary import END_ID


@pytest.fixture
def setup(corpus, model_factory):
    config = model_factory(Variant.HA_SG_CGAT)
    params = as_constants(init_params(config, 4))
    scenes = corpus.split("test")[:3]
    return config, params, scenes


@pytest.mark.unit
class TestHypothesis:
    """Pruebas de la hipótesis"""

    def test_score_normalization(self):
        """Prueba la puntuación normalizada por longitud"""
        hyp = Hypothesis((5, 6, END_ID), -3.0, True)
        assert hyp.score() == pytest.approx(-1.0)
        assert hyp.score(length_normalize=False) == -3.0
        assert hyp.words() == [5, 6]


@pytest.mark.unit
class TestDecoding:
    """Pruebas de decodificación"""

    def test_greedy_respects_max_len(self, setup):
        """Prueba el límite de longitud"""
        config, params, scenes = setup
        result = decode_greedy(scene_inputs(scenes[:1], config), params, config, max_len=3)
        assert len(result.sequence) <= 3

    def test_greedy_batch_matches_single(self, setup):
        """Prueba que el lote voraz coincide con cada ejemplo por separado"""
        config, params, scenes = setup
        batched = decode_greedy_batch(scene_inputs(scenes, config), params, config, max_len=6)
        for scene, tokens in zip(scenes, batched):
            single = decode_greedy(scene_inputs([scene], config), params, config, max_len=6)
            assert tokens == single.tokens

    def test_beam_width_one_is_greedy(self, setup):
        """Prueba que un haz de ancho 1 equivale a la decodificación voraz"""
        config, params, scenes = setup
        inputs = scene_inputs(scenes[:1], config)
        greedy = decode_greedy(inputs, params, config, max_len=8)
        beam = decode_beam(inputs, params, config, beam_width=1, max_len=8)
        assert beam.sequence == greedy.sequence

    def test_beam_is_deterministic(self, setup):
        """Prueba que dos búsquedas iguales dan el mismo resultado"""
        config, params, scenes = setup
        inputs = scene_inputs(scenes[1:2], config)
        first = decode_beam(inputs, params, config, beam_width=3, max_len=6)
        second = decode_beam(inputs, params, config, beam_width=3, max_len=6)
        assert first.sequence == second.sequence
        assert first.score == second.score

    def test_beam_score_matches_rescoring(self, setup):
        """Prueba que la puntuación del haz es la log-probabilidad de la secuencia"""
        config, params, scenes = setup
        inputs = scene_inputs(scenes[:1], config)
        result = decode_beam(inputs, params, config, beam_width=3, max_len=5, length_normalize=False)
        encoded = encode_inputs(inputs, params, config)
        assert result.score == pytest.approx(score_sequence(result.sequence, encoded, params, config))

    def test_beam_not_worse_than_greedy_unnormalized(self, setup):
        """Prueba que sin normalización el haz puntúa al menos como la voraz a igual longitud"""
        config, params, scenes = setup
        inputs = scene_inputs(scenes[2:3], config)
        greedy = decode_greedy(inputs, params, config, max_len=1, length_normalize=False)
        beam = decode_beam(inputs, params, config, beam_width=4, max_len=1, length_normalize=False)
        assert beam.score >= greedy.score - 1e-12

    def test_invalid_arguments(self, setup):
        """Prueba los argumentos inválidos"""
        config, params, scenes = setup
        with pytest.raises(ConfigurationError):
            decode_beam(scene_inputs(scenes[:1], config), params, config, beam_width=0)
        with pytest.raises(ConfigurationError):
            decode_beam(scene_inputs(scenes[:2], config), params, config)

    def test_butd_decodes_without_graph(self, corpus, model_factory):
        """Prueba la decodificación de BUTD"""
        config = model_factory(Variant.BUTD)
        params = as_constants(init_params(config, 0))
        result = decode_beam(scene_inputs(corpus.split("test")[:1], config), params, config, 2, 4)
        assert all(0 <= t < config.vocab_size for t in result.sequence)
        assert np.isfinite(result.score)


def random_models(corpus, model_factory, count=50):
    """Pares (modelo, entrada) aleatorios con parámetros escalados para distribuciones no uniformes"""
    rng = np.random.default_rng(17)
    variants = list(Variant)
    scenes = corpus.scenes
    for i in range(count):
        config = model_factory(variants[i % len(variants)])
        store = init_params(config, i)
        params = {name: constant(value * rng.uniform(5.0, 30.0)) for name, value in store.items()}
        scene = scenes[int(rng.integers(len(scenes)))]
        yield config, params, scene_inputs([scene], config)


@pytest.mark.unit
class TestDecodingProperties:
    """Propiedades sobre 50 modelos aleatorios"""

    def test_beam_width_one_equals_greedy(self, corpus, model_factory):
        """Prueba que un haz de ancho 1 reproduce exactamente la decodificación voraz"""
        for config, params, inputs in random_models(corpus, model_factory):
            greedy = decode_greedy(inputs, params, config, max_len=10)
            beam = decode_beam(inputs, params, config, beam_width=1, max_len=10)
            assert beam.sequence == greedy.sequence
            assert beam.score == greedy.score

    @pytest.mark.parametrize("length_normalize", [True, False])
    def test_beam_five_not_worse_than_greedy(self, corpus, model_factory, length_normalize):
        """Prueba que el haz de 5 puntúa al menos como la voraz con la misma normalización"""
        for config, params, inputs in random_models(corpus, model_factory):
            greedy = decode_greedy(inputs, params, config, max_len=10, length_normalize=length_normalize)
            beam = decode_beam(inputs, params, config, beam_width=5, max_len=10, length_normalize=length_normalize)
            assert beam.score >= greedy.score
