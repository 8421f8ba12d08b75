"""
Pruebas unitarias de la cabeza de atención aditiva.
"""

import numpy as np
import pytest

from app.core.exceptions import MaskedRowError, ShapeMismatchError
from app.services.attention import AttentionParams, attend, attention_shapes
from app.services.gradcheck import grad_check
from app.services.tensor import constant


def make_params(rng, feature_dim=3, query_dim=2, hidden=4, zero_score=False):
    shapes = attention_shapes("att", feature_dim, query_dim, hidden)
    values = {name: rng.normal(size=shape) for name, shape in shapes.items()}
    if zero_score:
        values["att.score"] = np.zeros(hidden)
    return values


@pytest.mark.unit
class TestAttend:
    """Pruebas de la atención"""

    def test_shapes(self, rng):
        """Prueba las formas de contexto y pesos"""
        params = AttentionParams.from_tensors({k: constant(v) for k, v in make_params(rng).items()}, "att")
        context, weights = attend(constant(rng.normal(size=(5, 3))), constant(rng.normal(size=2)), params)
        assert context.shape == (3,)
        assert weights.shape == (5,)
        assert weights.value.sum() == pytest.approx(1.0)
        assert params.hidden_size == 4

    def test_zero_score_gives_uniform_weights(self, rng):
        """Prueba que un vector de puntuación nulo reparte el peso por igual"""
        params = AttentionParams.from_tensors(
            {k: constant(v) for k, v in make_params(rng, zero_score=True).items()}, "att"
        )
        features = rng.normal(size=(4, 3))
        mask = np.array([True, True, False, True])
        context, weights = attend(constant(features), constant(np.ones(2)), params, mask)

        np.testing.assert_allclose(weights.value, [1 / 3, 1 / 3, 0.0, 1 / 3])
        np.testing.assert_allclose(context.value, features[mask].mean(axis=0))

    def test_batched(self, rng):
        """Prueba que el eje de lote equivale a llamadas independientes"""
        raw = make_params(rng)
        params = AttentionParams.from_tensors({k: constant(v) for k, v in raw.items()}, "att")
        features = rng.normal(size=(2, 4, 3))
        queries = rng.normal(size=(2, 2))
        context, _ = attend(constant(features), constant(queries), params)
        for b in range(2):
            single, _ = attend(constant(features[b]), constant(queries[b]), params)
            np.testing.assert_allclose(context.value[b], single.value)

    def test_all_masked(self, rng):
        """Prueba el error con todas las filas enmascaradas"""
        params = AttentionParams.from_tensors({k: constant(v) for k, v in make_params(rng).items()}, "att")
        with pytest.raises(MaskedRowError):
            attend(constant(np.ones((2, 3))), constant(np.ones(2)), params, np.zeros(2, dtype=bool))

    def test_no_rows(self, rng):
        """Prueba el error sin filas candidatas"""
        params = AttentionParams.from_tensors({k: constant(v) for k, v in make_params(rng).items()}, "att")
        with pytest.raises(ShapeMismatchError):
            attend(constant(np.zeros((0, 3))), constant(np.ones(2)), params)

    def test_gradients(self, rng):
        """Prueba los gradientes de parámetros, filas y consulta"""
        values = make_params(rng)
        values["features"] = rng.normal(size=(4, 3))
        values["query"] = rng.normal(size=2)
        mask = np.array([True, False, True, True])
        projection = rng.normal(size=3)

        def closure(p):
            context, _ = attend(p["features"], p["query"], AttentionParams.from_tensors(p, "att"), mask)
            return context @ constant(projection)

        report = grad_check(closure, values)
        assert report.passed, report.failures()


@pytest.mark.unit
def test_random_instances_properties():
    """Prueba suma 1, ceros enmascarados y equivarianza por permutación en 1000 casos"""
    rng = np.random.default_rng(99)
    for _ in range(1000):
        rows, feature_dim, query_dim = int(rng.integers(1, 7)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        params = AttentionParams.from_tensors(
            {k: constant(v) for k, v in make_params(rng, feature_dim, query_dim, 3).items()}, "att"
        )
        features = rng.normal(size=(rows, feature_dim))
        query = constant(rng.normal(size=query_dim))
        mask = rng.random(rows) < 0.7
        mask[rng.integers(rows)] = True

        context, weights = attend(constant(features), query, params, mask)
        assert abs(weights.value.sum() - 1.0) <= 1e-9
        assert np.all(weights.value[~mask] == 0.0)

        order = rng.permutation(rows)
        permuted_context, permuted_weights = attend(constant(features[order]), query, params, mask[order])
        np.testing.assert_allclose(permuted_weights.value, weights.value[order], rtol=0, atol=1e-12)
        np.testing.assert_allclose(permuted_context.value, context.value, rtol=0, atol=1e-12)
