"""
Pruebas unitarias de la comprobación de gradientes.
"""

import numpy as np
import pytest

from app.core.exceptions import ConfigurationError, NonDeterministicClosureError
from app.schemas.config import Variant
from app.services.gradcheck import grad_check, relative_error, run_gradcheck_suite, suite_case_names
from app.services.tensor import PRIMITIVES, constant, mul, tanh, tensor_sum


@pytest.mark.unit
class TestGradCheck:
    """Pruebas de ``grad_check``"""

    def test_relative_error(self):
        """Prueba el error relativo con su denominador mínimo"""
        assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.5])) == pytest.approx(0.2)
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
        assert relative_error(np.array([]), np.array([])) == 0.0

    def test_simple_closure_passes(self, rng):
        """Prueba una clausura cuadrática"""
        report = grad_check(lambda p: tensor_sum(mul(p["x"], p["x"])), {"x": rng.normal(size=(2, 3))}, name="square")
        assert report.passed
        assert report.name == "square"
        assert [entry.parameter for entry in report.entries] == ["x"]
        assert report.max_error < 1e-6

    def test_params_are_not_modified(self, rng):
        """Prueba que los valores originales no cambian"""
        value = rng.normal(size=3)
        original = value.copy()
        grad_check(lambda p: tensor_sum(tanh(p["x"])), {"x": value})
        np.testing.assert_array_equal(value, original)

    def test_non_deterministic_closure(self):
        """Prueba que una clausura con estado se rechaza"""
        calls = []

        def closure(p):
            calls.append(1)
            return tensor_sum(mul(p["x"], constant([float(len(calls))])))

        with pytest.raises(NonDeterministicClosureError) as exc:
            grad_check(closure, {"x": np.ones(1)})
        assert exc.value.error_code == "NON_DETERMINISTIC_CLOSURE"

    def test_wrong_vjp_is_detected(self, mocker, rng):
        """Prueba que un vjp incorrecto hace fallar la comprobación"""
        mocker.patch.object(PRIMITIVES["tanh"], "vjp", side_effect=lambda grad, saved: (2.0 * grad,))
        report = grad_check(lambda p: tensor_sum(tanh(p["x"])), {"x": rng.normal(size=4)})
        assert not report.passed
        assert report.failures()[0].parameter == "x"


@pytest.mark.unit
class TestSuite:
    """Pruebas de la batería de casos"""

    def test_case_names(self):
        """Prueba que la batería cubre primitivas, capas y variantes"""
        names = suite_case_names()
        assert {"op:matmul", "op:matmul_vector", "op:masked_softmax_rows", "op:cross_entropy"} <= set(names)
        assert {"attention", "gat", "cgat"} <= set(names)
        assert [n for n in names if n.startswith("decoder:")] == [f"decoder:{v.value}" for v in Variant]
        assert len(names) == len(set(names))

    def test_primitive_cases_pass(self):
        """Prueba que todas las primitivas superan la tolerancia"""
        cases = [name for name in suite_case_names() if name.startswith("op:")]
        reports = run_gradcheck_suite(cases=cases)
        assert [r.name for r in reports] == cases
        assert all(r.passed for r in reports), [(r.name, r.max_error) for r in reports if not r.passed]

    def test_layer_cases_pass(self):
        """Prueba la atención y las dos capas de grafo"""
        reports = run_gradcheck_suite(cases=["attention", "gat", "cgat"])
        assert len(reports) == 3
        assert all(r.passed for r in reports)

    def test_conditional_decoder_passes(self):
        """Prueba la variante más completa del decodificador"""
        (report,) = run_gradcheck_suite(cases=["decoder:HA-SG+CGAT"])
        assert report.passed, report.failures()

    @pytest.mark.slow
    @pytest.mark.parametrize("variant", list(Variant))
    def test_every_decoder_variant(self, variant):
        """Prueba cada variante sobre cinco pasos desenrollados"""
        (report,) = run_gradcheck_suite(cases=[f"decoder:{variant.value}"])
        assert report.passed, report.failures()

    def test_unknown_case(self):
        """Prueba que un caso inexistente es un error de configuración"""
        with pytest.raises(ConfigurationError) as exc:
            run_gradcheck_suite(cases=["op:softplus"])
        assert exc.value.exit_code == 1

    def test_tight_tolerance_fails(self):
        """Prueba que una tolerancia imposible marca fallos"""
        (report,) = run_gradcheck_suite(tolerance=0.0, cases=["op:tanh"])
        assert report.tolerance == 0.0
        assert not report.passed or report.max_error == 0.0
