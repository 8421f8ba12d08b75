import pytest
from fastapi import FastAPI
from fastapi.testclient import TestClient

from app.core.error_handlers import unhandled_exception_handler, workbench_error_handler
from app.core.exceptions import (
    CheckpointError,
    ConfigurationError,
    DivergenceError,
    GraphInputError,
    GraphValidationError,
    IncompatibleCheckpointError,
    MaskedRowError,
    NaNGradientError,
    OutputExistsError,
    ShapeMismatchError,
    UndefinedRecallError,
    WorkbenchError,
)

app = FastAPI()
app.add_exception_handler(WorkbenchError, workbench_error_handler)
app.add_exception_handler(Exception, unhandled_exception_handler)


@app.get("/graph-error")
async def graph_error():
    raise GraphValidationError("La relación 0 es un bucle", {"vertex": "relation[0]"})


@app.get("/crash")
async def crash():
    raise RuntimeError("boom")


client = TestClient(app, raise_server_exceptions=False)


def test_shape_mismatch_error():
    """Test que verifica el mensaje y los detalles de formas incompatibles"""
    error = ShapeMismatchError("add", (2, 3), (3, 2))
    assert error.error_code == "SHAPE_MISMATCH"
    assert error.exit_code == 2
    assert error.details["shapes"] == [[2, 3], [3, 2]]
    assert "(2, 3) vs (3, 2)" in error.message


def test_masked_row_error():
    """Test que verifica el error de fila totalmente enmascarada"""
    error = MaskedRowError(4)
    assert error.error_code == "MASKED_ROW"
    assert error.details == {"row": 4}


def test_validation_errors_exit_with_one():
    """Test que verifica que los errores de entrada salen con código 1"""
    assert GraphValidationError("x").exit_code == 1
    assert GraphValidationError("x").status_code == 422
    assert ConfigurationError("x").exit_code == 1
    assert UndefinedRecallError().exit_code == 1
    assert IncompatibleCheckpointError("x").exit_code == 1
    assert OutputExistsError("/tmp/out").exit_code == 1
    assert OutputExistsError("/tmp/out").status_code == 409


def test_runtime_errors_exit_with_two():
    """Test que verifica que los fallos de ejecución salen con código 2"""
    assert NaNGradientError("decoder.w").exit_code == 2
    assert DivergenceError(3, 10, float("inf")).exit_code == 2
    assert CheckpointError("x").exit_code == 2


def test_error_inheritance():
    """Test que verifica la jerarquía de herencia de errores"""
    assert isinstance(GraphInputError("BUTD", "x"), ConfigurationError)
    assert isinstance(IncompatibleCheckpointError("x"), CheckpointError)
    assert GraphInputError("BUTD", "x").error_code == "GRAPH_INPUT_ERROR"
    assert IncompatibleCheckpointError("x").error_code == "INCOMPATIBLE_CHECKPOINT"
    for error in (GraphValidationError("x"), UndefinedRecallError(), OutputExistsError("o")):
        assert isinstance(error, WorkbenchError)


def test_error_with_details():
    """Test que verifica el manejo de errores con detalles adicionales"""
    details = {"path": "config.json"}
    error = ConfigurationError("Configuración inválida", details=details)
    assert error.details == details
    assert str(error) == "Configuración inválida"


def test_workbench_error_handler():
    """Test que verifica la respuesta JSON de un error del banco de pruebas"""
    response = client.get("/graph-error")
    assert response.status_code == 422
    body = response.json()["error"]
    assert body["code"] == "GRAPH_VALIDATION_ERROR"
    assert body["details"] == {"vertex": "relation[0]"}


def test_unhandled_exception_handler():
    """Test que verifica la respuesta ante excepciones no previstas"""
    response = client.get("/crash")
    assert response.status_code == 500
    body = response.json()["error"]
    assert body["code"] == "INTERNAL_SERVER_ERROR"
    assert body["details"]["type"] == "RuntimeError"
