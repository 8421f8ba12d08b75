"""
Comprobación de gradientes por diferencias finitas centrales.

``grad_check`` compara los gradientes de la cinta con (f(θ+h) − f(θ−h)) / 2h
para cada entrada de cada parámetro. ``run_gradcheck_suite`` recorre todas
las primitivas, las capas de atención y cada variante del decodificador
sobre un desenrollado de cinco pasos con dimensiones diminutas.
"""

from typing import Callable, Dict, Iterable, List, Mapping, Optional

import numpy as np

from app.core.exceptions import ConfigurationError, NonDeterministicClosureError
from app.core.logging import LogManager
from app.schemas.config import ModelConfig, Variant
from app.schemas.report import GradCheckEntry, GradCheckReport
from app.services.attention import AttentionParams, attend, attention_shapes
from app.services.decoder import CaptionInputs, make_dropout_masks, parameter_shapes, sequence_loss
from app.services.graph_attention import (
    GraphAttentionParams,
    GraphBatch,
    cgat_layer,
    gat_layer,
    graph_attention_shapes,
)
from app.services.scene_graph import ObjectVertex, RelationVertex, SceneGraph, validate_graph
from app.services.tensor import (
    Tape,
    Tensor,
    add,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding_gather,
    masked_softmax_rows,
    matmul,
    mean_rows,
    mul,
    repeat_rows,
    reshape,
    scale,
    sigmoid,
    slice_last,
    stack,
    tanh,
    tensor_sum,
)
from app.services.vocabulary import END_ID, START_ID

logger = LogManager.get_logger(__name__)

DEFAULT_TOLERANCE = 1e-4
DEFAULT_STEP = 1e-5
UNROLL_STEPS = 5

Closure = Callable[[Dict[str, Tensor]], Tensor]


def _forward(closure: Closure, values: Mapping[str, np.ndarray]) -> float:
    return float(closure({name: constant(value) for name, value in values.items()}).value)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a − n| / max(max|a|, max|n|, 1e-8)"""
    if analytic.size == 0:
        return 0.0
    denominator = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()), 1e-8)
    return float(np.abs(analytic - numeric).max()) / denominator


def grad_check(
    closure: Closure,
    params: Mapping[str, np.ndarray],
    tolerance: float = DEFAULT_TOLERANCE,
    step: float = DEFAULT_STEP,
    name: str = "closure"
) -> GradCheckReport:
    """
    Compara gradientes analíticos y numéricos de una clausura escalar

    Args:
        closure: Función de tensores de parámetros a una pérdida escalar
        params: Valores de los parámetros
        tolerance: Error relativo máximo admitido
        step: Paso h de las diferencias centrales
        name: Nombre del caso en el informe

    Returns:
        Informe con el error relativo de cada parámetro

    Raises:
        NonDeterministicClosureError: Dos evaluaciones iguales difieren
    """
    values = {key: np.array(value, dtype=np.float64, copy=True) for key, value in params.items()}

    first = _forward(closure, values)
    second = _forward(closure, values)
    if first != second:
        raise NonDeterministicClosureError(first, second)

    with Tape() as tape:
        loss = closure(tape.watch_all(values))
    analytic = tape.backward(loss)

    entries = []
    for key, value in values.items():
        numeric = np.zeros_like(value)
        flat, grad = value.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = _forward(closure, values)
            flat[i] = original - step
            minus = _forward(closure, values)
            flat[i] = original
            grad[i] = (plus - minus) / (2.0 * step)
        error = relative_error(analytic[key], numeric)
        entries.append(GradCheckEntry(parameter=key, relative_error=error, passed=error <= tolerance))

    report = GradCheckReport(name=name, tolerance=tolerance, entries=entries)
    if not report.passed:
        logger.warning(
            "Comprobación de gradiente fallida",
            extra={"case": name, "max_error": report.max_error, "failures": [e.parameter for e in report.failures()]}
        )
    return report


def _project(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Reduce una salida a escalar con pesos aleatorios fijos"""
    return tensor_sum(mul(out, constant(rng.normal(size=out.shape))))


def _primitive_cases(rng: np.random.Generator) -> Dict[str, tuple]:
    """Caso por primitiva: (clausura, parámetros)"""
    w = {shape: rng.normal(size=shape) for shape in [(3, 4), (4, 2), (3, 4, 2)]}
    softmax_mask = np.array([[True, True, False, True], [False, True, True, True], [True, False, False, False]])
    row_mask = np.array([[True, False, True], [True, True, True]])
    dropout_mask = (rng.random((3, 4)) < 0.5) / 0.5
    targets = np.array([[1, 3], [0, 2]])
    target_mask = np.array([[True, True], [True, False]])

    def with_weights(fn, shape):
        weights = rng.normal(size=shape)
        return lambda p: tensor_sum(mul(fn(p), constant(weights)))

    return {
        "matmul": (
            with_weights(lambda p: matmul(p["a"], p["b"]), (3, 2)),
            {"a": rng.normal(size=(3, 4)), "b": w[(4, 2)]},
        ),
        "matmul_vector": (
            with_weights(lambda p: matmul(p["a"], p["v"]), (3,)),
            {"a": w[(3, 4)], "v": rng.normal(size=4)},
        ),
        "matmul_batched": (
            with_weights(lambda p: matmul(p["w"], p["x"]), (2, 3)),
            {"w": rng.normal(size=(2, 4)), "x": rng.normal(size=(2, 4, 3))},
        ),
        "add": (with_weights(lambda p: add(p["a"], p["b"]), (3, 4)), {"a": w[(3, 4)], "b": rng.normal(size=(3, 4))}),
        "mul": (with_weights(lambda p: mul(p["a"], p["b"]), (3, 4)), {"a": w[(3, 4)], "b": rng.normal(size=(3, 4))}),
        "scale": (with_weights(lambda p: scale(p["a"], -1.7), (3, 4)), {"a": w[(3, 4)]}),
        "concat": (
            with_weights(lambda p: concat([p["a"], p["b"]]), (3, 6)),
            {"a": w[(3, 4)], "b": rng.normal(size=(3, 2))},
        ),
        "stack": (
            with_weights(lambda p: stack([p["a"], p["b"]]), (2, 3, 4)),
            {"a": w[(3, 4)], "b": rng.normal(size=(3, 4))},
        ),
        "reshape": (with_weights(lambda p: reshape(p["a"], (2, 6)), (2, 6)), {"a": w[(3, 4)]}),
        "repeat_rows": (with_weights(lambda p: repeat_rows(p["a"], 3), (3, 3, 4)), {"a": w[(3, 4)]}),
        "slice_last": (with_weights(lambda p: slice_last(p["a"], 1, 3), (3, 2)), {"a": w[(3, 4)]}),
        "sum": (lambda p: tensor_sum(mul(p["a"], p["a"])), {"a": w[(3, 4)]}),
        "tanh": (with_weights(lambda p: tanh(p["a"]), (3, 4)), {"a": w[(3, 4)]}),
        "sigmoid": (with_weights(lambda p: sigmoid(p["a"]), (3, 4)), {"a": w[(3, 4)]}),
        "mean_rows": (with_weights(lambda p: mean_rows(p["x"], row_mask), (2, 2)), {"x": w[(3, 4, 2)][:2, :3]}),
        "embedding_gather": (
            with_weights(lambda p: embedding_gather(p["table"], np.array([[0, 2], [2, 2]])), (2, 2, 4)),
            {"table": w[(3, 4)]},
        ),
        "dropout": (with_weights(lambda p: dropout(p["a"], dropout_mask), (3, 4)), {"a": w[(3, 4)]}),
        "masked_softmax_rows": (
            with_weights(lambda p: masked_softmax_rows(p["a"], softmax_mask), (3, 4)),
            {"a": rng.normal(size=(3, 4))},
        ),
        "cross_entropy": (
            lambda p: cross_entropy(p["logits"], targets, target_mask),
            {"logits": rng.normal(size=(2, 2, 4))},
        ),
    }


def _tiny_graph(rng: np.random.Generator, k: int, objects: int, relations: List[tuple]) -> SceneGraph:
    graph = SceneGraph(
        tuple(ObjectVertex(i % 3, rng.normal(size=k)) for i in range(objects)),
        tuple(RelationVertex(p, s, o, rng.normal(size=k), 0.9) for p, s, o in relations),
        k,
    )
    return validate_graph(graph)


def _random_params(shapes: Mapping[str, tuple], rng: np.random.Generator) -> Dict[str, np.ndarray]:
    return {name: rng.uniform(-0.5, 0.5, size=shape) for name, shape in shapes.items()}


def _layer_cases(rng: np.random.Generator) -> Dict[str, tuple]:
    k, q, a = 3, 2, 3
    graph = _tiny_graph(rng, k, 3, [(0, 0, 1), (1, 2, 1), (2, 1, 0)])
    n = graph.num_vertices
    weights = rng.normal(size=(n, k))
    att_weights = rng.normal(size=(2, 3))
    mask = np.array([[True, True, False, True], [True, True, True, True]])

    def attention_loss(p):
        context, _ = attend(p["features"], p["query"], AttentionParams.from_tensors(p, "att"), mask)
        return tensor_sum(mul(context, constant(att_weights)))

    attention_params = _random_params(attention_shapes("att", 3, q, a), rng)
    attention_params.update(features=rng.normal(size=(2, 4, 3)), query=rng.normal(size=(2, q)))

    gat_params = _random_params(graph_attention_shapes("graph", k, k, a), rng)
    gat_params["features"] = rng.normal(size=(n, k))
    cgat_params = _random_params(graph_attention_shapes("graph", k, q, a), rng)
    cgat_params.update(features=rng.normal(size=(n, k)), q=rng.normal(size=q))

    return {
        "attention": (attention_loss, attention_params),
        "gat": (
            lambda p: tensor_sum(mul(gat_layer(graph, p["features"], GraphAttentionParams.from_tensors(p)),
                                     constant(weights))),
            gat_params,
        ),
        "cgat": (
            lambda p: tensor_sum(mul(cgat_layer(graph, p["features"], p["q"], GraphAttentionParams.from_tensors(p)),
                                     constant(weights))),
            cgat_params,
        ),
    }


def _decoder_case(variant: Variant, rng: np.random.Generator) -> tuple:
    config = ModelConfig(
        variant=variant, vocab_size=7, hidden_size=3, embedding_size=3, attention_size=3,
        image_feature_dim=2, graph_feature_dim=2, dropout=0.5,
    )
    features = rng.normal(size=(2, 3, 2))
    feature_mask = np.array([[True, True, False], [True, True, True]])
    graphs = None
    if variant.uses_graph:
        graphs = GraphBatch.from_graphs([
            _tiny_graph(rng, 2, 3, [(0, 0, 1), (1, 2, 0)]),
            _tiny_graph(rng, 2, 2, [(1, 1, 0)]),
        ])
    inputs = CaptionInputs(constant(features), feature_mask, graphs)
    captions = [[START_ID, 4, 5, 6, 4, END_ID], [START_ID, 6, 5, END_ID]]
    masks = make_dropout_masks(rng, UNROLL_STEPS, 2, config)
    params = _random_params(parameter_shapes(config), rng)
    return (lambda p: sequence_loss(captions, inputs, p, config, masks)), params


def suite_case_names() -> List[str]:
    names = [f"op:{kind}" for kind in _primitive_cases(np.random.default_rng(0))]
    names += ["attention", "gat", "cgat"]
    names += [f"decoder:{variant.value}" for variant in Variant]
    return names


def run_gradcheck_suite(
    tolerance: float = DEFAULT_TOLERANCE,
    cases: Optional[Iterable[str]] = None,
    seed: int = 0
) -> List[GradCheckReport]:
    """
    Ejecuta la batería completa de comprobaciones de gradiente

    Args:
        tolerance: Error relativo máximo
        cases: Subconjunto de casos por nombre (por defecto todos)
        seed: Semilla de entradas y parámetros

    Returns:
        Un informe por caso, en orden

    Raises:
        ConfigurationError: Algún caso pedido no existe
    """
    selected = set(cases) if cases is not None else None
    if selected is not None:
        unknown = sorted(selected - set(suite_case_names()))
        if unknown:
            raise ConfigurationError(f"Casos de gradiente desconocidos: {unknown}", {"cases": unknown})
    rng = np.random.default_rng(seed)
    builders: Dict[str, Callable[[], tuple]] = {}
    for kind, case in _primitive_cases(rng).items():
        builders[f"op:{kind}"] = lambda case=case: case
    for name, case in _layer_cases(rng).items():
        builders[name] = lambda case=case: case
    for variant in Variant:
        builders[f"decoder:{variant.value}"] = lambda variant=variant: _decoder_case(variant, np.random.default_rng(seed))

    reports = []
    for name, build in builders.items():
        if selected is not None and name not in selected:
            continue
        closure, params = build()
        reports.append(grad_check(closure, params, tolerance, name=name))
    logger.info(
        "Batería de gradientes completada",
        extra={"cases": len(reports), "failed": [r.name for r in reports if not r.passed]}
    )
    return reports
