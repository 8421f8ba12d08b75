"""
Decodificador BUTD de dos LSTM y sus variantes condicionadas por el grafo.

Todas las operaciones trabajan con un eje de lote inicial B. La LSTM1 recibe
[h2; w; X̄(; Ȳ)] y la LSTM2 recibe [h1; x(; y)]. El orden de las cabezas de
atención depende de la variante:

- BUTD: x = Att_x(X, h1)
- FA: x = Att_x(X, h1), y = Att_y(Y, h1)
- HA-SG (+GAT, +CGAT): y = Att_y(Y, h1), luego x = Att_x(X, [h1; y])
- HA-IM: x = Att_x(X, h1), luego y = Att_y(Y, [h1; x])

HA-SG+GAT codifica Y una vez por imagen; HA-SG+CGAT recalcula la capa en cada
paso con h1(t) como consulta y toma Ȳ de las características sin codificar.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ConfigurationError, EmptyCaptionError, GraphInputError, ShapeMismatchError
from app.core.logging import LogManager
from app.schemas.config import ModelConfig, Variant
from app.services.attention import AttentionParams, attend, attention_shapes
from app.services.graph_attention import (
    GraphAttentionParams,
    GraphBatch,
    cgat_batch,
    gat_batch,
    graph_attention_shapes,
)
from app.services.parameters import ParameterStore
from app.services.tensor import (
    Tensor,
    add,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding_gather,
    matmul,
    mean_rows,
    mul,
    repeat_rows,
    sigmoid,
    slice_last,
    stack,
    tanh,
)
from app.services.vocabulary import END_ID, PAD_ID, START_ID

logger = LogManager.get_logger(__name__)

INIT_RANGE = 0.1


@dataclass
class DecoderState:
    h1: Tensor
    c1: Tensor
    h2: Tensor
    c2: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden: int) -> "DecoderState":
        return cls(*(constant(np.zeros((batch, hidden))) for _ in range(4)))

    def select(self, rows: Sequence[int]) -> "DecoderState":
        """Reordena las filas del lote (solo inferencia)"""
        rows = np.asarray(rows, dtype=np.int64)
        return DecoderState(*(constant(t.value[rows]) for t in (self.h1, self.c1, self.h2, self.c2)))


@dataclass
class CaptionInputs:
    """
    Entradas visuales de un lote: X (B,n,d) con máscara y, opcionalmente, el
    lote de grafos cuyas características forman Y.
    """

    features: Tensor
    feature_mask: np.ndarray
    graphs: Optional[GraphBatch] = None
    graph_features: Optional[Tensor] = None

    @property
    def batch_size(self) -> int:
        return self.features.shape[0]

    def graph_tensor(self) -> Optional[Tensor]:
        if self.graphs is None:
            return None
        return self.graph_features if self.graph_features is not None else constant(self.graphs.features)


@dataclass
class EncodedInputs:
    """Entradas preparadas para ``step``: medias y, si aplica, Y codificado"""

    features: Tensor
    feature_mask: np.ndarray
    feature_mean: Tensor
    graphs: Optional[GraphBatch] = None
    graph_features: Optional[Tensor] = None
    graph_mask: Optional[np.ndarray] = None
    graph_mean: Optional[Tensor] = None

    @property
    def batch_size(self) -> int:
        return self.features.shape[0]

    def select(self, rows: Sequence[int]) -> "EncodedInputs":
        """Subconjunto o repetición de filas del lote (solo inferencia)"""
        rows = np.asarray(rows, dtype=np.int64)
        graphs = None
        if self.graphs is not None:
            g = self.graphs
            graphs = GraphBatch(
                tuple(g.graphs[i] for i in rows), g.features[rows], g.row_mask[rows], g.object_rows[rows],
                g.relation_rows[rows], g.neighbors[rows], g.neighbor_mask[rows]
            )
        pick = lambda t: None if t is None else constant(t.value[rows])
        return EncodedInputs(
            pick(self.features),
            self.feature_mask[rows],
            pick(self.feature_mean),
            graphs,
            pick(self.graph_features),
            None if self.graph_mask is None else self.graph_mask[rows],
            pick(self.graph_mean),
        )


@dataclass
class DropoutMasks:
    """Máscaras de dropout invertido para un paso (None = sin dropout)"""

    embedding: Optional[np.ndarray] = None
    hidden: Optional[np.ndarray] = None


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """
    Formas de todos los parámetros de la variante

    Args:
        config: Configuración del modelo

    Returns:
        Mapa ordenado nombre -> forma
    """
    h, e, v = config.hidden_size, config.embedding_size, config.vocab_size
    d, k, a = config.image_feature_dim, config.graph_feature_dim, config.attention_hidden
    variant = config.variant
    graph = variant.uses_graph

    shapes: Dict[str, Tuple[int, ...]] = {"embedding": (v, e)}
    lstm1_in = h + e + d + (k if graph else 0)
    lstm2_in = h + d + (k if graph else 0)
    for name, width in (("lstm1", lstm1_in), ("lstm2", lstm2_in)):
        shapes[f"{name}.w_in"] = (width, 4 * h)
        shapes[f"{name}.w_h"] = (h, 4 * h)
        shapes[f"{name}.b"] = (4 * h,)

    shapes.update(attention_shapes("att_x", d, h + k if variant.sg_first else h, a))
    if graph:
        shapes.update(attention_shapes("att_y", k, h + d if variant is Variant.HA_IM else h, a))
    if variant is Variant.HA_SG_GAT:
        shapes.update(graph_attention_shapes("graph", k, k, a))
    elif variant is Variant.HA_SG_CGAT:
        shapes.update(graph_attention_shapes("graph", k, h, a))
    shapes["output_proj"] = (h, v)
    return shapes


def init_params(config: ModelConfig, seed: int) -> ParameterStore:
    """
    Inicializa uniforme en [-0.1, 0.1] con sesgo de la puerta de olvido en 1

    Args:
        config: Configuración del modelo
        seed: Semilla

    Returns:
        Almacén de parámetros
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    h = config.hidden_size
    for name, shape in parameter_shapes(config).items():
        value = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        if name.endswith(".b"):
            value[h:2 * h] = 1.0
        store.add(name, value)
    logger.debug(
        "Parámetros inicializados",
        extra={"variant": config.variant.value, "parameters": store.size(), "seed": seed}
    )
    return store


def as_constants(store: ParameterStore) -> Dict[str, Tensor]:
    """Parámetros congelados para inferencia"""
    return {name: constant(value) for name, value in store.items()}


def make_dropout_masks(
    rng: np.random.Generator, steps: int, batch: int, config: ModelConfig
) -> List[DropoutMasks]:
    """Máscaras de dropout invertido, una por paso, con valores en {0, 1/keep}"""
    if config.dropout <= 0.0:
        return [DropoutMasks() for _ in range(steps)]
    keep = 1.0 - config.dropout
    masks = []
    for _ in range(steps):
        embedding = (rng.random((batch, config.embedding_size)) < keep) / keep
        hidden = (rng.random((batch, config.hidden_size)) < keep) / keep
        masks.append(DropoutMasks(embedding, hidden))
    return masks


def _lstm(inputs: Tensor, h: Tensor, c: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tuple[Tensor, Tensor]:
    hidden = h.shape[-1]
    bias = repeat_rows(params[f"{prefix}.b"], inputs.shape[0])
    gates = add(add(matmul(inputs, params[f"{prefix}.w_in"]), matmul(h, params[f"{prefix}.w_h"])), bias)
    i = sigmoid(slice_last(gates, 0, hidden))
    f = sigmoid(slice_last(gates, hidden, 2 * hidden))
    g = tanh(slice_last(gates, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_last(gates, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


def encode_inputs(inputs: CaptionInputs, params: Mapping[str, Tensor], config: ModelConfig) -> EncodedInputs:
    """
    Calcula X̄, Ȳ y, para HA-SG+GAT, la codificación del grafo

    Raises:
        GraphInputError: BUTD con grafo, o variante de grafo sin grafo
    """
    variant = config.variant
    if variant.uses_graph and inputs.graphs is None:
        raise GraphInputError(variant.value, f"La variante {variant.value} requiere un grafo de escena")
    if not variant.uses_graph and inputs.graphs is not None:
        raise GraphInputError(variant.value, "La variante BUTD no admite grafo de escena")

    batch, _, d = inputs.features.shape
    if d != config.image_feature_dim:
        raise ShapeMismatchError("encode_inputs", inputs.features.shape, (batch, "n", config.image_feature_dim))

    feature_mean = mean_rows(inputs.features, inputs.feature_mask)
    if not variant.uses_graph:
        return EncodedInputs(inputs.features, inputs.feature_mask, feature_mean)

    graphs = inputs.graphs
    if graphs.size != batch:
        raise ShapeMismatchError("encode_inputs", (graphs.size,), (batch,))
    raw = inputs.graph_tensor()
    graph_mean = mean_rows(raw, graphs.row_mask)
    encoded = raw
    if variant is Variant.HA_SG_GAT:
        encoded = gat_batch(graphs, raw, GraphAttentionParams.from_tensors(params))
        graph_mean = mean_rows(encoded, graphs.row_mask)
    return EncodedInputs(
        inputs.features, inputs.feature_mask, feature_mean, graphs, encoded, graphs.row_mask, graph_mean
    )


def step(
    prev_ids: Sequence[int],
    state: DecoderState,
    encoded: EncodedInputs,
    params: Mapping[str, Tensor],
    config: ModelConfig,
    masks: Optional[DropoutMasks] = None
) -> Tuple[DecoderState, Tensor]:
    """
    Un paso del decodificador

    Args:
        prev_ids: Palabra previa por ejemplo (B,)
        state: Estado recurrente
        encoded: Entradas preparadas por ``encode_inputs``
        params: Tensores de parámetros
        config: Configuración del modelo
        masks: Dropout del paso (None en inferencia)

    Returns:
        Tupla (nuevo estado, logits (B,V))
    """
    variant = config.variant
    prev_ids = np.asarray(prev_ids, dtype=np.int64)
    if prev_ids.size and (prev_ids.min() < 0 or prev_ids.max() >= config.vocab_size):
        raise ConfigurationError(f"Id de palabra fuera de vocabulario: {prev_ids.tolist()}")

    word = embedding_gather(params["embedding"], prev_ids)
    if masks is not None and masks.embedding is not None:
        word = dropout(word, masks.embedding)

    lstm1_parts = [state.h2, word, encoded.feature_mean]
    if variant.uses_graph:
        lstm1_parts.append(encoded.graph_mean)
    h1, c1 = _lstm(concat(lstm1_parts), state.h1, state.c1, params, "lstm1")

    att_x = AttentionParams.from_tensors(params, "att_x")
    x_feats, x_mask = encoded.features, encoded.feature_mask
    if not variant.uses_graph:
        x, _ = attend(x_feats, h1, att_x, x_mask)
        lstm2_parts = [h1, x]
    else:
        att_y = AttentionParams.from_tensors(params, "att_y")
        y_feats, y_mask = encoded.graph_features, encoded.graph_mask
        if variant is Variant.HA_SG_CGAT:
            y_feats = cgat_batch(encoded.graphs, encoded.graph_features, h1, GraphAttentionParams.from_tensors(params))
        if variant is Variant.FA:
            x, _ = attend(x_feats, h1, att_x, x_mask)
            y, _ = attend(y_feats, h1, att_y, y_mask)
        elif variant is Variant.HA_IM:
            x, _ = attend(x_feats, h1, att_x, x_mask)
            y, _ = attend(y_feats, concat([h1, x]), att_y, y_mask)
        else:
            y, _ = attend(y_feats, h1, att_y, y_mask)
            x, _ = attend(x_feats, concat([h1, y]), att_x, x_mask)
        lstm2_parts = [h1, x, y]
    h2, c2 = _lstm(concat(lstm2_parts), state.h2, state.c2, params, "lstm2")

    out = h2
    if masks is not None and masks.hidden is not None:
        out = dropout(h2, masks.hidden)
    logits = matmul(out, params["output_proj"])
    return DecoderState(h1, c1, h2, c2), logits


def pad_captions(captions: Sequence[Sequence[int]]) -> np.ndarray:
    """
    Rellena captions envueltas en <start>/<end> hasta la misma longitud

    Raises:
        EmptyCaptionError: Caption sin tokens entre <start> y <end>
        ConfigurationError: Caption sin envolver
    """
    if not captions:
        raise EmptyCaptionError("No hay captions en el lote")
    for i, caption in enumerate(captions):
        if len(caption) < 2 or caption[0] != START_ID or caption[-1] != END_ID:
            raise ConfigurationError(f"La caption {i} no está envuelta en <start>/<end>", {"index": i})
        if len(caption) == 2:
            raise EmptyCaptionError(f"La caption {i} está vacía")
    width = max(len(c) for c in captions)
    padded = np.full((len(captions), width), PAD_ID, dtype=np.int64)
    for i, caption in enumerate(captions):
        padded[i, : len(caption)] = caption
    return padded


def sequence_loss(
    captions: Sequence[Sequence[int]],
    inputs: CaptionInputs,
    params: Mapping[str, Tensor],
    config: ModelConfig,
    masks: Optional[Sequence[DropoutMasks]] = None
) -> Tensor:
    """
    Entropía cruzada media por token con teacher forcing

    Args:
        captions: Ids por ejemplo, envueltos en <start>/<end>
        inputs: Entradas visuales del lote
        params: Tensores de parámetros
        config: Configuración del modelo
        masks: Dropout por paso (len = pasos) o None

    Returns:
        Pérdida escalar
    """
    tokens = pad_captions(captions)
    batch, width = tokens.shape
    if batch != inputs.batch_size:
        raise ShapeMismatchError("sequence_loss", tokens.shape, inputs.features.shape)
    steps = width - 1
    if masks is not None and len(masks) < steps:
        raise ShapeMismatchError("sequence_loss", (len(masks),), (steps,))

    encoded = encode_inputs(inputs, params, config)
    state = DecoderState.zeros(batch, config.hidden_size)
    logits = []
    for t in range(steps):
        state, step_logits = step(tokens[:, t], state, encoded, params, config, masks[t] if masks else None)
        logits.append(step_logits)

    targets = tokens[:, 1:].T
    active = targets != PAD_ID
    return cross_entropy(stack(logits), targets, active)


def score_sequence(
    tokens: Sequence[int],
    encoded: EncodedInputs,
    params: Mapping[str, Tensor],
    config: ModelConfig
) -> float:
    """Log-probabilidad total de una secuencia generada (sin <start>) para un ejemplo"""
    state = DecoderState.zeros(1, config.hidden_size)
    prev = START_ID
    total = 0.0
    for token in tokens:
        state, logits = step([prev], state, encoded, params, config)
        total += float(log_softmax(logits.value)[0, token])
        prev = token
    return total


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
