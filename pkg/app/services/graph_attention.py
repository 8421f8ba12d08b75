"""
Capas GAT y C-GAT sobre la matriz de características del grafo de escena.

Cada vértice atiende sobre su vecindario:

- objeto v_i: él mismo, las relaciones entrantes (índice ascendente) y los
  sujetos de esas relaciones (índice ascendente), sin repetidos;
- relación: ella misma, su sujeto y su objeto.

La fila actualizada es tanh(W_out^T [fila; contexto]) con parámetros propios
de cada tipo de vértice. Todas las filas se calculan a partir de la matriz
previa a la actualización. En C-GAT la consulta es un vector externo; GAT
usa la propia fila de cada vértice como consulta.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ShapeMismatchError
from app.services.attention import AttentionParams, attend, attention_shapes
from app.services.scene_graph import SceneGraph
from app.services.tensor import (
    Tensor,
    add,
    concat,
    constant,
    embedding_gather,
    matmul,
    mul,
    repeat_rows,
    reshape,
    tanh,
)


@dataclass
class GraphAttentionParams:
    object_attention: AttentionParams
    relation_attention: AttentionParams
    object_output: Tensor
    relation_output: Tensor

    @classmethod
    def from_tensors(cls, tensors: Mapping[str, Tensor], prefix: str = "graph") -> "GraphAttentionParams":
        return cls(
            AttentionParams.from_tensors(tensors, f"{prefix}.object"),
            AttentionParams.from_tensors(tensors, f"{prefix}.relation"),
            tensors[f"{prefix}.object.output_proj"],
            tensors[f"{prefix}.relation.output_proj"],
        )


def graph_attention_shapes(
    prefix: str, feature_dim: int, query_dim: int, hidden: int
) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for kind in ("object", "relation"):
        shapes.update(attention_shapes(f"{prefix}.{kind}", feature_dim, query_dim, hidden))
        shapes[f"{prefix}.{kind}.output_proj"] = (2 * feature_dim, feature_dim)
    return shapes


def neighborhood(graph: SceneGraph, row: int) -> List[int]:
    """
    Filas de Y que forman el vecindario de la fila ``row``

    Las filas de objeto son 0..o-1 y las de relación o..o+r-1.
    """
    o = graph.num_objects
    if row < o:
        incoming = [j for j, r in enumerate(graph.relations) if r.object == row]
        subjects = sorted({graph.relations[j].subject for j in incoming})
        rows = [row] + [o + j for j in incoming] + subjects
    else:
        relation = graph.relations[row - o]
        rows = [row, relation.subject, relation.object]
    return list(dict.fromkeys(rows))


@dataclass
class GraphBatch:
    """
    Lote de grafos con relleno.

    Un grafo vacío aporta una fila de relleno a cero marcada como activa en
    ``row_mask`` para que la atención sobre Y esté definida.
    """

    graphs: Tuple[SceneGraph, ...]
    features: np.ndarray
    row_mask: np.ndarray
    object_rows: np.ndarray
    relation_rows: np.ndarray
    neighbors: np.ndarray
    neighbor_mask: np.ndarray

    @property
    def size(self) -> int:
        return len(self.graphs)

    @property
    def rows(self) -> int:
        return self.features.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    @classmethod
    def from_graphs(cls, graphs: Sequence[SceneGraph]) -> "GraphBatch":
        if not graphs:
            raise ShapeMismatchError("graph_batch", (0,))
        k = graphs[0].feature_dim
        if any(g.feature_dim != k for g in graphs):
            raise ShapeMismatchError("graph_batch", *[(g.feature_dim,) for g in graphs])

        batch, rows = len(graphs), max(max(g.num_vertices for g in graphs), 1)
        hoods = [[neighborhood(g, i) for i in range(g.num_vertices)] for g in graphs]
        width = max([len(h) for hs in hoods for h in hs] + [1])

        features = np.zeros((batch, rows, k))
        row_mask = np.zeros((batch, rows), dtype=bool)
        object_rows = np.zeros((batch, rows), dtype=bool)
        relation_rows = np.zeros((batch, rows), dtype=bool)
        neighbors = np.zeros((batch, rows, width), dtype=np.int64)
        neighbor_mask = np.zeros((batch, rows, width), dtype=bool)

        for b, graph in enumerate(graphs):
            o, n = graph.num_objects, graph.num_vertices
            for i, vertex in enumerate(graph.objects):
                features[b, i] = vertex.feature
            for j, relation in enumerate(graph.relations):
                features[b, o + j] = relation.feature
            row_mask[b, : max(n, 1)] = True
            object_rows[b, :o] = True
            relation_rows[b, o:n] = True
            for i in range(rows):
                hood = hoods[b][i] if i < n else [i]
                neighbors[b, i, : len(hood)] = hood
                neighbor_mask[b, i, : len(hood)] = True

        return cls(tuple(graphs), features, row_mask, object_rows, relation_rows, neighbors, neighbor_mask)


def cgat_batch(
    batch: GraphBatch,
    features: Tensor,
    query: Tensor,
    params: GraphAttentionParams
) -> Tensor:
    """
    Capa C-GAT por lotes

    Args:
        batch: Estructura de los grafos
        features: Características (B, R, k)
        query: Consulta externa (B, D_q) compartida por los vértices de cada
            grafo, o (B, R, D_q) por vértice
        params: Parámetros de la capa

    Returns:
        Características actualizadas (B, R, k); las filas de relleno valen 0
    """
    b, rows, k = batch.size, batch.rows, batch.feature_dim
    if features.shape != (b, rows, k):
        raise ShapeMismatchError("cgat_layer", features.shape, (b, rows, k))
    if query.ndim == 2:
        if query.shape[0] != b:
            raise ShapeMismatchError("cgat_layer", query.shape, (b,))
        query = repeat_rows(query, rows)
    elif query.shape[:2] != (b, rows):
        raise ShapeMismatchError("cgat_layer", query.shape, (b, rows))

    offsets = (np.arange(b) * rows)[:, None, None]
    gathered = embedding_gather(reshape(features, (b * rows, k)), batch.neighbors + offsets)

    updated = None
    for kind_rows, attention, output in (
        (batch.object_rows, params.object_attention, params.object_output),
        (batch.relation_rows, params.relation_attention, params.relation_output),
    ):
        context, _ = attend(gathered, query, attention, batch.neighbor_mask)
        rows_out = tanh(matmul(concat([features, context]), output))
        kind_mask = np.repeat(kind_rows[..., None].astype(np.float64), k, axis=-1)
        masked = mul(rows_out, constant(kind_mask))
        updated = masked if updated is None else add(updated, masked)
    return updated


def gat_batch(batch: GraphBatch, features: Tensor, params: GraphAttentionParams) -> Tensor:
    """GAT: C-GAT con la fila de cada vértice como consulta"""
    return cgat_batch(batch, features, features, params)


def _single(graph: SceneGraph, features: Tensor, query: Optional[Tensor], params: GraphAttentionParams) -> Tensor:
    n, k = graph.num_vertices, graph.feature_dim
    if features.shape != (n, k):
        raise ShapeMismatchError("graph_attention", features.shape, (n, k))
    if n == 0:
        return constant(np.zeros((0, k)))
    batch = GraphBatch.from_graphs([graph])
    batched = reshape(features, (1, n, k))
    if query is None:
        out = gat_batch(batch, batched, params)
    elif query.ndim == 1:
        out = cgat_batch(batch, batched, reshape(query, (1, query.shape[0])), params)
    else:
        out = cgat_batch(batch, batched, reshape(query, (1,) + query.shape), params)
    return reshape(out, (n, k))


def gat_layer(graph: SceneGraph, features: Tensor, params: GraphAttentionParams) -> Tensor:
    """
    Capa GAT sobre un grafo

    Args:
        graph: Grafo de escena
        features: Matriz (o+r) x k
        params: Parámetros de la capa (consulta de dimensión k)

    Returns:
        Matriz actualizada (o+r) x k
    """
    return _single(graph, features, None, params)


def cgat_layer(graph: SceneGraph, features: Tensor, query: Tensor, params: GraphAttentionParams) -> Tensor:
    """
    Capa C-GAT sobre un grafo

    Args:
        graph: Grafo de escena
        features: Matriz (o+r) x k
        query: Consulta externa (D_q,) o una por vértice ((o+r), D_q)
        params: Parámetros de la capa

    Returns:
        Matriz actualizada (o+r) x k
    """
    return _single(graph, features, query, params)
