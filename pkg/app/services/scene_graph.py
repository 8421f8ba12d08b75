"""
Modelo de datos del grafo de escena.

Las aristas se guardan de forma implícita en cada vértice de relación
(``subject`` -> relación -> ``object``), por lo que cada relación tiene
exactamente una arista entrante y una saliente. ``graph_from_edges`` acepta
listas de aristas explícitas y verifica ambas reglas estructurales.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from app.core.exceptions import GraphValidationError, UnknownVertexError
from app.schemas.graph import GraphDocument, ObjectEntry, RelationEntry
from app.services.tensor import Tensor
from app.services.vocabulary import Vocabulary


class VertexKind(str, Enum):
    """Tipo de vértice"""
    OBJECT = "object"
    RELATION = "relation"


@dataclass(frozen=True)
class VertexRef:
    kind: VertexKind
    index: int

    def __str__(self) -> str:
        return f"{self.kind.value}[{self.index}]"


def _frozen(feature: Sequence[float]) -> np.ndarray:
    array = np.array(feature, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ObjectVertex:
    label: int
    feature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "feature", _frozen(self.feature))


@dataclass(frozen=True, eq=False)
class RelationVertex:
    predicate: int
    subject: int
    object: int
    feature: np.ndarray
    score: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "feature", _frozen(self.feature))


class Triplet(NamedTuple):
    subject: int
    predicate: int
    object: int


@dataclass(frozen=True, eq=False)
class SceneGraph:
    """Grafo bipartito objetos/relaciones con características de dimensión k"""

    objects: Tuple[ObjectVertex, ...]
    relations: Tuple[RelationVertex, ...]
    feature_dim: int

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "relations", tuple(self.relations))

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_vertices(self) -> int:
        return len(self.objects) + len(self.relations)

    def triplets(self) -> List[Triplet]:
        """Tripletas en orden de índice de relación"""
        return [
            Triplet(self.objects[r.subject].label, r.predicate, self.objects[r.object].label)
            for r in self.relations
        ]


class FeatureMatrix(NamedTuple):
    features: Tensor
    object_mask: np.ndarray


def validate_graph(
    graph: SceneGraph,
    num_object_labels: Optional[int] = None,
    num_predicates: Optional[int] = None,
    allow_self_loops: bool = False
) -> SceneGraph:
    """
    Verifica las invariantes estructurales del grafo

    Args:
        graph: Grafo a validar
        num_object_labels: Tamaño del vocabulario de objetos (opcional)
        num_predicates: Tamaño del vocabulario de predicados (opcional)
        allow_self_loops: Permitir relaciones con sujeto igual a objeto

    Returns:
        El mismo grafo, para encadenar

    Raises:
        GraphValidationError: Ante la primera violación encontrada
    """
    k = graph.feature_dim
    if k <= 0:
        raise GraphValidationError(f"Dimensión de características inválida: {k}")

    for i, vertex in enumerate(graph.objects):
        if vertex.feature.shape != (k,):
            raise GraphValidationError(
                f"El objeto {i} tiene características de forma {vertex.feature.shape}, se esperaba ({k},)",
                {"vertex": f"object[{i}]"}
            )
        if num_object_labels is not None and not 0 <= vertex.label < num_object_labels:
            raise GraphValidationError(f"Etiqueta de objeto fuera de vocabulario: {vertex.label}", {"vertex": f"object[{i}]"})

    o = graph.num_objects
    for j, relation in enumerate(graph.relations):
        where = {"vertex": f"relation[{j}]"}
        if relation.feature.shape != (k,):
            raise GraphValidationError(
                f"La relación {j} tiene características de forma {relation.feature.shape}, se esperaba ({k},)", where
            )
        if not (0 <= relation.subject < o and 0 <= relation.object < o):
            raise GraphValidationError(
                f"La relación {j} referencia un objeto inexistente ({relation.subject} -> {relation.object})", where
            )
        if relation.subject == relation.object and not allow_self_loops:
            raise GraphValidationError(f"La relación {j} es un bucle sobre el objeto {relation.subject}", where)
        if num_predicates is not None and not 0 <= relation.predicate < num_predicates:
            raise GraphValidationError(f"Predicado fuera de vocabulario: {relation.predicate}", where)
        if not 0.0 <= relation.score <= 1.0:
            raise GraphValidationError(f"Puntuación fuera de [0, 1] en la relación {j}: {relation.score}", where)
    return graph


def edges(graph: SceneGraph) -> List[Tuple[VertexRef, VertexRef]]:
    """Aristas dirigidas (origen, destino) implícitas en el grafo"""
    result = []
    for j, relation in enumerate(graph.relations):
        rel = VertexRef(VertexKind.RELATION, j)
        result.append((VertexRef(VertexKind.OBJECT, relation.subject), rel))
        result.append((rel, VertexRef(VertexKind.OBJECT, relation.object)))
    return result


def graph_from_edges(
    objects: Sequence[ObjectVertex],
    relations: Sequence[Tuple[int, np.ndarray, float]],
    edge_list: Iterable[Tuple[VertexRef, VertexRef]],
    feature_dim: int,
    allow_self_loops: bool = False
) -> SceneGraph:
    """
    Construye un grafo a partir de aristas explícitas

    Args:
        objects: Vértices de objeto
        relations: Tuplas (predicado, características, puntuación) por relación
        edge_list: Aristas dirigidas (origen, destino)
        feature_dim: Dimensión k

    Returns:
        Grafo validado

    Raises:
        GraphValidationError: Si una arista no une objeto con relación, o si
            una relación no tiene exactamente una arista entrante y una saliente
    """
    incoming: Dict[int, List[int]] = {j: [] for j in range(len(relations))}
    outgoing: Dict[int, List[int]] = {j: [] for j in range(len(relations))}
    for source, target in edge_list:
        if source.kind == target.kind:
            raise GraphValidationError(
                f"La arista {source} -> {target} no une un objeto con una relación",
                {"edge": [str(source), str(target)]}
            )
        for ref in (source, target):
            limit = len(objects) if ref.kind == VertexKind.OBJECT else len(relations)
            if not 0 <= ref.index < limit:
                raise GraphValidationError(f"La arista referencia un vértice inexistente: {ref}", {"vertex": str(ref)})
        if source.kind == VertexKind.OBJECT:
            incoming[target.index].append(source.index)
        else:
            outgoing[source.index].append(target.index)

    built = []
    for j, (predicate, feature, score) in enumerate(relations):
        if len(incoming[j]) != 1 or len(outgoing[j]) != 1:
            raise GraphValidationError(
                f"La relación {j} tiene {len(incoming[j])} aristas entrantes y {len(outgoing[j])} salientes",
                {"vertex": f"relation[{j}]"}
            )
        built.append(RelationVertex(predicate, incoming[j][0], outgoing[j][0], feature, score))

    return validate_graph(SceneGraph(tuple(objects), tuple(built), feature_dim), allow_self_loops=allow_self_loops)


def _check_vertex(graph: SceneGraph, vertex: VertexRef) -> None:
    limit = graph.num_objects if vertex.kind == VertexKind.OBJECT else graph.num_relations
    if not 0 <= vertex.index < limit:
        raise UnknownVertexError(vertex)


def incoming_neighbors(graph: SceneGraph, vertex: VertexRef) -> Set[VertexRef]:
    """
    Vecinos conectados por aristas entrantes

    Para un objeto: las relaciones cuyo objeto es este vértice. Para una
    relación: su objeto sujeto.
    """
    _check_vertex(graph, vertex)
    if vertex.kind == VertexKind.RELATION:
        return {VertexRef(VertexKind.OBJECT, graph.relations[vertex.index].subject)}
    return {
        VertexRef(VertexKind.RELATION, j)
        for j, relation in enumerate(graph.relations)
        if relation.object == vertex.index
    }


def object_neighbors(graph: SceneGraph, vertex: VertexRef) -> Set[VertexRef]:
    """Sujetos de todas las relaciones que apuntan a este objeto"""
    _check_vertex(graph, vertex)
    if vertex.kind != VertexKind.OBJECT:
        raise UnknownVertexError(vertex)
    return {
        VertexRef(VertexKind.OBJECT, relation.subject)
        for relation in graph.relations
        if relation.object == vertex.index
    }


def extract_triplets(graph: SceneGraph) -> List[Tuple[Triplet, float]]:
    """Una tripleta por relación, ordenadas por puntuación descendente (estable)"""
    triplets = graph.triplets()
    return [(triplets[j], graph.relations[j].score) for j in extraction_order(graph)]


def extraction_order(graph: SceneGraph) -> List[int]:
    """Índices de relación en el orden de ``extract_triplets``"""
    return sorted(range(graph.num_relations), key=lambda j: (-graph.relations[j].score, j))


def feature_matrix(graph: SceneGraph) -> FeatureMatrix:
    """
    Matriz Y de forma (o+r) x k

    Las filas 0..o-1 son objetos y las filas o..o+r-1 relaciones, ambas en
    orden de índice. ``object_mask`` vale True en las filas de objeto.
    """
    rows = [v.feature for v in graph.objects] + [r.feature for r in graph.relations]
    values = np.stack(rows) if rows else np.zeros((0, graph.feature_dim))
    object_mask = np.zeros(graph.num_vertices, dtype=bool)
    object_mask[: graph.num_objects] = True
    return FeatureMatrix(Tensor(values), object_mask)


def graph_to_document(graph: SceneGraph, objects: Vocabulary, predicates: Vocabulary) -> GraphDocument:
    return GraphDocument(
        objects=[ObjectEntry(label=objects.token(v.label), feature=v.feature.tolist()) for v in graph.objects],
        relations=[
            RelationEntry(
                predicate=predicates.token(r.predicate),
                subject=r.subject,
                object=r.object,
                score=r.score,
                feature=r.feature.tolist()
            )
            for r in graph.relations
        ]
    )


def graph_from_document(
    document: GraphDocument,
    objects: Vocabulary,
    predicates: Vocabulary,
    feature_dim: int,
    allow_self_loops: bool = False
) -> SceneGraph:
    """
    Convierte un documento JSON en un grafo validado

    Raises:
        GraphValidationError: Etiquetas desconocidas o estructura inválida
    """
    object_ids = []
    for entry in document.objects:
        if entry.label not in objects:
            raise GraphValidationError(f"Etiqueta de objeto desconocida: {entry.label}", {"label": entry.label})
        object_ids.append(objects.index(entry.label))
    predicate_ids = []
    for entry in document.relations:
        if entry.predicate not in predicates:
            raise GraphValidationError(f"Predicado desconocido: {entry.predicate}", {"predicate": entry.predicate})
        predicate_ids.append(predicates.index(entry.predicate))

    graph = SceneGraph(
        tuple(ObjectVertex(label, e.feature) for label, e in zip(object_ids, document.objects)),
        tuple(
            RelationVertex(p, e.subject, e.object, e.feature, e.score)
            for p, e in zip(predicate_ids, document.relations)
        ),
        feature_dim
    )
    return validate_graph(graph, len(objects), len(predicates), allow_self_loops)
