"""
Generador de corpus sintéticos: grafos de referencia, características de
objetos, captions de plantilla y grafos "predichos" con ruido controlado.

Plantilla de caption: "a <sujeto> <predicado> a <objeto> ." por relación, en
orden de índice de relación. Cada escena usa una semilla hija propia de
``numpy.random.SeedSequence``.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from app.core.exceptions import ConfigurationError
from app.core.logging import LogManager
from app.schemas.config import CorpusConfig
from app.services.scene_graph import (
    ObjectVertex,
    RelationVertex,
    SceneGraph,
    Triplet,
    validate_graph,
)
from app.services.vocabulary import ARTICLE, PERIOD, CaptionVocabulary, Vocabulary

logger = LogManager.get_logger(__name__)

OBJECT_NAMES = (
    "man", "woman", "dog", "cat", "horse", "hat", "table", "chair", "car", "tree",
    "ball", "boy", "girl", "bike", "cup", "plate", "shirt", "bench", "kite", "boat",
    "bird", "book", "lamp", "door", "window", "clock", "phone", "bag", "train", "bus",
    "sign", "fence", "shoe", "bowl", "pizza", "cake", "glass", "bed", "sofa", "road",
)
PREDICATE_NAMES = (
    "rides", "wears", "holds", "near", "on", "under", "behind", "eats", "watches", "carries",
    "above", "beside", "pulls", "pushes", "touches", "covers", "follows", "throws", "uses", "faces",
)

SPLITS = ("train", "val", "test")

TupleSets = Tuple[Set[str], Set[Tuple[str, str, str]]]


def _names(base: Sequence[str], count: int, prefix: str) -> List[str]:
    return [base[i] if i < len(base) else f"{prefix}{i}" for i in range(count)]


def build_vocabularies(config: CorpusConfig) -> Tuple[Vocabulary, Vocabulary]:
    """Vocabularios de objetos y predicados del tamaño configurado"""
    return (
        Vocabulary(_names(OBJECT_NAMES, config.num_object_labels, "object")),
        Vocabulary(_names(PREDICATE_NAMES, config.num_predicates, "predicate")),
    )


@dataclass
class FeatureBank:
    """Embeddings fijos por etiqueta y predicado, más el ruido sigma"""

    image_objects: np.ndarray
    graph_objects: np.ndarray
    predicates: np.ndarray
    noise: float

    @classmethod
    def create(cls, config: CorpusConfig, rng: np.random.Generator) -> "FeatureBank":
        return cls(
            rng.normal(size=(config.num_object_labels, config.image_feature_dim)),
            rng.normal(size=(config.num_object_labels, config.graph_feature_dim)),
            rng.normal(size=(config.num_predicates, config.graph_feature_dim)),
            config.feature_noise,
        )

    def _noisy(self, row: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.noise == 0.0:
            return row.copy()
        return row + self.noise * rng.normal(size=row.shape)

    def image_feature(self, label: int, rng: np.random.Generator) -> np.ndarray:
        return self._noisy(self.image_objects[label], rng)

    def object_feature(self, label: int, rng: np.random.Generator) -> np.ndarray:
        return self._noisy(self.graph_objects[label], rng)

    def predicate_feature(self, predicate: int, rng: np.random.Generator) -> np.ndarray:
        return self._noisy(self.predicates[predicate], rng)


@dataclass
class Scene:
    scene_id: int
    split: str
    corruption_rate: float
    gold: SceneGraph
    predicted: SceneGraph
    features: np.ndarray
    feature_mask: np.ndarray
    captions: List[List[str]]


@dataclass
class SyntheticCorpus:
    config: CorpusConfig
    objects: Vocabulary
    predicates: Vocabulary
    scenes: List[Scene] = field(default_factory=list)

    @property
    def caption_vocab(self) -> CaptionVocabulary:
        return CaptionVocabulary(self.objects, self.predicates)

    def split(self, name: str) -> List[Scene]:
        """Escenas de una partición"""
        if name not in SPLITS:
            raise ConfigurationError(f"Partición desconocida: {name}", {"valid": list(SPLITS)})
        return [s for s in self.scenes if s.split == name]

    def gold_tuples(self, scene: Scene) -> TupleSets:
        return tuples_from_caption(scene.captions[0], self.objects, self.predicates)


def render_caption(graph: SceneGraph, objects: Vocabulary, predicates: Vocabulary) -> List[str]:
    """Caption de plantilla: una frase por relación, en orden de índice"""
    tokens: List[str] = []
    for triplet in graph.triplets():
        tokens += [
            ARTICLE, objects.token(triplet.subject), predicates.token(triplet.predicate),
            ARTICLE, objects.token(triplet.object), PERIOD,
        ]
    return tokens


def tuples_from_caption(tokens: Sequence[str], objects: Vocabulary, predicates: Vocabulary) -> TupleSets:
    """
    Inverso de la plantilla

    Cada frase (separada por ".") se lee como el prefijo más largo válido de
    "a S P a O": aporta S si llega a la etiqueta de sujeto, O si llega a la de
    objeto, y la tripleta solo si la frase está completa. Una frase que no
    empieza por un prefijo válido no aporta nada.

    Args:
        tokens: Palabras de la caption
        objects: Vocabulario de objetos
        predicates: Vocabulario de predicados

    Returns:
        Tupla (conjunto de objetos, conjunto de tripletas)
    """
    found_objects: Set[str] = set()
    found_triplets: Set[Tuple[str, str, str]] = set()

    sentence: List[str] = []
    for token in list(tokens) + [PERIOD]:
        if token != PERIOD:
            sentence.append(token)
            continue
        if len(sentence) >= 2 and sentence[0] == ARTICLE and sentence[1] in objects:
            subject = sentence[1]
            found_objects.add(subject)
            if (
                len(sentence) >= 5
                and sentence[2] in predicates
                and sentence[3] == ARTICLE
                and sentence[4] in objects
            ):
                found_objects.add(sentence[4])
                found_triplets.add((subject, sentence[2], sentence[4]))
        sentence = []
    return found_objects, found_triplets


def triplet_names(triplet: Triplet, objects: Vocabulary, predicates: Vocabulary) -> Tuple[str, str, str]:
    return objects.token(triplet.subject), predicates.token(triplet.predicate), objects.token(triplet.object)


def corrupt_graph(
    gold: SceneGraph,
    rate: float,
    seed: Union[int, np.random.Generator],
    bank: FeatureBank,
    allow_self_loops: bool = False
) -> SceneGraph:
    """
    Grafo "predicho" con ruido estructural y puntuaciones

    Con probabilidad ``rate`` cada relación sufre una corrupción elegida
    uniformemente: se elimina, se cambia su predicado, o se cambia la etiqueta
    de su sujeto u objeto (añadiendo un vértice de objeto nuevo con la
    etiqueta nueva). Las relaciones intactas puntúan U(0.5, 1) y las
    corrompidas U(0, 0.5). Los vértices sin cambios conservan sus
    características.

    Args:
        gold: Grafo de referencia
        rate: Probabilidad p en [0, 1]
        seed: Semilla o generador
        bank: Embeddings para los vértices nuevos

    Returns:
        Grafo predicho validado
    """
    if not 0.0 <= rate <= 1.0:
        raise ConfigurationError(f"Tasa de corrupción fuera de [0, 1]: {rate}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    num_labels, num_predicates = bank.graph_objects.shape[0], bank.predicates.shape[0]

    objects = list(gold.objects)
    relations: List[RelationVertex] = []
    for relation in gold.relations:
        if rng.random() >= rate:
            relations.append(
                RelationVertex(relation.predicate, relation.subject, relation.object, relation.feature,
                               float(rng.uniform(0.5, 1.0)))
            )
            continue

        kind = int(rng.integers(3))
        if kind == 1 and num_predicates > 1:
            predicate = int((relation.predicate + rng.integers(1, num_predicates)) % num_predicates)
            relations.append(
                RelationVertex(predicate, relation.subject, relation.object,
                               bank.predicate_feature(predicate, rng), float(rng.uniform(0.0, 0.5)))
            )
        elif kind == 2 and num_labels > 1:
            swap_subject = bool(rng.integers(2))
            target = relation.subject if swap_subject else relation.object
            label = int((gold.objects[target].label + rng.integers(1, num_labels)) % num_labels)
            objects.append(ObjectVertex(label, bank.object_feature(label, rng)))
            new_index = len(objects) - 1
            subject = new_index if swap_subject else relation.subject
            obj = relation.object if swap_subject else new_index
            relations.append(
                RelationVertex(relation.predicate, subject, obj, relation.feature, float(rng.uniform(0.0, 0.5)))
            )
        # kind == 0, o sin alternativa posible: la relación se elimina

    predicted = SceneGraph(tuple(objects), tuple(relations), gold.feature_dim)
    return validate_graph(predicted, num_labels, num_predicates, allow_self_loops)


def _covering_pairs(o: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Pares (sujeto, objeto) que tocan cada objeto al menos una vez"""
    order = [int(i) for i in rng.permutation(o)]
    pairs = []
    for a, b in zip(order[0::2], order[1::2]):
        pairs.append((a, b) if rng.integers(2) else (b, a))
    if o % 2:
        last = order[-1]
        if o == 1:
            pairs.append((last, last))
        else:
            partner = order[int(rng.integers(o - 1))]
            pairs.append((last, partner) if rng.integers(2) else (partner, last))
    return pairs


def _gold_graph(
    config: CorpusConfig, bank: FeatureBank, rng: np.random.Generator
) -> SceneGraph:
    """
    Grafo de referencia en el que todo objeto participa en alguna relación

    Primero se eligen relaciones que cubren todos los objetos (un
    emparejamiento aleatorio) y después se completan hasta r con pares
    distintos al azar; el orden final de las relaciones se baraja.
    """
    low, high = config.objects_per_scene
    o = int(rng.integers(low, high + 1))
    labels = rng.choice(config.num_object_labels, size=o, replace=False)
    objects = [ObjectVertex(int(label), bank.object_feature(int(label), rng)) for label in labels]

    covering = _covering_pairs(o, rng)
    pairs = [(i, j) for i in range(o) for j in range(o) if (i != j or config.allow_self_loops)]
    free = [pair for pair in pairs if pair not in covering]
    r_low, r_high = config.relations_per_scene
    r = min(max(int(rng.integers(r_low, r_high + 1)), len(covering)), len(pairs))
    extra = rng.choice(len(free), size=r - len(covering), replace=False) if r > len(covering) else []
    chosen = covering + [free[int(index)] for index in extra]

    relations = []
    for position in rng.permutation(len(chosen)):
        subject, obj = chosen[int(position)]
        predicate = int(rng.integers(config.num_predicates))
        relations.append(RelationVertex(predicate, subject, obj, bank.predicate_feature(predicate, rng), 1.0))
    graph = SceneGraph(tuple(objects), tuple(relations), config.graph_feature_dim)
    return validate_graph(graph, config.num_object_labels, config.num_predicates, config.allow_self_loops)


def mixture_index(config: CorpusConfig, rng: np.random.Generator) -> int:
    """Índice de la tasa de la mezcla: uniforme, o según ``corruption_weights``"""
    size = len(config.corruption_mixture)
    if config.corruption_weights is None:
        return int(rng.integers(size))
    weights = np.asarray(config.corruption_weights, dtype=np.float64)
    return int(rng.choice(size, p=weights / weights.sum()))


def assign_splits(config: CorpusConfig, rng: np.random.Generator) -> List[str]:
    """Partición determinista: test y val primero sobre una permutación, el resto train"""
    n = config.num_scenes
    n_test = int(round(n * config.test_fraction))
    n_val = int(round(n * config.val_fraction))
    order = rng.permutation(n)
    splits = ["train"] * n
    for position, index in enumerate(order):
        if position < n_test:
            splits[index] = "test"
        elif position < n_test + n_val:
            splits[index] = "val"
    return splits


def generate_corpus(config: CorpusConfig) -> SyntheticCorpus:
    """
    Genera un corpus completo de forma determinista a partir de la semilla

    Args:
        config: Configuración del corpus

    Returns:
        Corpus con vocabularios y escenas

    Raises:
        ConfigurationError: Vocabulario demasiado pequeño para los objetos
            distintos pedidos por escena
    """
    if config.num_object_labels < config.objects_per_scene[1]:
        raise ConfigurationError(
            f"El vocabulario de objetos ({config.num_object_labels}) es menor que el máximo de objetos "
            f"distintos por escena ({config.objects_per_scene[1]})",
            {"num_object_labels": config.num_object_labels, "objects_per_scene": list(config.objects_per_scene)}
        )

    objects, predicates = build_vocabularies(config)
    root = np.random.SeedSequence(config.seed)
    bank_seed, split_seed, *scene_seeds = root.spawn(config.num_scenes + 2)
    bank = FeatureBank.create(config, np.random.default_rng(bank_seed))
    splits = assign_splits(config, np.random.default_rng(split_seed))

    corpus = SyntheticCorpus(config, objects, predicates)
    n, d = config.max_objects, config.image_feature_dim
    for scene_id, scene_seed in enumerate(scene_seeds):
        rng = np.random.default_rng(scene_seed)
        gold = _gold_graph(config, bank, rng)

        features = np.zeros((n, d))
        feature_mask = np.zeros(n, dtype=bool)
        for i, vertex in enumerate(gold.objects):
            features[i] = bank.image_feature(vertex.label, rng)
            feature_mask[i] = True

        if config.corruption_mixture:
            rate = float(config.corruption_mixture[mixture_index(config, rng)])
        else:
            rate = config.corruption_rate
        predicted = corrupt_graph(gold, rate, rng, bank, config.allow_self_loops)

        corpus.scenes.append(Scene(
            scene_id, splits[scene_id], rate, gold, predicted, features, feature_mask,
            [render_caption(gold, objects, predicates)]
        ))

    logger.info(
        "Corpus sintético generado",
        extra={
            "scenes": config.num_scenes,
            "seed": config.seed,
            "splits": {name: splits.count(name) for name in SPLITS},
        }
    )
    return corpus
