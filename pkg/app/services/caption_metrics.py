"""
Métricas de captions y de calidad del grafo.

- BLEU-n de corpus: conteos recortados, penalización por brevedad con la
  longitud de referencia más cercana y sin suavizado.
- ROUGE-L al estilo del evaluador de MSCOCO (beta = 1.2).
- SPICE sobre tuplas de plantilla: coincidencia exacta con semántica de
  multiconjunto.
- SGDet recall@k con emparejamiento uno a uno en orden de puntuación.
"""

import math
from collections import Counter
from typing import Hashable, Iterable, List, Sequence, Set, Tuple

import numpy as np

from app.core.exceptions import MetricInputError, UndefinedRecallError
from app.schemas.report import QualityBucket, QualitySummary, SpiceBreakdown, SpiceScores
from app.services.scene_graph import SceneGraph, extract_triplets

ROUGE_BETA = 1.2
LOW_THRESHOLD = 1.0 / 3.0
HIGH_THRESHOLD = 2.0 / 3.0

Tokens = Sequence[str]
TupleSets = Tuple[Set[str], Set[Tuple[str, str, str]]]


def _check_corpus(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> None:
    if not candidates:
        raise MetricInputError("La lista de candidatas está vacía")
    if len(candidates) != len(references):
        raise MetricInputError(
            f"Candidatas ({len(candidates)}) y referencias ({len(references)}) tienen longitudes distintas"
        )
    for i, refs in enumerate(references):
        if not refs:
            raise MetricInputError(f"La candidata {i} no tiene referencias", {"index": i})


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]], n: int = 4) -> float:
    """
    BLEU de corpus con pesos uniformes sobre 1..n-gramas

    Args:
        candidates: Captions generadas (tokens)
        references: Lista de referencias por candidata
        n: Orden máximo de n-grama

    Returns:
        Puntuación en [0, 1]; 0 si algún orden no tiene coincidencias

    Raises:
        MetricInputError: Lista vacía o longitudes distintas
    """
    _check_corpus(candidates, references)
    matches = [0] * n
    totals = [0] * n
    cand_length = ref_length = 0

    for candidate, refs in zip(candidates, references):
        cand_length += len(candidate)
        # longitud de referencia más cercana; a igualdad, la más corta
        ref_length += min((abs(len(r) - len(candidate)), len(r)) for r in refs)[1]
        for order in range(1, n + 1):
            counts = _ngrams(candidate, order)
            max_ref: Counter = Counter()
            for ref in refs:
                max_ref |= _ngrams(ref, order)
            matches[order - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[order - 1] += max(len(candidate) - order + 1, 0)

    if cand_length == 0 or any(m == 0 for m in matches):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / n
    brevity = 1.0 if cand_length > ref_length else math.exp(1.0 - ref_length / cand_length)
    return brevity * math.exp(log_precision)


def bleu4(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> float:
    return bleu_n(candidates, references, 4)


def _lcs(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b):
            row.append(prev[j] + 1 if x == y else max(prev[j + 1], row[j]))
        prev = row
    return prev[-1]


def rouge_l_sentence(candidate: Tokens, refs: Sequence[Tokens], beta: float = ROUGE_BETA) -> float:
    """ROUGE-L de una candidata: P y R máximos sobre referencias, luego F_beta"""
    precisions, recalls = [], []
    for ref in refs:
        lcs = _lcs(candidate, ref)
        precisions.append(lcs / len(candidate) if candidate else 0.0)
        recalls.append(lcs / len(ref) if ref else 0.0)
    p, r = max(precisions), max(recalls)
    if p == 0.0 or r == 0.0:
        return 0.0
    return ((1 + beta ** 2) * p * r) / (r + beta ** 2 * p)


def rouge_l(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]], beta: float = ROUGE_BETA) -> float:
    """
    ROUGE-L medio sobre el corpus

    Raises:
        MetricInputError: Lista vacía o longitudes distintas
    """
    _check_corpus(candidates, references)
    return float(np.mean([rouge_l_sentence(c, refs, beta) for c, refs in zip(candidates, references)]))


def _scores(candidate: Iterable[Hashable], reference: Iterable[Hashable]) -> SpiceScores:
    cand, ref = Counter(candidate), Counter(reference)
    matched = sum((cand & ref).values())
    cand_total, ref_total = sum(cand.values()), sum(ref.values())
    precision = matched / cand_total if cand_total else 0.0
    recall = matched / ref_total if ref_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return SpiceScores(precision=precision, recall=recall, f1=f1)


def merge_references(references: Sequence[TupleSets]) -> TupleSets:
    objects: Set[str] = set()
    triplets: Set[Tuple[str, str, str]] = set()
    for ref_objects, ref_triplets in references:
        objects |= set(ref_objects)
        triplets |= set(ref_triplets)
    return objects, triplets


def spice_breakdown(candidate: TupleSets, reference: TupleSets) -> SpiceBreakdown:
    """
    P/R/F1 sobre tuplas de objeto, de relación y sobre su unión

    Args:
        candidate: (objetos, tripletas) de la caption generada
        reference: (objetos, tripletas) de referencia

    Returns:
        Desglose SPICE; una candidata vacía puntúa 0
    """
    cand_objects, cand_triplets = candidate
    ref_objects, ref_triplets = reference
    pooled = lambda objects, triplets: [("object", o) for o in objects] + [("relation", t) for t in triplets]
    return SpiceBreakdown(
        overall=_scores(pooled(cand_objects, cand_triplets), pooled(ref_objects, ref_triplets)),
        object=_scores(cand_objects, ref_objects),
        relation=_scores(cand_triplets, ref_triplets),
    )


def mean_breakdown(breakdowns: Sequence[SpiceBreakdown]) -> SpiceBreakdown:
    """Media por escena de P, R y F1 de cada componente"""
    if not breakdowns:
        raise MetricInputError("No hay escenas para promediar SPICE")

    def average(part: str) -> SpiceScores:
        rows = [getattr(b, part) for b in breakdowns]
        return SpiceScores(
            precision=float(np.mean([r.precision for r in rows])),
            recall=float(np.mean([r.recall for r in rows])),
            f1=float(np.mean([r.f1 for r in rows])),
        )

    return SpiceBreakdown(overall=average("overall"), object=average("object"), relation=average("relation"))


def sgdet_recall_at_k(predicted: SceneGraph, gold: SceneGraph, k: int) -> float:
    """
    Fracción de tripletas de referencia recuperadas entre las k mejor puntuadas

    Cada tripleta predicha, en orden de puntuación, se empareja con a lo sumo
    una tripleta de referencia igual y aún libre.

    Raises:
        UndefinedRecallError: El grafo de referencia no tiene relaciones
        MetricInputError: k < 1
    """
    if k < 1:
        raise MetricInputError(f"k debe ser >= 1, recibido {k}")
    gold_triplets = gold.triplets()
    if not gold_triplets:
        raise UndefinedRecallError()
    unmatched = Counter(gold_triplets)
    matched = 0
    for triplet, _ in extract_triplets(predicted)[:k]:
        if unmatched[triplet] > 0:
            unmatched[triplet] -= 1
            matched += 1
    return matched / len(gold_triplets)


def bucket(recall: float) -> QualityBucket:
    """low si R < 1/3, average si 1/3 <= R < 2/3, high en otro caso"""
    if not 0.0 <= recall <= 1.0:
        raise MetricInputError(f"Recall fuera de [0, 1]: {recall}")
    if recall < LOW_THRESHOLD:
        return QualityBucket.LOW
    if recall < HIGH_THRESHOLD:
        return QualityBucket.AVERAGE
    return QualityBucket.HIGH


def recall_histogram(recalls: Sequence[float], bins: int = 10) -> Tuple[List[float], List[int]]:
    """Histograma de recall con bins fijos sobre [0, 1]"""
    counts, edges = np.histogram(np.asarray(recalls, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return edges.tolist(), counts.astype(int).tolist()


def quality_summary(recalls: Sequence[float], k: int, bins: int = 10) -> QualitySummary:
    """Resumen de la distribución de recall y recuento por cubeta"""
    edges, counts = recall_histogram(recalls, bins)
    buckets = Counter(bucket(r).value for r in recalls)
    return QualitySummary(
        count=len(recalls),
        k=k,
        mean=float(np.mean(recalls)) if recalls else None,
        median=float(np.median(recalls)) if recalls else None,
        buckets={b.value: buckets.get(b.value, 0) for b in QualityBucket},
        histogram_edges=edges,
        histogram_counts=counts,
    )
