"""
Evaluación de un checkpoint sobre una partición del corpus.

El informe tiene una fila global y, opcionalmente, una fila por cubeta de
calidad del grafo (low/average/high según SGDet recall@k). En modo de grafos
de referencia se añade un conjunto paralelo de filas decodificadas con el
grafo gold en lugar del predicho; el recall y las cubetas siempre se miden
sobre el grafo predicho.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import ConfigurationError, IncompatibleCheckpointError
from app.core.logging import LogManager
from app.schemas.config import EvaluationOptions, ModelConfig
from app.schemas.report import CSV_COLUMNS, QualityBucket, QualitySummary, ReportRow, SpiceBreakdown
from app.services.batching import batches, scene_inputs
from app.services.beam_search import decode_beam, decode_greedy_batch
from app.services.caption_metrics import (
    bleu_n,
    bucket,
    mean_breakdown,
    merge_references,
    quality_summary,
    rouge_l,
    sgdet_recall_at_k,
    spice_breakdown,
)
from app.services.corpus_store import vocab_hash
from app.services.decoder import as_constants
from app.services.parameters import ParameterStore
from app.services.synthetic_scenes import Scene, SyntheticCorpus, tuples_from_caption
from app.services.vocabulary import CaptionVocabulary

logger = LogManager.get_logger(__name__)

REPORT_FILE = "report.csv"
QUALITY_FILE = "quality.json"
GREEDY_BATCH = 64


@dataclass
class EvaluationResult:
    rows: List[ReportRow] = field(default_factory=list)
    quality: Optional[QualitySummary] = None
    recalls: List[float] = field(default_factory=list)


def generate_captions(
    params: ParameterStore,
    scenes: Sequence[Scene],
    config: ModelConfig,
    vocab: CaptionVocabulary,
    beam_width: int = 5,
    max_len: int = 40,
    length_normalize: bool = True,
    gold_graphs: bool = False
) -> List[List[str]]:
    """
    Decodifica una caption por escena con parámetros congelados

    Con ``beam_width == 1`` usa decodificación voraz por lotes; en otro caso,
    búsqueda por haz escena a escena.

    Returns:
        Palabras de cada caption generada
    """
    frozen = as_constants(params)
    if beam_width == 1:
        ids: List[List[int]] = []
        for chunk in batches(np.arange(len(scenes)), GREEDY_BATCH):
            inputs = scene_inputs([scenes[i] for i in chunk], config, gold_graphs)
            ids.extend(decode_greedy_batch(inputs, frozen, config, max_len))
    else:
        ids = [
            decode_beam(scene_inputs([scene], config, gold_graphs), frozen, config,
                        beam_width, max_len, length_normalize).tokens
            for scene in scenes
        ]
    return [vocab.decode(tokens) for tokens in ids]


def scene_breakdowns(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[Sequence[str]]],
    corpus: SyntheticCorpus
) -> List[SpiceBreakdown]:
    """Desglose SPICE por escena sobre las tuplas de plantilla"""
    read = lambda tokens: tuples_from_caption(tokens, corpus.objects, corpus.predicates)
    return [
        spice_breakdown(read(candidate), merge_references([read(ref) for ref in refs]))
        for candidate, refs in zip(candidates, references)
    ]


def caption_metric(
    name: str,
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[Sequence[str]]],
    corpus: SyntheticCorpus
) -> float:
    """Métrica de corpus por nombre: bleu4, rouge_l o spice_f1"""
    if name == "bleu4":
        return bleu_n(candidates, references, 4)
    if name == "rouge_l":
        return rouge_l(candidates, references)
    if name == "spice_f1":
        return mean_breakdown(scene_breakdowns(candidates, references, corpus)).overall.f1
    raise ConfigurationError(f"Métrica de validación desconocida: {name}")


def recall_k(corpus: SyntheticCorpus, options: EvaluationOptions) -> int:
    """k configurado o min(100, máximo de relaciones por escena)"""
    return options.recall_k or min(100, corpus.config.relations_per_scene[1])


def check_compatible(metadata: Dict, corpus: SyntheticCorpus) -> ModelConfig:
    """
    Verifica que el checkpoint corresponde al corpus

    Raises:
        IncompatibleCheckpointError: Hash de vocabulario o dimensiones distintas
    """
    expected = vocab_hash(corpus.objects, corpus.predicates)
    if metadata.get("vocab_hash") != expected:
        raise IncompatibleCheckpointError(
            "El vocabulario del checkpoint no coincide con el del corpus",
            {"checkpoint": metadata.get("vocab_hash"), "corpus": expected}
        )
    try:
        config = ModelConfig.model_validate(metadata["model"])
    except (KeyError, ValueError) as e:
        raise IncompatibleCheckpointError(f"Metadatos de modelo inválidos en el checkpoint: {e}")
    dims = (corpus.config.image_feature_dim, corpus.config.graph_feature_dim)
    if (config.image_feature_dim, config.graph_feature_dim) != dims:
        raise IncompatibleCheckpointError(
            "Las dimensiones de características del checkpoint no coinciden con el corpus",
            {"checkpoint": [config.image_feature_dim, config.graph_feature_dim], "corpus": list(dims)}
        )
    return config


def _report_row(
    indices: Sequence[int],
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[Sequence[str]]],
    breakdowns: Sequence[SpiceBreakdown],
    recalls: Sequence[float],
    **labels
) -> ReportRow:
    if not indices:
        return ReportRow(**labels, n_scenes=0)
    cand = [candidates[i] for i in indices]
    refs = [references[i] for i in indices]
    spice = mean_breakdown([breakdowns[i] for i in indices])
    return ReportRow(
        **labels,
        bleu1=bleu_n(cand, refs, 1),
        bleu2=bleu_n(cand, refs, 2),
        bleu3=bleu_n(cand, refs, 3),
        bleu4=bleu_n(cand, refs, 4),
        rouge_l=rouge_l(cand, refs),
        spice_all_f1=spice.overall.f1,
        spice_all_p=spice.overall.precision,
        spice_all_r=spice.overall.recall,
        spice_obj_f1=spice.object.f1,
        spice_obj_p=spice.object.precision,
        spice_obj_r=spice.object.recall,
        spice_rel_f1=spice.relation.f1,
        spice_rel_p=spice.relation.precision,
        spice_rel_r=spice.relation.recall,
        mean_sgdet_recall=float(np.mean([recalls[i] for i in indices])),
        n_scenes=len(indices),
    )


def evaluate_params(
    params: ParameterStore,
    config: ModelConfig,
    corpus: SyntheticCorpus,
    options: EvaluationOptions,
    split: str = "test",
    config_hash: str = "",
    seed: Optional[int] = None
) -> EvaluationResult:
    """
    Genera las filas del informe para unos parámetros ya cargados

    Args:
        params: Parámetros del modelo
        config: Configuración del modelo
        corpus: Corpus de evaluación
        options: Opciones de evaluación
        split: Partición evaluada
        config_hash: Hash a incrustar en cada fila
        seed: Semilla de entrenamiento del modelo

    Returns:
        Filas del informe y resumen de calidad de los grafos

    Raises:
        ConfigurationError: Partición vacía
    """
    scenes = corpus.split(split)
    if not scenes:
        raise ConfigurationError(f"La partición '{split}' no tiene escenas")

    k = recall_k(corpus, options)
    recalls = [sgdet_recall_at_k(scene.predicted, scene.gold, k) for scene in scenes]
    scene_buckets = [bucket(r) for r in recalls]
    references = [scene.captions for scene in scenes]

    modes = [("predicted", False)] + ([("gold", True)] if options.gold_graphs else [])
    result = EvaluationResult(recalls=recalls, quality=quality_summary(recalls, k, options.histogram_bins))
    for mode, gold in modes:
        candidates = generate_captions(
            params, scenes, config, corpus.caption_vocab,
            options.beam_width, options.max_length, options.length_normalize, gold,
        )
        breakdowns = scene_breakdowns(candidates, references, corpus)
        labels = dict(config_hash=config_hash, model=config.variant.value, graphs=mode, seed=seed)

        groups: List[Tuple[str, List[int]]] = [("all", list(range(len(scenes))))]
        if options.buckets:
            groups += [(b.value, [i for i, sb in enumerate(scene_buckets) if sb is b]) for b in QualityBucket]
        for name, indices in groups:
            result.rows.append(_report_row(indices, candidates, references, breakdowns, recalls, bucket=name, **labels))

    logger.info(
        "Evaluación completada",
        extra={"variant": config.variant.value, "split": split, "scenes": len(scenes), "rows": len(result.rows)}
    )
    return result


def evaluate_checkpoint(
    checkpoint: Union[str, Path],
    corpus: SyntheticCorpus,
    options: EvaluationOptions,
    split: str = "test",
    config_hash: Optional[str] = None
) -> EvaluationResult:
    """
    Carga un checkpoint, comprueba la compatibilidad y lo evalúa

    Raises:
        CheckpointError: Checkpoint ilegible
        IncompatibleCheckpointError: Checkpoint de otro corpus
    """
    params, metadata = ParameterStore.load(checkpoint)
    config = check_compatible(metadata, corpus)
    return evaluate_params(
        params, config, corpus, options, split,
        config_hash if config_hash is not None else metadata.get("config_hash", ""),
        metadata.get("seed"),
    )


def trend_summary(rows: Sequence[ReportRow], baseline: str = "BUTD") -> Dict[str, Dict]:
    """
    Ventaja media de cada variante sobre la línea base en las cubetas low y high

    Las diferencias se calculan por semilla (filas con grafos predichos) y se
    promedian; una cubeta vacía en alguna semilla no aporta a la media.

    Returns:
        Mapa variante -> {low, high, advantage_grows}
    """
    table = {
        (row.model, row.seed, row.bucket): row
        for row in rows if row.graphs == "predicted"
    }
    variants = sorted({row.model for row in rows if row.model != baseline})
    seeds = sorted({row.seed for row in rows if row.model == baseline}, key=lambda s: -1 if s is None else s)

    summary: Dict[str, Dict] = {}
    for variant in variants:
        entry: Dict = {}
        for name in (QualityBucket.LOW.value, QualityBucket.HIGH.value):
            rel, bleu = [], []
            for seed in seeds:
                base, row = table.get((baseline, seed, name)), table.get((variant, seed, name))
                if base is None or row is None or not base.n_scenes or not row.n_scenes:
                    continue
                rel.append(row.spice_rel_f1 - base.spice_rel_f1)
                bleu.append(row.bleu4 - base.bleu4)
            entry[name] = {
                "spice_rel_f1_delta": float(np.mean(rel)) if rel else None,
                "bleu4_delta": float(np.mean(bleu)) if bleu else None,
                "seeds": len(rel),
            }
        low, high = entry["low"], entry["high"]
        entry["advantage_grows"] = (
            None if low["seeds"] == 0 or high["seeds"] == 0
            else high["spice_rel_f1_delta"] > low["spice_rel_f1_delta"] and high["bleu4_delta"] > low["bleu4_delta"]
        )
        summary[variant] = entry
    return summary


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_report(rows: Sequence[ReportRow], path: Union[str, Path]) -> Path:
    """Escribe las filas con el orden de columnas estable de ``CSV_COLUMNS``"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(value) for key, value in row.model_dump(by_alias=True).items()})
    return path


def read_report(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_quality(summary: QualitySummary, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary.model_dump(), indent=2, sort_keys=True), encoding="utf-8")
    return path
