"""
Entrenamiento con teacher forcing, Adamax y parada temprana.

Cada época baraja las parejas (escena, caption) con el generador de la
semilla de entrenamiento, que también produce las máscaras de dropout. La
ejecución completa es reproducible a partir de (corpus, configuración,
semilla).
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from app.core.exceptions import ConfigurationError, DivergenceError
from app.core.logging import LogManager
from app.core.metrics import TrainingMetrics
from app.schemas.config import ModelConfig, TrainConfig
from app.schemas.report import EpochRecord
from app.services.batching import batches, scene_inputs, training_pairs
from app.services.corpus_store import vocab_hash
from app.services.decoder import init_params, make_dropout_masks, sequence_loss
from app.services.evaluation import caption_metric, generate_captions
from app.services.optimizer import PlateauSchedule, adamax_step
from app.services.parameters import ParameterStore
from app.services.synthetic_scenes import Scene, SyntheticCorpus
from app.services.tensor import Tape

logger = LogManager.get_logger(__name__)

CHECKPOINT_FILE = "checkpoint.npz"
LOG_FILE = "train_log.jsonl"


@dataclass
class TrainingResult:
    params: ParameterStore
    history: List[EpochRecord] = field(default_factory=list)
    best_metric: float = 0.0
    best_epoch: int = 0
    checkpoint_path: Optional[Path] = None
    log_path: Optional[Path] = None


def checkpoint_metadata(
    corpus: SyntheticCorpus, model_config: ModelConfig, train_config: TrainConfig, config_hash: str
) -> Dict[str, Any]:
    """Metadatos incrustados en el checkpoint"""
    return {
        "config_hash": config_hash,
        "vocab_hash": vocab_hash(corpus.objects, corpus.predicates),
        "variant": model_config.variant.value,
        "seed": train_config.seed,
        "model": model_config.model_dump(mode="json"),
        "train": train_config.model_dump(mode="json"),
    }


def validation_score(
    params: ParameterStore,
    scenes: Sequence[Scene],
    corpus: SyntheticCorpus,
    model_config: ModelConfig,
    train_config: TrainConfig
) -> float:
    """Métrica de validación sobre captions decodificadas sin dropout"""
    candidates = generate_captions(
        params, scenes, model_config, corpus.caption_vocab,
        beam_width=train_config.val_beam_width, max_len=train_config.max_caption_length,
    )
    return caption_metric(
        train_config.validation_metric, candidates, [scene.captions for scene in scenes], corpus
    )


def fit(
    corpus: SyntheticCorpus,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    config_hash: str = "",
    train_split: str = "train",
    val_split: str = "val"
) -> TrainingResult:
    """
    Entrena un decodificador hasta parada temprana o el máximo de épocas

    Args:
        corpus: Corpus con las particiones de entrenamiento y validación
        model_config: Variante y tamaños del modelo
        train_config: Hiperparámetros de entrenamiento
        out_dir: Directorio para checkpoint, log y métricas (None = solo memoria)
        config_hash: Hash de la configuración a incrustar en los artefactos
        train_split: Partición de entrenamiento
        val_split: Partición de validación

    Returns:
        Resultado con los mejores parámetros y el historial por época

    Raises:
        ConfigurationError: Partición vacía o vocabulario incompatible
        DivergenceError: Pérdida no finita
    """
    vocab = corpus.caption_vocab
    if len(vocab) != model_config.vocab_size:
        raise ConfigurationError(
            f"vocab_size={model_config.vocab_size} no coincide con el vocabulario del corpus ({len(vocab)})"
        )
    train_scenes, val_scenes = corpus.split(train_split), corpus.split(val_split)
    if not train_scenes or not val_scenes:
        raise ConfigurationError(
            f"Las particiones '{train_split}' y '{val_split}' deben tener escenas",
            {"train": len(train_scenes), "val": len(val_scenes)}
        )

    variant = model_config.variant.value
    seed = train_config.seed
    rng = np.random.default_rng(seed)
    params = init_params(model_config, seed)
    schedule = PlateauSchedule.from_config(train_config)
    pairs = training_pairs(train_scenes, vocab)
    metrics = TrainingMetrics(variant, seed)
    metadata = checkpoint_metadata(corpus, model_config, train_config, config_hash)

    out_path = Path(out_dir) if out_dir is not None else None
    log_path = checkpoint_path = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_path = out_path / LOG_FILE
        log_path.write_text("", encoding="utf-8")

    result = TrainingResult(params.copy(), log_path=log_path)
    logger.info(
        "Entrenamiento iniciado",
        extra={"variant": variant, "seed": seed, "pairs": len(pairs), "parameters": params.size()}
    )

    while True:
        started = time.perf_counter()
        epoch = schedule.epoch + 1
        lr = schedule.learning_rate
        losses = []
        for step_index, batch in enumerate(batches(rng.permutation(len(pairs)), train_config.batch_size)):
            scenes = [pairs[i][0] for i in batch]
            captions = [pairs[i][1] for i in batch]
            masks = make_dropout_masks(rng, max(len(c) for c in captions) - 1, len(batch), model_config)
            with Tape() as tape:
                loss = sequence_loss(
                    captions, scene_inputs(scenes, model_config), tape.watch_all(params.values()),
                    model_config, masks
                )
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(epoch, step_index, value)
            adamax_step(params, tape.backward(loss), lr, train_config.beta1, train_config.beta2, train_config.epsilon)
            metrics.track_step()
            losses.append(value)

        val_metric = validation_score(params, val_scenes, corpus, model_config, train_config)
        improved = schedule.update(val_metric)
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_metric=val_metric,
            lr=lr,
            best=improved,
            stagnant_epochs=schedule.stagnant_epochs,
            config_hash=config_hash,
            variant=variant,
            seed=seed,
        )
        result.history.append(record)
        metrics.track_epoch(record.train_loss, val_metric, lr, time.perf_counter() - started)
        logger.info("Época completada", extra=record.model_dump())

        if improved:
            result.params = params.copy()
            result.best_metric, result.best_epoch = val_metric, epoch
            if out_path is not None:
                checkpoint_path = result.params.save(
                    out_path / CHECKPOINT_FILE, {**metadata, "epoch": epoch, "val_metric": val_metric}
                )
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.model_dump(), sort_keys=True) + "\n")
        if schedule.should_stop:
            break

    result.checkpoint_path = checkpoint_path
    if out_path is not None:
        metrics.write(out_path)
    logger.info(
        "Entrenamiento terminado",
        extra={"variant": variant, "epochs": schedule.epoch, "best_epoch": result.best_epoch,
               "best_metric": result.best_metric}
    )
    return result
