"""
Pruebas de integración de la evaluación y del informe CSV.
"""

import json

import pytest

from app.core.exceptions import ConfigurationError, IncompatibleCheckpointError
from app.schemas.config import EvaluationOptions, Variant
from app.schemas.report import CSV_COLUMNS, ReportRow
from app.services.decoder import init_params
from app.services.evaluation import (
    evaluate_checkpoint,
    evaluate_params,
    read_report,
    recall_k,
    trend_summary,
    write_quality,
    write_report,
)
from app.services.synthetic_scenes import generate_corpus
from app.services.trainer import fit

GREEDY = EvaluationOptions(beam_width=1, max_length=12)


@pytest.fixture
def checkpoint(corpus, model_factory, fast_train_config, tmp_path):
    """Checkpoint de HA-SG+CGAT entrenado dos épocas"""
    return fit(corpus, model_factory(Variant.HA_SG_CGAT), fast_train_config, tmp_path / "run", "hash").checkpoint_path


@pytest.mark.integration
class TestEvaluate:
    """Pruebas de ``evaluate_params`` y ``evaluate_checkpoint``"""

    def test_rows_per_bucket(self, corpus, model_factory):
        """Prueba la fila global y una por cubeta de calidad"""
        config = model_factory(Variant.HA_SG)
        result = evaluate_params(init_params(config, 0), config, corpus, GREEDY, "test", "h", 4)

        assert [row.bucket for row in result.rows] == ["all", "low", "average", "high"]
        assert all(row.graphs == "predicted" and row.model == "HA-SG" and row.seed == 4 for row in result.rows)
        assert result.rows[0].n_scenes == 6
        assert sum(row.n_scenes for row in result.rows[1:]) == 6
        assert len(result.recalls) == 6
        assert result.quality.count == 6
        assert result.quality.k == recall_k(corpus, GREEDY) == 3

    def test_empty_bucket_has_blank_metrics(self, corpus, model_factory):
        """Prueba que una cubeta vacía no tiene métricas"""
        config = model_factory(Variant.HA_SG)
        result = evaluate_params(init_params(config, 0), config, corpus, GREEDY)
        for row in result.rows[1:]:
            if row.n_scenes == 0:
                assert row.bleu4 is None and row.spice_rel_f1 is None
            else:
                assert 0.0 <= row.bleu4 <= 1.0

    def test_without_buckets(self, corpus, model_factory):
        """Prueba que --no-buckets deja solo la fila global"""
        config = model_factory(Variant.BUTD)
        options = GREEDY.model_copy(update={"buckets": False})
        result = evaluate_params(init_params(config, 0), config, corpus, options)
        assert [row.bucket for row in result.rows] == ["all"]

    def test_gold_graph_mode(self, corpus, model_factory):
        """Prueba el conjunto paralelo de filas con grafos de referencia"""
        config = model_factory(Variant.HA_SG_GAT)
        options = GREEDY.model_copy(update={"gold_graphs": True})
        result = evaluate_params(init_params(config, 0), config, corpus, options)

        predicted = [row for row in result.rows if row.graphs == "predicted"]
        gold = [row for row in result.rows if row.graphs == "gold"]
        assert len(predicted) == len(gold) == 4
        assert [row.n_scenes for row in predicted] == [row.n_scenes for row in gold]
        assert [row.mean_sgdet_recall for row in predicted] == [row.mean_sgdet_recall for row in gold]

    def test_gold_mode_without_corruption(self, corpus_config, model_factory):
        """Prueba que sin corrupción las filas gold y predicted coinciden"""
        clean = generate_corpus(corpus_config.model_copy(update={"corruption_rate": 0.0}))
        config = model_factory(Variant.HA_SG_CGAT)
        options = EvaluationOptions(beam_width=2, max_length=10, gold_graphs=True)
        rows = evaluate_params(init_params(config, 0), config, clean, options).rows

        predicted = [row.model_dump(exclude={"graphs"}) for row in rows if row.graphs == "predicted"]
        gold = [row.model_dump(exclude={"graphs"}) for row in rows if row.graphs == "gold"]
        assert predicted == gold
        assert rows[0].mean_sgdet_recall == pytest.approx(1.0)

    def test_beam_search_evaluation(self, corpus, model_factory):
        """Prueba la evaluación con búsqueda por haz"""
        config = model_factory(Variant.FA)
        options = EvaluationOptions(beam_width=2, max_length=8, buckets=False)
        (row,) = evaluate_params(init_params(config, 0), config, corpus, options, "val").rows
        assert row.n_scenes == 6

    def test_empty_split(self, corpus_config, model_factory):
        """Prueba el error con una partición sin escenas"""
        corpus = generate_corpus(corpus_config.model_copy(update={"val_fraction": 0.0, "test_fraction": 0.0}))
        config = model_factory()
        with pytest.raises(ConfigurationError):
            evaluate_params(init_params(config, 0), config, corpus, GREEDY, "test")

    def test_checkpoint(self, corpus, checkpoint):
        """Prueba la evaluación de un checkpoint entrenado"""
        result = evaluate_checkpoint(checkpoint, corpus, GREEDY)
        assert result.rows[0].model == "HA-SG+CGAT"
        assert result.rows[0].config_hash == "hash"
        assert result.rows[0].seed == 3

    def test_incompatible_checkpoint(self, corpus_config, checkpoint):
        """Prueba que un corpus con otro vocabulario se rechaza"""
        other = generate_corpus(corpus_config.model_copy(update={"num_object_labels": 9}))
        with pytest.raises(IncompatibleCheckpointError) as exc:
            evaluate_checkpoint(checkpoint, other, GREEDY)
        assert exc.value.exit_code == 1

    def test_incompatible_dimensions(self, corpus_config, checkpoint):
        """Prueba que dimensiones de características distintas se rechazan"""
        other = generate_corpus(corpus_config.model_copy(update={"image_feature_dim": 7}))
        with pytest.raises(IncompatibleCheckpointError):
            evaluate_checkpoint(checkpoint, other, GREEDY)


@pytest.mark.integration
class TestReport:
    """Pruebas del informe y del resumen de tendencia"""

    def test_write_and_read(self, corpus, model_factory, tmp_path):
        """Prueba el orden de columnas y las celdas vacías"""
        config = model_factory(Variant.HA_IM)
        result = evaluate_params(init_params(config, 0), config, corpus, GREEDY, config_hash="abc", seed=1)
        path = write_report(result.rows, tmp_path / "out" / "report.csv")

        header = path.read_text().splitlines()[0].split(",")
        assert header == CSV_COLUMNS
        assert header[:5] == ["config_hash", "model", "graphs", "bucket", "seed"]
        assert header[-1] == "n-scenes"

        rows = read_report(path)
        assert len(rows) == 4
        assert rows[0]["model"] == "HA-IM" and rows[0]["config_hash"] == "abc"
        for row in rows:
            if row["n-scenes"] == "0":
                assert row["B4"] == ""

    def test_quality_file(self, corpus, model_factory, tmp_path):
        """Prueba el resumen de calidad en JSON"""
        config = model_factory()
        result = evaluate_params(init_params(config, 0), config, corpus, GREEDY)
        document = json.loads(write_quality(result.quality, tmp_path / "quality.json").read_text())
        assert document["count"] == 6
        assert sum(document["buckets"].values()) == 6

    def test_trend_summary(self):
        """Prueba la ventaja media por cubeta frente a BUTD"""
        def row(model, seed, bucket, rel, bleu):
            return ReportRow(config_hash="h", model=model, graphs="predicted", bucket=bucket, seed=seed,
                             spice_rel_f1=rel, bleu4=bleu, n_scenes=3)

        rows = [
            row("BUTD", 0, "low", 0.2, 0.3), row("BUTD", 0, "high", 0.2, 0.3),
            row("BUTD", 1, "low", 0.2, 0.3), row("BUTD", 1, "high", 0.2, 0.3),
            row("HA-SG+CGAT", 0, "low", 0.1, 0.25), row("HA-SG+CGAT", 0, "high", 0.4, 0.4),
            row("HA-SG+CGAT", 1, "low", 0.3, 0.35), row("HA-SG+CGAT", 1, "high", 0.5, 0.5),
        ]
        summary = trend_summary(rows)
        entry = summary["HA-SG+CGAT"]
        assert list(summary) == ["HA-SG+CGAT"]
        assert entry["low"]["spice_rel_f1_delta"] == pytest.approx(0.0)
        assert entry["high"]["spice_rel_f1_delta"] == pytest.approx(0.25)
        assert entry["high"]["bleu4_delta"] == pytest.approx(0.15)
        assert entry["high"]["seeds"] == 2
        assert entry["advantage_grows"] is True

    def test_trend_summary_missing_bucket(self):
        """Prueba que sin cubeta high la tendencia queda indefinida"""
        rows = [
            ReportRow(config_hash="h", model="BUTD", graphs="predicted", bucket="low", seed=0, bleu4=0.1,
                      spice_rel_f1=0.1, n_scenes=2),
            ReportRow(config_hash="h", model="FA", graphs="predicted", bucket="low", seed=0, bleu4=0.2,
                      spice_rel_f1=0.2, n_scenes=2),
        ]
        entry = trend_summary(rows)["FA"]
        assert entry["high"]["seeds"] == 0
        assert entry["advantage_grows"] is None
