"""
Pruebas unitarias de la persistencia del corpus.
"""

import json

import numpy as np
import pytest

from app.core.exceptions import CorpusError, OutputExistsError
from app.services.corpus_store import (
    MANIFEST,
    OBJECTS_FILE,
    SCENES_DIR,
    load_corpus,
    prepare_output_dir,
    read_manifest,
    write_corpus,
)


@pytest.mark.unit
class TestCorpusStore:
    """Pruebas de escritura y lectura del corpus"""

    def test_write_and_load(self, corpus, tmp_path):
        """Prueba que grafos, características y captions sobreviven al disco"""
        out = tmp_path / "corpus"
        manifest = write_corpus(corpus, out, "hash123")
        assert manifest.num_scenes == 24
        assert manifest.splits == {"train": 12, "val": 6, "test": 6}

        loaded = load_corpus(out)
        assert loaded.objects.tokens == corpus.objects.tokens
        for original, restored in zip(corpus.scenes, loaded.scenes):
            assert restored.split == original.split
            assert restored.gold.triplets() == original.gold.triplets()
            assert restored.predicted.triplets() == original.predicted.triplets()
            assert [r.score for r in restored.predicted.relations] == pytest.approx(
                [r.score for r in original.predicted.relations]
            )
            np.testing.assert_allclose(restored.features, original.features)
            assert restored.captions == original.captions

    def test_manifest(self, corpus, tmp_path):
        """Prueba el contenido del manifiesto"""
        write_corpus(corpus, tmp_path / "c", "abc")
        manifest = read_manifest(tmp_path / "c")
        assert manifest.config_hash == "abc"
        assert manifest.seed == corpus.config.seed
        assert json.loads((tmp_path / "c" / MANIFEST).read_text())["format_version"] == 1

    def test_existing_output(self, corpus, tmp_path):
        """Prueba que un directorio no vacío exige --force"""
        out = tmp_path / "corpus"
        write_corpus(corpus, out, "h")
        with pytest.raises(OutputExistsError) as exc:
            write_corpus(corpus, out, "h")
        assert exc.value.exit_code == 1
        write_corpus(corpus, out, "h2", force=True)
        assert read_manifest(out).config_hash == "h2"

    def test_prepare_empty_directory(self, tmp_path):
        """Prueba que un directorio vacío existente es válido"""
        (tmp_path / "empty").mkdir()
        assert prepare_output_dir(tmp_path / "empty").is_dir()

    def test_missing_corpus(self, tmp_path):
        """Prueba el error cuando no hay manifiesto"""
        with pytest.raises(CorpusError) as exc:
            load_corpus(tmp_path / "nothing")
        assert exc.value.error_code == "CORPUS_NOT_FOUND"
        assert exc.value.exit_code == 1

    def test_tampered_vocabulary(self, corpus, tmp_path):
        """Prueba que un vocabulario alterado se detecta"""
        out = tmp_path / "corpus"
        write_corpus(corpus, out, "h")
        tokens = (out / OBJECTS_FILE).read_text().splitlines()
        tokens[0], tokens[1] = tokens[1], tokens[0]
        (out / OBJECTS_FILE).write_text("\n".join(tokens) + "\n")
        with pytest.raises(CorpusError) as exc:
            load_corpus(out)
        assert exc.value.error_code == "VOCAB_MISMATCH"

    def test_missing_scene(self, corpus, tmp_path):
        """Prueba que falte una escena"""
        out = tmp_path / "corpus"
        write_corpus(corpus, out, "h")
        next((out / SCENES_DIR).glob("scene_*.json")).unlink()
        with pytest.raises(CorpusError) as exc:
            load_corpus(out)
        assert exc.value.error_code == "CORPUS_INVALID"

    def test_invalid_scene(self, corpus, tmp_path):
        """Prueba una escena con JSON inválido"""
        out = tmp_path / "corpus"
        write_corpus(corpus, out, "h")
        (out / SCENES_DIR / "scene_00000.json").write_text("{}")
        with pytest.raises(CorpusError):
            load_corpus(out)
