"""
Pruebas unitarias de los vocabularios.
"""

import pytest

from app.core.exceptions import ConfigurationError, CorpusError
from app.services.vocabulary import (
    END_ID,
    PAD_ID,
    START_ID,
    UNK_ID,
    CaptionVocabulary,
    Vocabulary,
)


@pytest.fixture
def caption_vocab() -> CaptionVocabulary:
    return CaptionVocabulary(Vocabulary(["man", "horse", "dog"]), Vocabulary(["rides", "near"]))


@pytest.mark.unit
class TestVocabulary:
    """Pruebas del vocabulario simple"""

    def test_index_and_token(self):
        """Prueba la correspondencia token <-> índice"""
        vocab = Vocabulary(["man", "horse"])
        assert vocab.index("horse") == 1
        assert vocab.token(0) == "man"
        assert "dog" not in vocab

    def test_unknown_token(self):
        """Prueba el error ante un token fuera de vocabulario"""
        with pytest.raises(CorpusError) as exc:
            Vocabulary(["man"]).index("dog")
        assert exc.value.error_code == "UNKNOWN_TOKEN"

    @pytest.mark.parametrize("tokens", [["man", "man"], ["two words"], [""]])
    def test_invalid_tokens(self, tokens):
        """Prueba que se rechazan duplicados, espacios y tokens vacíos"""
        with pytest.raises(ConfigurationError):
            Vocabulary(tokens)

    def test_save_and_load(self, tmp_path):
        """Prueba el formato de un token por línea"""
        path = tmp_path / "objects.txt"
        Vocabulary(["man", "horse"]).save(path)
        assert path.read_text() == "man\nhorse\n"
        assert Vocabulary.load(path).tokens == ["man", "horse"]

    def test_load_missing_file(self, tmp_path):
        """Prueba el error al leer un archivo inexistente"""
        with pytest.raises(CorpusError):
            Vocabulary.load(tmp_path / "missing.txt")


@pytest.mark.unit
class TestCaptionVocabulary:
    """Pruebas del vocabulario de captions"""

    def test_layout(self, caption_vocab):
        """Prueba los ids reservados y el orden de los tokens"""
        assert (START_ID, END_ID, PAD_ID, UNK_ID) == (0, 1, 2, 3)
        assert caption_vocab.tokens[4:6] == ["a", "."]
        assert caption_vocab.tokens[6:9] == ["man", "horse", "dog"]
        assert caption_vocab.tokens[9:] == ["rides", "near"]
        assert len(caption_vocab) == 11

    def test_encode_decode(self, caption_vocab):
        """Prueba la codificación con marcadores y la decodificación"""
        ids = caption_vocab.encode(["a", "man", "rides", "a", "zebra", "."])
        assert ids[0] == START_ID and ids[-1] == END_ID
        assert ids[5] == UNK_ID
        assert caption_vocab.decode(ids + [caption_vocab.index("dog")]) == ["a", "man", "rides", "a", "."]

    def test_digest_depends_on_labels(self, caption_vocab):
        """Prueba que el hash cambia con los vocabularios"""
        other = CaptionVocabulary(Vocabulary(["man", "horse", "cat"]), Vocabulary(["rides", "near"]))
        assert caption_vocab.digest() != other.digest()
        same = CaptionVocabulary(Vocabulary(["man", "horse", "dog"]), Vocabulary(["rides", "near"]))
        assert caption_vocab.digest() == same.digest()
