"""
Vocabularios de objetos, predicados y captions.

Los archivos de vocabulario tienen un token por línea; el índice es el número
de línea (empezando en 0).
"""

import hashlib
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from app.core.exceptions import ConfigurationError, CorpusError

START, END, PAD, UNK = "<start>", "<end>", "<pad>", "<unk>"
RESERVED_TOKENS = (START, END, PAD, UNK)
START_ID, END_ID, PAD_ID, UNK_ID = range(4)
ARTICLE = "a"
PERIOD = "."


class Vocabulary:
    """Lista ordenada de tokens únicos"""

    def __init__(self, tokens: Iterable[str]):
        self.tokens: List[str] = list(tokens)
        self._index: Dict[str, int] = {}
        for i, token in enumerate(self.tokens):
            if not token or any(c.isspace() for c in token):
                raise ConfigurationError(f"Token inválido en el vocabulario: {token!r}")
            if token in self._index:
                raise ConfigurationError(f"Token duplicado en el vocabulario: {token}")
            self._index[token] = i

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise CorpusError(f"Token fuera de vocabulario: {token}", "UNKNOWN_TOKEN", 1, {"token": token})

    def get(self, token: str, default: Optional[int] = None) -> Optional[int]:
        return self._index.get(token, default)

    def token(self, index: int) -> str:
        return self.tokens[index]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise CorpusError(f"No se pudo leer el vocabulario: {path}", details={"error": str(e)})
        return cls(line for line in lines if line)


class CaptionVocabulary(Vocabulary):
    """
    Vocabulario de captions: ids reservados 0-3, luego "a" y ".", luego las
    etiquetas de objeto y por último los predicados.
    """

    def __init__(self, objects: Vocabulary, predicates: Vocabulary):
        self.objects = objects
        self.predicates = predicates
        super().__init__([*RESERVED_TOKENS, ARTICLE, PERIOD, *objects.tokens, *predicates.tokens])

    def encode(self, words: Sequence[str]) -> List[int]:
        """Palabras -> ids, con <start> y <end> alrededor"""
        return [START_ID, *(self.get(w, UNK_ID) for w in words), END_ID]

    def decode(self, ids: Sequence[int]) -> List[str]:
        """Ids -> palabras, cortando en <end> y omitiendo reservados"""
        words: List[str] = []
        for i in ids:
            if i == END_ID:
                break
            if i >= len(RESERVED_TOKENS):
                words.append(self.tokens[i])
        return words

    def digest(self) -> str:
        return hashlib.sha256(
            ("objects:" + "\n".join(self.objects.tokens) + "|predicates:" + "\n".join(self.predicates.tokens))
            .encode("utf-8")
        ).hexdigest()
