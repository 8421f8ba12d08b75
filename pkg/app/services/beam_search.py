"""
Decodificación voraz y por haz para un ejemplo con parámetros congelados.
"""

from dataclasses import dataclass, field
from typing import List, Mapping, Tuple

import numpy as np

from app.core.exceptions import ConfigurationError
from app.schemas.config import ModelConfig
from app.services.decoder import CaptionInputs, DecoderState, encode_inputs, log_softmax, step
from app.services.tensor import Tensor
from app.services.vocabulary import END_ID, START_ID


@dataclass
class Hypothesis:
    tokens: Tuple[int, ...] = ()
    log_prob: float = 0.0
    finished: bool = False

    @property
    def length(self) -> int:
        return len(self.tokens)

    def score(self, length_normalize: bool = True) -> float:
        if length_normalize and self.tokens:
            return self.log_prob / len(self.tokens)
        return self.log_prob

    def words(self) -> List[int]:
        """Tokens sin el <end> final"""
        return list(self.tokens[:-1] if self.finished else self.tokens)


@dataclass
class DecodeResult:
    best: Hypothesis
    finished: List[Hypothesis] = field(default_factory=list)
    length_normalize: bool = True

    @property
    def tokens(self) -> List[int]:
        return self.best.words()

    @property
    def sequence(self) -> Tuple[int, ...]:
        return self.best.tokens

    @property
    def score(self) -> float:
        return self.best.score(self.length_normalize)


def _check_single(inputs: CaptionInputs) -> None:
    if inputs.batch_size != 1:
        raise ConfigurationError(f"La decodificación procesa un ejemplo, lote recibido {inputs.batch_size}")


def decode_greedy(
    inputs: CaptionInputs,
    params: Mapping[str, Tensor],
    config: ModelConfig,
    max_len: int = 40,
    length_normalize: bool = True
) -> DecodeResult:
    """
    Decodificación por argmax hasta <end> o ``max_len`` tokens

    Los empates se resuelven a favor del id más bajo.
    """
    _check_single(inputs)
    encoded = encode_inputs(inputs, params, config)
    state = DecoderState.zeros(1, config.hidden_size)
    hyp = Hypothesis()
    prev = START_ID
    for _ in range(max_len):
        state, logits = step([prev], state, encoded, params, config)
        log_probs = log_softmax(logits.value)[0]
        token = int(np.argmax(log_probs))
        hyp = Hypothesis(hyp.tokens + (token,), hyp.log_prob + float(log_probs[token]), token == END_ID)
        if hyp.finished:
            break
        prev = token
    return DecodeResult(hyp, [hyp] if hyp.finished else [], length_normalize)


def decode_greedy_batch(
    inputs: CaptionInputs,
    params: Mapping[str, Tensor],
    config: ModelConfig,
    max_len: int = 40
) -> List[List[int]]:
    """
    Decodificación voraz de un lote completo

    Las filas son independientes; cada una se detiene en su primer <end>.

    Returns:
        Tokens generados por ejemplo, sin el <end> final
    """
    encoded = encode_inputs(inputs, params, config)
    batch = inputs.batch_size
    state = DecoderState.zeros(batch, config.hidden_size)
    prev = np.full(batch, START_ID, dtype=np.int64)
    outputs: List[List[int]] = [[] for _ in range(batch)]
    done = np.zeros(batch, dtype=bool)
    for _ in range(max_len):
        state, logits = step(prev, state, encoded, params, config)
        prev = np.argmax(logits.value, axis=-1)
        for row in np.flatnonzero(~done):
            if prev[row] == END_ID:
                done[row] = True
            else:
                outputs[row].append(int(prev[row]))
        if done.all():
            break
    return outputs


def decode_beam(
    inputs: CaptionInputs,
    params: Mapping[str, Tensor],
    config: ModelConfig,
    beam_width: int = 5,
    max_len: int = 40,
    length_normalize: bool = True
) -> DecodeResult:
    """
    Búsqueda por haz con log-probabilidad normalizada por longitud

    En cada paso se expanden las hipótesis vivas y se conservan las
    ``beam_width`` mejores por log-probabilidad acumulada; las que terminan en
    <end> pasan al conjunto de terminadas. La búsqueda acaba cuando hay
    ``beam_width`` terminadas, no quedan vivas o se generaron ``max_len``
    tokens. La mejor hipótesis, entre las del haz y la voraz, se elige por
    puntuación (normalizada si ``length_normalize``) y, a igualdad, por la
    secuencia de ids menor.

    Args:
        inputs: Entradas de un único ejemplo
        params: Parámetros congelados
        config: Configuración del modelo
        beam_width: Ancho del haz (>= 1)
        max_len: Máximo de tokens generados, contando <end>
        length_normalize: Dividir la log-probabilidad por la longitud

    Returns:
        Resultado con la mejor hipótesis y las terminadas

    Raises:
        ConfigurationError: Ancho o longitud no positivos
    """
    if beam_width < 1 or max_len < 1:
        raise ConfigurationError("beam_width y max_len deben ser >= 1")
    _check_single(inputs)

    encoded = encode_inputs(inputs, params, config)
    alive = [Hypothesis()]
    states = DecoderState.zeros(1, config.hidden_size)
    finished: List[Hypothesis] = []

    for _ in range(max_len):
        rows = encoded.select([0] * len(alive))
        prev = [h.tokens[-1] if h.tokens else START_ID for h in alive]
        states, logits = step(prev, states, rows, params, config)
        log_probs = log_softmax(logits.value)

        candidates = []
        for i, hyp in enumerate(alive):
            for token in range(log_probs.shape[1]):
                candidates.append((hyp.log_prob + float(log_probs[i, token]), hyp.tokens + (token,), i))
        candidates.sort(key=lambda c: (-c[0], c[1]))

        next_alive, parents = [], []
        for log_prob, tokens, parent in candidates[:beam_width]:
            hyp = Hypothesis(tokens, log_prob, tokens[-1] == END_ID)
            if hyp.finished:
                finished.append(hyp)
            else:
                next_alive.append(hyp)
                parents.append(parent)

        alive = next_alive
        if len(finished) >= beam_width or not alive:
            break
        states = states.select(parents)

    # el resultado nunca puntúa por debajo de la decodificación voraz
    pool = finished + alive + [decode_greedy(inputs, params, config, max_len, length_normalize).best]
    best = min(pool, key=lambda h: (-h.score(length_normalize), h.tokens))
    return DecodeResult(best, finished, length_normalize)
