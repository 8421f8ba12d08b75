"""
Núcleo de diferenciación automática en modo inverso.

Un ``Tensor`` envuelve un arreglo ``numpy.float64`` y, opcionalmente, el
identificador de nodo que le asignó la ``Tape`` activa. Cada primitiva vive en
el registro ``PRIMITIVES`` como un objeto con ``forward`` y ``vjp``; la cinta
guarda el tipo de operación y consulta el registro en el momento del
``backward``.

Las formas deben coincidir exactamente: no hay broadcasting implícito.
"""

from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import AutodiffError, MaskedRowError, ShapeMismatchError

ArrayLike = Any


class Tensor:
    """Arreglo denso de 64 bits con un nodo opcional en la cinta activa"""

    __slots__ = ("value", "node")

    def __init__(self, value: ArrayLike, node: Optional[int] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.node = node

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, node={self.node})"


def constant(value: ArrayLike) -> Tensor:
    """Tensor sin nodo: no participa en el gradiente"""
    return Tensor(value)


@dataclass
class TapeEntry:
    kind: str
    inputs: Tuple[Optional[int], ...]
    output: int
    saved: Dict[str, Any] = field(default_factory=dict)


_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)


def current_tape() -> Optional["Tape"]:
    return _active_tape.get()


class Tape:
    """
    Registro ordenado de aplicaciones de primitivas.

    Se usa como contexto (``with Tape() as tape``). Los parámetros entran en
    la cinta mediante ``watch`` y ``backward`` devuelve un gradiente por cada
    nombre observado, con ceros para los no alcanzados desde la pérdida.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self.leaves: Dict[str, Tuple[int, Tuple[int, ...]]] = {}
        self._next_node = 0
        self._tokens: List[Any] = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_active_tape.set(self))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._tokens.pop())

    def _new_node(self) -> int:
        node = self._next_node
        self._next_node += 1
        return node

    def watch(self, name: str, value: ArrayLike) -> Tensor:
        """
        Registra un parámetro como hoja de la cinta

        Args:
            name: Nombre único del parámetro
            value: Valor inicial

        Returns:
            Tensor asociado a un nodo hoja

        Raises:
            AutodiffError: Si el nombre ya está registrado
        """
        if name in self.leaves:
            raise AutodiffError(f"El parámetro '{name}' ya está registrado en la cinta")
        tensor = Tensor(np.array(value, dtype=np.float64, copy=True), self._new_node())
        self.leaves[name] = (tensor.node, tensor.shape)
        return tensor

    def watch_all(self, values: Dict[str, ArrayLike]) -> Dict[str, Tensor]:
        return {name: self.watch(name, value) for name, value in values.items()}

    def record(self, kind: str, inputs: Sequence[Tensor], saved: Dict[str, Any]) -> int:
        output = self._new_node()
        self.entries.append(TapeEntry(kind, tuple(t.node for t in inputs), output, saved))
        return output

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        """
        Propaga el adjunto desde una pérdida escalar

        Args:
            loss: Tensor escalar producido en esta cinta

        Returns:
            Mapa nombre de parámetro -> gradiente

        Raises:
            AutodiffError: Si la pérdida no es escalar
        """
        if loss.shape != ():
            raise AutodiffError(
                f"La pérdida debe ser escalar, forma recibida {loss.shape}",
                "NON_SCALAR_LOSS",
                {"shape": list(loss.shape)}
            )

        grads: Dict[int, np.ndarray] = {}
        if loss.node is not None:
            grads[loss.node] = np.ones(())

        for entry in reversed(self.entries):
            upstream = grads.get(entry.output)
            if upstream is None:
                continue
            input_grads = PRIMITIVES[entry.kind].vjp(upstream, entry.saved)
            for node, grad in zip(entry.inputs, input_grads):
                if node is None or grad is None:
                    continue
                grads[node] = grads[node] + grad if node in grads else grad

        result: Dict[str, np.ndarray] = {}
        for name, (node, shape) in self.leaves.items():
            grad = grads.get(node)
            result[name] = np.zeros(shape) if grad is None else np.array(grad, dtype=np.float64)
        return result


def backward(loss: Tensor, tape: Optional[Tape] = None) -> Dict[str, np.ndarray]:
    """Ejecuta ``backward`` sobre la cinta indicada o la activa"""
    tape = tape or current_tape()
    if tape is None:
        raise AutodiffError("No hay una cinta activa para calcular gradientes", "NO_ACTIVE_TAPE")
    return tape.backward(loss)


class Primitive:
    """Contrato de una primitiva: ``forward`` devuelve (valor, guardados)"""

    kind = ""

    def forward(self, *values: np.ndarray, **attrs: Any) -> Tuple[np.ndarray, Dict[str, Any]]:
        raise NotImplementedError

    def vjp(self, grad: np.ndarray, saved: Dict[str, Any]) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError


class MatMul(Primitive):
    """(…,D)@(D,H), (…,D)@(D,) y el producto por lotes (…,N)@(…,N,D)"""

    kind = "matmul"

    def forward(self, a, b):
        if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
            mode = "vector"
            out = a @ b
        elif b.ndim == 2 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
            mode = "matrix"
            out = a @ b
        elif b.ndim >= 3 and b.ndim == a.ndim + 1 and b.shape[:-1] == a.shape:
            mode = "batched"
            out = np.einsum("...n,...nd->...d", a, b)
        else:
            raise ShapeMismatchError(self.kind, a.shape, b.shape)
        return out, {"a": a, "b": b, "mode": mode}

    def vjp(self, grad, saved):
        a, b = saved["a"], saved["b"]
        if saved["mode"] == "vector":
            grad_a = grad[..., None] * b
            grad_b = a.reshape(-1, b.shape[0]).T @ grad.reshape(-1)
        elif saved["mode"] == "matrix":
            grad_a = grad @ b.T
            grad_b = a.reshape(-1, b.shape[0]).T @ grad.reshape(-1, b.shape[1])
        else:
            grad_a = np.einsum("...d,...nd->...n", grad, b)
            grad_b = np.einsum("...n,...d->...nd", a, grad)
        return grad_a, grad_b


class Add(Primitive):
    kind = "add"

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeMismatchError(self.kind, a.shape, b.shape)
        return a + b, {}

    def vjp(self, grad, saved):
        return grad, grad


class Mul(Primitive):
    kind = "mul"

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeMismatchError(self.kind, a.shape, b.shape)
        return a * b, {"a": a, "b": b}

    def vjp(self, grad, saved):
        return grad * saved["b"], grad * saved["a"]


class Scale(Primitive):
    kind = "scale"

    def forward(self, x, factor: float = 1.0):
        return x * factor, {"factor": factor}

    def vjp(self, grad, saved):
        return (grad * saved["factor"],)


class Concat(Primitive):
    """Concatenación sobre el último eje"""

    kind = "concat"

    def forward(self, *xs):
        if not xs:
            raise ShapeMismatchError(self.kind)
        lead = xs[0].shape[:-1]
        for x in xs[1:]:
            if x.ndim == 0 or x.shape[:-1] != lead:
                raise ShapeMismatchError(self.kind, xs[0].shape, x.shape)
        sizes = [x.shape[-1] for x in xs]
        return np.concatenate(xs, axis=-1), {"sizes": sizes}

    def vjp(self, grad, saved):
        splits = np.cumsum(saved["sizes"])[:-1]
        return tuple(np.split(grad, splits, axis=-1))


class Stack(Primitive):
    """Apila tensores de igual forma en un nuevo eje inicial"""

    kind = "stack"

    def forward(self, *xs):
        if not xs:
            raise ShapeMismatchError(self.kind)
        for x in xs[1:]:
            if x.shape != xs[0].shape:
                raise ShapeMismatchError(self.kind, xs[0].shape, x.shape)
        return np.stack(xs, axis=0), {"count": len(xs)}

    def vjp(self, grad, saved):
        return tuple(grad[i] for i in range(saved["count"]))


class Reshape(Primitive):
    kind = "reshape"

    def forward(self, x, shape: Tuple[int, ...] = ()):
        shape = tuple(shape)
        if int(np.prod(shape)) != x.size:
            raise ShapeMismatchError(self.kind, x.shape, shape)
        return x.reshape(shape), {"shape": x.shape}

    def vjp(self, grad, saved):
        return (grad.reshape(saved["shape"]),)


class RepeatRows(Primitive):
    """(…,D) -> (…,n,D) insertando n copias en el eje -2"""

    kind = "repeat_rows"

    def forward(self, x, count: int = 1):
        if x.ndim == 0:
            raise ShapeMismatchError(self.kind, x.shape)
        return np.repeat(x[..., None, :], count, axis=-2), {}

    def vjp(self, grad, saved):
        return (grad.sum(axis=-2),)


class SliceLast(Primitive):
    kind = "slice_last"

    def forward(self, x, start: int = 0, stop: int = 0):
        if x.ndim == 0 or not 0 <= start <= stop <= x.shape[-1]:
            raise ShapeMismatchError(self.kind, x.shape, (start, stop))
        return x[..., start:stop].copy(), {"shape": x.shape, "start": start, "stop": stop}

    def vjp(self, grad, saved):
        full = np.zeros(saved["shape"])
        full[..., saved["start"]:saved["stop"]] = grad
        return (full,)


class Sum(Primitive):
    kind = "sum"

    def forward(self, x):
        return np.asarray(x.sum()), {"shape": x.shape}

    def vjp(self, grad, saved):
        return (np.full(saved["shape"], float(grad)),)


class Tanh(Primitive):
    kind = "tanh"

    def forward(self, x):
        out = np.tanh(x)
        return out, {"out": out}

    def vjp(self, grad, saved):
        return (grad * (1.0 - saved["out"] ** 2),)


class Sigmoid(Primitive):
    kind = "sigmoid"

    def forward(self, x):
        out = 0.5 * (1.0 + np.tanh(0.5 * x))
        return out, {"out": out}

    def vjp(self, grad, saved):
        out = saved["out"]
        return (grad * out * (1.0 - out),)


def _live_mask(mask: Optional[np.ndarray], shape: Tuple[int, ...], op: str) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask).astype(bool)
    if mask.shape != shape:
        raise ShapeMismatchError(op, shape, mask.shape)
    return mask


class MeanRows(Primitive):
    """Media de (…,N,D) sobre las filas no enmascaradas"""

    kind = "mean_rows"

    def forward(self, x, mask: Optional[np.ndarray] = None):
        if x.ndim < 2:
            raise ShapeMismatchError(self.kind, x.shape)
        live = _live_mask(mask, x.shape[:-1], self.kind)
        counts = live.sum(axis=-1)
        empty = np.flatnonzero(counts.reshape(-1) == 0)
        if empty.size:
            raise MaskedRowError(int(empty[0]), {"op": self.kind})
        weights = live / counts[..., None]
        out = np.einsum("...n,...nd->...d", weights, x)
        return out, {"weights": weights}

    def vjp(self, grad, saved):
        return (saved["weights"][..., None] * grad[..., None, :],)


class EmbeddingGather(Primitive):
    """Filas de la tabla (V,E) indexadas por ids enteros de cualquier forma"""

    kind = "embedding_gather"

    def forward(self, table, ids: Optional[np.ndarray] = None):
        ids = np.asarray(ids, dtype=np.int64)
        if table.ndim != 2:
            raise ShapeMismatchError(self.kind, table.shape, ids.shape)
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise ShapeMismatchError(
                self.kind, table.shape, ids.shape,
                details={"min_id": int(ids.min()), "max_id": int(ids.max())}
            )
        return table[ids], {"ids": ids, "rows": table.shape[0]}

    def vjp(self, grad, saved):
        table_grad = np.zeros((saved["rows"], grad.shape[-1]))
        # ids repetidos acumulan
        np.add.at(table_grad, saved["ids"], grad)
        return (table_grad,)


class Dropout(Primitive):
    """Producto por una máscara externa con valores en {0, 1/keep}"""

    kind = "dropout"

    def forward(self, x, mask: Optional[np.ndarray] = None):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != x.shape:
            raise ShapeMismatchError(self.kind, x.shape, mask.shape)
        return x * mask, {"mask": mask}

    def vjp(self, grad, saved):
        return (grad * saved["mask"],)


class MaskedSoftmaxRows(Primitive):
    kind = "masked_softmax_rows"

    def forward(self, x, mask: Optional[np.ndarray] = None):
        if x.ndim == 0:
            raise ShapeMismatchError(self.kind, x.shape)
        live = _live_mask(mask, x.shape, self.kind)
        dead_rows = np.flatnonzero(~live.reshape(-1, x.shape[-1]).any(axis=-1)) if x.shape[-1] else [0]
        if len(dead_rows):
            raise MaskedRowError(int(dead_rows[0]))
        peak = np.max(np.where(live, x, -np.inf), axis=-1, keepdims=True)
        shifted = np.where(live, x - peak, 0.0)
        exp = np.exp(shifted) * live
        out = exp / exp.sum(axis=-1, keepdims=True)
        return out, {"out": out}

    def vjp(self, grad, saved):
        out = saved["out"]
        return (out * (grad - (grad * out).sum(axis=-1, keepdims=True)),)


class CrossEntropy(Primitive):
    """Media de -log softmax(logits)[objetivo] sobre las posiciones activas"""

    kind = "cross_entropy"

    def forward(self, logits, targets: Optional[np.ndarray] = None, mask: Optional[np.ndarray] = None):
        targets = np.asarray(targets, dtype=np.int64)
        if logits.ndim == 0 or targets.shape != logits.shape[:-1]:
            raise ShapeMismatchError(self.kind, logits.shape, targets.shape)
        vocab = logits.shape[-1]
        if targets.size and (targets.min() < 0 or targets.max() >= vocab):
            raise ShapeMismatchError(self.kind, logits.shape, targets.shape, details={"vocab": vocab})
        live = _live_mask(mask, targets.shape, self.kind).astype(np.float64)
        count = live.sum()
        if count == 0:
            raise AutodiffError("cross_entropy sin posiciones activas", "EMPTY_TARGETS")

        shifted = logits - logits.max(axis=-1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        log_probs = shifted - log_norm
        picked = np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
        loss = -(picked * live).sum() / count
        return np.asarray(loss), {
            "probs": np.exp(log_probs), "targets": targets, "live": live, "count": count
        }

    def vjp(self, grad, saved):
        delta = saved["probs"].copy()
        np.put_along_axis(
            delta,
            saved["targets"][..., None],
            np.take_along_axis(delta, saved["targets"][..., None], axis=-1) - 1.0,
            axis=-1
        )
        scale = float(grad) * saved["live"][..., None] / saved["count"]
        return (delta * scale,)


PRIMITIVES: Dict[str, Primitive] = {
    primitive.kind: primitive
    for primitive in (
        MatMul(), Add(), Mul(), Scale(), Concat(), Stack(), Reshape(), RepeatRows(),
        SliceLast(), Sum(), Tanh(), Sigmoid(), MeanRows(), EmbeddingGather(), Dropout(),
        MaskedSoftmaxRows(), CrossEntropy(),
    )
}


def apply(kind: str, *inputs: Tensor, **attrs: Any) -> Tensor:
    """
    Aplica una primitiva y la registra si hay cinta activa

    Args:
        kind: Nombre de la primitiva en ``PRIMITIVES``
        inputs: Tensores de entrada
        attrs: Atributos constantes (máscaras, índices, formas)

    Returns:
        Tensor resultante
    """
    try:
        primitive = PRIMITIVES[kind]
    except KeyError:
        raise AutodiffError(f"Primitiva desconocida: {kind}", "UNKNOWN_PRIMITIVE")
    out, saved = primitive.forward(*(t.value for t in inputs), **attrs)
    tape = current_tape()
    node = None
    if tape is not None and any(t.node is not None for t in inputs):
        node = tape.record(kind, inputs, saved)
    return Tensor(out, node)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply("matmul", a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return apply("add", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return apply("mul", a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return apply("scale", x, factor=float(factor))


def concat(xs: Sequence[Tensor]) -> Tensor:
    return apply("concat", *xs)


def stack(xs: Sequence[Tensor]) -> Tensor:
    return apply("stack", *xs)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return apply("reshape", x, shape=tuple(shape))


def repeat_rows(x: Tensor, count: int) -> Tensor:
    return apply("repeat_rows", x, count=int(count))


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    return apply("slice_last", x, start=int(start), stop=int(stop))


def tensor_sum(x: Tensor) -> Tensor:
    return apply("sum", x)


def tanh(x: Tensor) -> Tensor:
    return apply("tanh", x)


def sigmoid(x: Tensor) -> Tensor:
    return apply("sigmoid", x)


def mean_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    return apply("mean_rows", x, mask=mask)


def embedding_gather(table: Tensor, ids: ArrayLike) -> Tensor:
    return apply("embedding_gather", table, ids=np.asarray(ids))


def dropout(x: Tensor, mask: ArrayLike) -> Tensor:
    return apply("dropout", x, mask=mask)


def masked_softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    return apply("masked_softmax_rows", x, mask=mask)


def cross_entropy(logits: Tensor, targets: ArrayLike, mask: Optional[np.ndarray] = None) -> Tensor:
    return apply("cross_entropy", logits, targets=np.asarray(targets), mask=mask)
