"""
Almacén de parámetros con acumuladores de Adamax y contenedor de checkpoint.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from app.core.exceptions import CheckpointError, ConfigurationError, ShapeMismatchError
from app.core.logging import LogManager

logger = LogManager.get_logger(__name__)

_PARAM_PREFIX = "param/"
_MOMENT_PREFIX = "moment/"
_NORM_PREFIX = "infnorm/"
_META_KEY = "__meta__"
_NAMES_KEY = "__names__"
_STEP_KEY = "__step__"


class ParameterStore:
    """
    Parámetros con nombre y sus acumuladores de optimizador.

    El orden de inserción se conserva y define el orden de serialización.
    """

    def __init__(self):
        self._values: Dict[str, np.ndarray] = {}
        self.first_moment: Dict[str, np.ndarray] = {}
        self.inf_norm: Dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: Any) -> None:
        """
        Registra un parámetro nuevo

        Args:
            name: Nombre único
            value: Valor inicial

        Raises:
            ConfigurationError: Si el nombre ya existe
        """
        if name in self._values:
            raise ConfigurationError(f"Parámetro duplicado: {name}", {"name": name})
        array = np.array(value, dtype=np.float64, copy=True)
        self._values[name] = array
        self.first_moment[name] = np.zeros_like(array)
        self.inf_norm[name] = np.zeros_like(array)

    def set(self, name: str, value: Any) -> None:
        array = np.asarray(value, dtype=np.float64)
        if array.shape != self._values[name].shape:
            raise ShapeMismatchError("parameter_set", self._values[name].shape, array.shape)
        self._values[name] = array.copy()

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: object) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def names(self) -> List[str]:
        return list(self._values)

    def items(self) -> List[Tuple[str, np.ndarray]]:
        return list(self._values.items())

    def values(self) -> Dict[str, np.ndarray]:
        """Copia superficial del mapa nombre -> valor"""
        return dict(self._values)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: value.shape for name, value in self._values.items()}

    def size(self) -> int:
        return int(sum(value.size for value in self._values.values()))

    def copy(self) -> "ParameterStore":
        clone = ParameterStore()
        for name, value in self._values.items():
            clone.add(name, value)
            clone.first_moment[name] = self.first_moment[name].copy()
            clone.inf_norm[name] = self.inf_norm[name].copy()
        clone.step = self.step
        return clone

    def save(self, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
        """
        Guarda parámetros, acumuladores y metadatos en un único archivo .npz

        Args:
            path: Ruta destino
            metadata: Datos JSON-serializables (configuración, hash de vocabulario)

        Returns:
            Ruta escrita

        Raises:
            CheckpointError: Si la escritura falla
        """
        path = Path(path)
        arrays: Dict[str, np.ndarray] = {
            _NAMES_KEY: np.array(json.dumps(self.names())),
            _META_KEY: np.array(json.dumps(metadata or {}, sort_keys=True)),
            _STEP_KEY: np.array(self.step, dtype=np.int64),
        }
        for name, value in self._values.items():
            arrays[_PARAM_PREFIX + name] = value
            arrays[_MOMENT_PREFIX + name] = self.first_moment[name]
            arrays[_NORM_PREFIX + name] = self.inf_norm[name]

        tmp_path = path.with_name(path.name + ".tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(tmp_path, "wb") as fh:
                np.savez(fh, **arrays)
            os.replace(tmp_path, path)
        except OSError as e:
            raise CheckpointError(f"No se pudo escribir el checkpoint: {path}", {"path": str(path), "error": str(e)})

        logger.debug("Checkpoint guardado", extra={"path": str(path), "parameters": len(self)})
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> Tuple["ParameterStore", Dict[str, Any]]:
        """
        Carga un checkpoint escrito por ``save``

        Returns:
            Tupla (almacén, metadatos)

        Raises:
            CheckpointError: Si el archivo no existe o está corrupto
        """
        path = Path(path)
        if not path.is_file():
            raise CheckpointError(f"Checkpoint no encontrado: {path}", {"path": str(path)})
        try:
            with np.load(path, allow_pickle=False) as data:
                names = json.loads(str(data[_NAMES_KEY]))
                metadata = json.loads(str(data[_META_KEY]))
                store = cls()
                for name in names:
                    store.add(name, data[_PARAM_PREFIX + name])
                    store.first_moment[name] = np.array(data[_MOMENT_PREFIX + name])
                    store.inf_norm[name] = np.array(data[_NORM_PREFIX + name])
                store.step = int(data[_STEP_KEY])
        except (KeyError, ValueError, OSError) as e:
            raise CheckpointError(f"Checkpoint corrupto: {path}", {"path": str(path), "error": str(e)})
        return store, metadata
