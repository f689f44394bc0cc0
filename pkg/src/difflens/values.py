"""Concrete argument values: typed tensors and primitives, plus their wire codec.

Tensors carry raw row-major bytes so that serialization round-trips are
bit-exact (NaN payloads included) across process and language boundaries.
"""

from __future__ import annotations

import base64
import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DType(enum.Enum):
    BOOL = "bool"
    INT32 = "int32"
    INT64 = "int64"
    UINT32 = "uint32"
    FLOAT16 = "float16"
    FLOAT32 = "float32"
    FLOAT64 = "float64"
    COMPLEX64 = "complex64"
    STRING = "string"

    def __str__(self) -> str:
        return self.value


# dtypes a tensor may take; STRING exists only as a primitive dtype
TENSOR_DTYPES: tuple[DType, ...] = (
    DType.BOOL,
    DType.INT32,
    DType.INT64,
    DType.UINT32,
    DType.FLOAT16,
    DType.FLOAT32,
    DType.FLOAT64,
    DType.COMPLEX64,
)

FLOAT_DTYPES: tuple[DType, ...] = (DType.FLOAT16, DType.FLOAT32, DType.FLOAT64)
INT_DTYPES: tuple[DType, ...] = (DType.INT32, DType.INT64, DType.UINT32)

_NUMPY_OF = {
    DType.BOOL: np.bool_,
    DType.INT32: np.int32,
    DType.INT64: np.int64,
    DType.UINT32: np.uint32,
    DType.FLOAT16: np.float16,
    DType.FLOAT32: np.float32,
    DType.FLOAT64: np.float64,
    DType.COMPLEX64: np.complex64,
}

_DTYPE_OF_NUMPY = {np.dtype(v): k for k, v in _NUMPY_OF.items()}


def dtype_of(name: str) -> DType:
    try:
        return DType(name)
    except ValueError:
        raise ValueError(f"unknown dtype {name!r}") from None


def numpy_dtype(dt: DType) -> np.dtype:
    if dt is DType.STRING:
        raise ValueError("string is not a tensor dtype")
    return np.dtype(_NUMPY_OF[dt])


@dataclass(frozen=True)
class TensorValue:
    """An n-dimensional numeric array: dtype, shape, and raw row-major bytes."""

    dtype: DType
    shape: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        if self.dtype not in _NUMPY_OF:
            raise ValueError(f"{self.dtype} tensors are not supported")
        expected = self.num_element * numpy_dtype(self.dtype).itemsize
        if len(self.data) != expected:
            raise ValueError(
                f"tensor data length {len(self.data)} != num_element*itemsize {expected}"
            )

    @property
    def ndims(self) -> int:
        return len(self.shape)

    @property
    def num_element(self) -> int:
        return math.prod(self.shape)

    def to_numpy(self) -> np.ndarray:
        arr = np.frombuffer(self.data, dtype=numpy_dtype(self.dtype))
        return arr.reshape(self.shape)

    @classmethod
    def from_numpy(cls, arr: np.ndarray) -> "TensorValue":
        key = np.dtype(arr.dtype)
        if key not in _DTYPE_OF_NUMPY:
            raise ValueError(f"unsupported numpy dtype {arr.dtype}")
        contiguous = np.ascontiguousarray(arr)
        return cls(_DTYPE_OF_NUMPY[key], tuple(int(d) for d in arr.shape), contiguous.tobytes())

    @classmethod
    def of(cls, nested, dtype: DType) -> "TensorValue":
        """Build from a nested list (or scalar) with an explicit dtype."""
        return cls.from_numpy(np.asarray(nested, dtype=numpy_dtype(dtype)))


# a value is a tensor or a typed primitive; int-lists are tuples of ints
Value = TensorValue | bool | int | float | str | tuple


def value_dtype(v: Value) -> DType:
    """dtype property of a value (primitives map to a canonical dtype)."""
    if isinstance(v, TensorValue):
        return v.dtype
    if isinstance(v, bool):
        return DType.BOOL
    if isinstance(v, int):
        return DType.INT64
    if isinstance(v, float):
        return DType.FLOAT64
    if isinstance(v, str):
        return DType.STRING
    raise ValueError(f"no dtype for value of type {type(v).__name__}")


@dataclass
class ConcreteInput:
    """One fully-instantiated argument binding for an API call."""

    args: dict[str, Value]
    provenance: str = "llm"  # llm | mutation | solver

    def replace_arg(self, name: str, value: Value, provenance: str) -> "ConcreteInput":
        new_args = dict(self.args)
        new_args[name] = value
        return ConcreteInput(new_args, provenance)


# ---------------------------------------------------------------------------
# JSON codec (shared by artifacts and the worker wire protocol)
# ---------------------------------------------------------------------------

def encode_value(v: Value) -> dict:
    if isinstance(v, TensorValue):
        return {
            "kind": "tensor",
            "dtype": v.dtype.value,
            "shape": list(v.shape),
            "data_b64": base64.b64encode(v.data).decode("ascii"),
        }
    if isinstance(v, bool):
        return {"kind": "bool", "value": v}
    if isinstance(v, int):
        return {"kind": "int", "value": v}
    if isinstance(v, float):
        # hex form keeps the bit pattern; repr kept for readability
        return {"kind": "float", "hex": v.hex() if not math.isnan(v) else "nan", "value": repr(v)}
    if isinstance(v, str):
        return {"kind": "string", "value": v}
    if isinstance(v, tuple):
        return {"kind": "int_list", "value": [int(x) for x in v]}
    raise ValueError(f"cannot encode value of type {type(v).__name__}")


def decode_value(doc: dict) -> Value:
    kind = doc["kind"]
    if kind == "tensor":
        return TensorValue(
            dtype_of(doc["dtype"]),
            tuple(int(d) for d in doc["shape"]),
            base64.b64decode(doc["data_b64"]),
        )
    if kind == "bool":
        return bool(doc["value"])
    if kind == "int":
        return int(doc["value"])
    if kind == "float":
        return math.nan if doc["hex"] == "nan" else float.fromhex(doc["hex"])
    if kind == "string":
        return str(doc["value"])
    if kind == "int_list":
        return tuple(int(x) for x in doc["value"])
    raise ValueError(f"cannot decode value kind {kind!r}")


def encode_input(x: ConcreteInput) -> dict:
    return {
        "args": {name: encode_value(v) for name, v in x.args.items()},
        "provenance": x.provenance,
    }


def decode_input(doc: dict) -> ConcreteInput:
    return ConcreteInput(
        {name: decode_value(v) for name, v in doc["args"].items()},
        doc.get("provenance", "llm"),
    )
