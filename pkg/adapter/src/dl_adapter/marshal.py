"""Value marshaling between the wire encoding and host-library tensors.

The wire format (docs/protocol.md in the engine repository) moves tensors as
raw row-major bytes; marshaling must preserve dtype, shape, and every bit of
the payload (NaN payloads included) for each dtype the host supports.
"""

from __future__ import annotations

import base64
import math

import numpy as np

WIRE_DTYPES = (
    "bool", "int32", "int64", "uint32",
    "float16", "float32", "float64", "complex64",
)

_NUMPY_OF = {
    "bool": np.bool_,
    "int32": np.int32,
    "int64": np.int64,
    "uint32": np.uint32,
    "float16": np.float16,
    "float32": np.float32,
    "float64": np.float64,
    "complex64": np.complex64,
}

_WIRE_OF_NUMPY = {np.dtype(v): k for k, v in _NUMPY_OF.items()}


class MarshalError(ValueError):
    pass


class TorchHost:
    """Marshaling rules for a PyTorch host."""

    name = "torch"

    def __init__(self):
        import torch

        self.torch = torch
        self._dtype_of = {
            "bool": torch.bool,
            "int32": torch.int32,
            "int64": torch.int64,
            "uint32": getattr(torch, "uint32", None),
            "float16": torch.float16,
            "float32": torch.float32,
            "float64": torch.float64,
            "complex64": torch.complex64,
        }

    def supported_dtypes(self) -> list[str]:
        """Dtypes the host represents bit-exactly, probed at startup."""
        supported = []
        for name in WIRE_DTYPES:
            if self._dtype_of.get(name) is None:
                continue
            try:
                probe = np.zeros(1, dtype=_NUMPY_OF[name])
                tensor = self.tensor_from_numpy(probe)
                if self.numpy_from_tensor(tensor).dtype == probe.dtype:
                    supported.append(name)
            except Exception:
                continue
        return supported

    def tensor_from_numpy(self, arr: np.ndarray):
        return self.torch.from_numpy(arr.copy())

    def numpy_from_tensor(self, tensor) -> np.ndarray:
        return tensor.detach().contiguous().cpu().numpy()

    def is_tensor(self, value) -> bool:
        return isinstance(value, self.torch.Tensor)

    def namespace(self) -> dict:
        return {"torch": self.torch}

    def root(self):
        return self.torch


class TensorFlowHost:
    """Marshaling rules for a TensorFlow host."""

    name = "tensorflow"

    def __init__(self):
        import tensorflow as tf

        self.tf = tf

    def supported_dtypes(self) -> list[str]:
        supported = []
        for name in WIRE_DTYPES:
            try:
                probe = np.zeros(1, dtype=_NUMPY_OF[name])
                if self.numpy_from_tensor(self.tensor_from_numpy(probe)).dtype == probe.dtype:
                    supported.append(name)
            except Exception:
                continue
        return supported

    def tensor_from_numpy(self, arr: np.ndarray):
        return self.tf.constant(arr)

    def numpy_from_tensor(self, tensor) -> np.ndarray:
        return np.asarray(tensor)

    def is_tensor(self, value) -> bool:
        return isinstance(value, (self.tf.Tensor, self.tf.Variable))

    def namespace(self) -> dict:
        return {"tf": self.tf, "tensorflow": self.tf}

    def root(self):
        return self.tf


HOSTS = {"torch": TorchHost, "tensorflow": TensorFlowHost}


def decode_value(doc: dict, host):
    kind = doc["kind"]
    if kind == "tensor":
        dtype = doc["dtype"]
        if dtype not in _NUMPY_OF:
            raise MarshalError(f"unknown tensor dtype {dtype!r}")
        raw = base64.b64decode(doc["data_b64"])
        arr = np.frombuffer(raw, dtype=_NUMPY_OF[dtype]).reshape(
            tuple(int(d) for d in doc["shape"]))
        return host.tensor_from_numpy(arr)
    if kind == "int":
        return int(doc["value"])
    if kind == "float":
        return math.nan if doc["hex"] == "nan" else float.fromhex(doc["hex"])
    if kind == "bool":
        return bool(doc["value"])
    if kind == "string":
        return str(doc["value"])
    if kind == "int_list":
        return [int(x) for x in doc["value"]]
    raise MarshalError(f"unknown value kind {kind!r}")


def encode_numpy(arr: np.ndarray) -> dict:
    key = np.dtype(arr.dtype)
    if key == np.dtype(np.complex128):
        arr = arr.astype(np.complex64)
        key = np.dtype(arr.dtype)
    if key not in _WIRE_OF_NUMPY:
        raise MarshalError(f"host produced unsupported dtype {arr.dtype}")
    contiguous = np.ascontiguousarray(arr)
    return {
        "kind": "tensor",
        "dtype": _WIRE_OF_NUMPY[key],
        "shape": [int(d) for d in arr.shape],
        "data_b64": base64.b64encode(contiguous.tobytes()).decode("ascii"),
    }


def encode_value(value, host) -> dict:
    if host.is_tensor(value):
        return encode_numpy(host.numpy_from_tensor(value))
    if isinstance(value, bool):
        return {"kind": "bool", "value": value}
    if isinstance(value, int):
        return {"kind": "int", "value": value}
    if isinstance(value, float):
        return {"kind": "float",
                "hex": value.hex() if not math.isnan(value) else "nan",
                "value": repr(value)}
    if isinstance(value, str):
        return {"kind": "string", "value": value}
    if isinstance(value, np.ndarray):
        return encode_numpy(value)
    if isinstance(value, np.bool_):
        return {"kind": "bool", "value": bool(value)}
    if isinstance(value, np.integer):
        return {"kind": "int", "value": int(value)}
    if isinstance(value, np.floating):
        v = float(value)
        return {"kind": "float", "hex": v.hex() if not math.isnan(v) else "nan",
                "value": repr(v)}
    raise MarshalError(f"host produced unencodable value of type {type(value).__name__}")


def encode_outputs(result, host) -> list[dict]:
    if isinstance(result, (tuple, list)):
        return [encode_value(v, host) for v in result]
    return [encode_value(result, host)]
