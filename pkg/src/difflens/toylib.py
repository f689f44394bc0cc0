"""Bundled toy tensor libraries: a reference implementation and a buggy twin.

Both expose the same eight operations over numpy arrays; the buggy library
carries five seeded faults, each reachable only by inputs that satisfy the
sanity checks modeled in the bundled IR corpus:

  overflow      is_nondecreasing computes element differences in the unsigned
                input dtype, so the difference wraps around and the predicate
                answers true for descending unsigned tensors.
                minimal trigger: x=[10, 9] uint32 -> buggy True, ref False
  clamp         bincount skips the output-size clamp whenever size > 0.
                minimal trigger: arr=[1], size=1, weights=[1.0]
                -> ref [0.], buggy [0., 1.]
  guarded-crash matrix_diag aborts in its core once every sanity check has
                passed, when the upper diagonal index is positive and the row
                count is left implicit.
                minimal trigger: diagonal=[1., 2.], k=[1], num_rows=-1,
                num_cols=-1 -> buggy crash, ref ok
  spurious      pad rejects the valid pad amount 3 with an exception.
                minimal trigger: x=[1.0], pad_amount=3 -> buggy ValueError,
                ref ok
  nan-drop      reduce_sum silently treats NaN elements as zero.
                minimal trigger: x=[nan], axis=0 -> ref nan, buggy 0.0
"""

from __future__ import annotations

import numpy as np


class ToyCrash(Exception):
    """Simulated process abort; the harness maps this to a crash outcome."""

    def __init__(self, descriptor: str):
        super().__init__(descriptor)
        self.descriptor = descriptor


_INT_KINDS = ("i", "u")


def _require_int(name: str, arr: np.ndarray):
    if arr.dtype.kind not in _INT_KINDS:
        raise TypeError(f"{name} must have an integer dtype, got {arr.dtype}")


def _require_vector(name: str, arr: np.ndarray):
    if arr.ndim != 1:
        raise ValueError(
            f"Dimension out of range (expected to be in range of [1, 1], but got {arr.ndim})"
        )


# ---------------------------------------------------------------------------
# Shared cores (identical in both libraries)
# ---------------------------------------------------------------------------

def _is_nondecreasing_ref(x):
    x = np.asarray(x)
    flat = np.ravel(x)
    if flat.size < 2:
        return True
    # compare in a signed domain wide enough for every supported dtype
    widened = flat.astype(np.float64) if flat.dtype.kind != "c" else flat
    if flat.dtype.kind == "c":
        raise TypeError("is_nondecreasing is not defined for complex tensors")
    return bool(np.all(np.diff(widened) >= 0))


def _is_nondecreasing_buggy(x):
    x = np.asarray(x)
    flat = np.ravel(x)
    if flat.dtype.kind == "c":
        raise TypeError("is_nondecreasing is not defined for complex tensors")
    if flat.size < 2:
        return True
    # fault `overflow`: difference taken in the input dtype; unsigned wraps
    diff = flat[1:] - flat[:-1]
    if flat.dtype.kind == "u":
        return bool(np.all(diff >= 0))
    return bool(np.all(diff.astype(np.float64) >= 0))


def _bincount_checks(arr, size, weights):
    arr = np.asarray(arr)
    weights = np.asarray(weights)
    _require_int("arr", arr)
    _require_vector("arr", arr)
    if not isinstance(size, (int, np.integer)):
        raise TypeError("size must be an integer")
    if size < 0:
        raise ValueError("size must be non-negative")
    if weights.shape != arr.shape:
        raise ValueError("weights must have the same shape as arr")
    if arr.size and arr.min() < 0:
        raise ValueError("arr must be non-negative")
    return arr, int(size), weights


def _bincount(arr, size, weights, clamp: bool):
    arr, size, weights = _bincount_checks(arr, size, weights)
    length = size
    if not clamp and size > 0 and arr.size:
        # fault `clamp`: output grows past the requested size
        length = max(size, int(arr.max()) + 1)
    out_dtype = np.complex128 if weights.dtype.kind == "c" else np.float64
    out = np.zeros(length, dtype=out_dtype)
    for v, w in zip(arr.tolist(), weights.ravel().tolist()):
        if v < length:
            out[v] += w
    return out


def _matrix_diag_checks(diagonal, k, num_rows, num_cols):
    diagonal = np.asarray(diagonal)
    k = np.asarray(k)
    if k.dtype != np.int32:
        raise TypeError(f"k must be an int32 tensor, got {k.dtype}")
    _require_vector("k", k)
    if k.size == 0:
        raise ValueError("diag index must not be empty")
    if k.size > 2:
        raise ValueError("diag index must have one or two elements")
    lower = int(k[0])
    upper = int(k[-1])
    if upper < lower:
        raise ValueError("diag index range is inverted")
    if diagonal.ndim < 1:
        raise ValueError("diagonal must have rank >= 1")
    max_diag_len = diagonal.shape[-1]
    min_num_rows = max_diag_len - min(upper, 0)
    min_num_cols = max_diag_len + max(lower, 0)
    if not isinstance(num_rows, (int, np.integer)) or not isinstance(num_cols, (int, np.integer)):
        raise TypeError("num_rows and num_cols must be integers")
    if num_rows != -1 and num_rows < min_num_rows:
        raise ValueError("The number of rows is too small.")
    if num_cols != -1 and num_cols < min_num_cols:
        raise ValueError("The number of columns is too small.")
    return diagonal, lower, upper, int(num_rows), int(num_cols), min_num_rows, min_num_cols


def _matrix_diag(diagonal, k, num_rows, num_cols, seeded: bool):
    (diagonal, lower, upper, num_rows, num_cols,
     min_num_rows, min_num_cols) = _matrix_diag_checks(diagonal, k, num_rows, num_cols)
    if seeded and upper > 0 and num_rows == -1:
        # fault `guarded-crash`: reachable only after all three checks pass
        raise ToyCrash("abort: internal check failed in matrix_diag core")
    rows = num_rows if num_rows != -1 else min_num_rows
    cols = num_cols if num_cols != -1 else min_num_cols
    lead = diagonal.shape[:-1] if diagonal.ndim > 1 else ()
    out = np.zeros(lead + (rows, cols), dtype=diagonal.dtype)
    length = diagonal.shape[-1]
    for offset in range(lower, upper + 1):
        r0 = max(-offset, 0)
        c0 = max(offset, 0)
        n = min(rows - r0, cols - c0, length)
        for i in range(max(n, 0)):
            out[..., r0 + i, c0 + i] = diagonal[..., i]
    return out


def _pad_checks(x, pad_amount):
    x = np.asarray(x)
    if not isinstance(pad_amount, (int, np.integer)):
        raise TypeError("pad_amount must be an integer")
    if pad_amount < 0:
        raise ValueError("pad amount must be non-negative")
    if x.ndim > 2:
        raise ValueError(
            f"Dimension out of range (expected to be in range of [0, 2], but got {x.ndim})"
        )
    return np.atleast_1d(x), int(pad_amount)


def _pad(x, pad_amount, seeded: bool):
    x, pad_amount = _pad_checks(x, pad_amount)
    if seeded and pad_amount == 3:
        # fault `spurious`: valid input rejected
        raise ValueError("pad amount 3 is not supported")
    widths = [(0, 0)] * (x.ndim - 1) + [(pad_amount, pad_amount)]
    if x.dtype.kind == "b":
        return np.pad(x, widths, constant_values=False)
    return np.pad(x, widths, constant_values=0)


def _reduce_sum_checks(x, axis):
    x = np.asarray(x)
    if not isinstance(axis, (int, np.integer)):
        raise TypeError("axis must be an integer")
    if x.ndim == 0 or axis < -x.ndim or axis >= x.ndim:
        raise ValueError(f"axis {int(axis)} is out of bounds for rank {x.ndim}")
    return x, int(axis)


def _reduce_sum(x, axis, seeded: bool):
    x, axis = _reduce_sum_checks(x, axis)
    if seeded and x.dtype.kind in ("f", "c"):
        # fault `nan-drop`: NaN elements contribute zero
        return np.nansum(x, axis=axis)
    return np.sum(x, axis=axis)


def _elementwise_less(x, y):
    x, y = np.asarray(x), np.asarray(y)
    if x.dtype.kind == "c" or y.dtype.kind == "c":
        raise TypeError("ordering is not defined for complex tensors")
    if x.shape != y.shape:
        raise ValueError("operands must have the same shape")
    return np.less(x, y)


def _scatter_add(indices, updates, size):
    indices, updates = np.asarray(indices), np.asarray(updates)
    _require_int("indices", indices)
    _require_vector("indices", indices)
    if updates.ndim < 1:
        raise ValueError("updates must have rank >= 1")
    if updates.shape[0] != indices.shape[0]:
        raise ValueError("updates and indices must agree on the first dimension")
    if not isinstance(size, (int, np.integer)):
        raise TypeError("size must be an integer")
    if size < 0:
        raise ValueError("size must be non-negative")
    if indices.size and (indices.min() < 0 or indices.max() >= size):
        raise ValueError("indices must fall within [0, size)")
    out_dtype = updates.dtype if updates.dtype.kind != "b" else np.int64
    out = np.zeros((int(size),) + updates.shape[1:], dtype=out_dtype)
    for i, idx in enumerate(indices.tolist()):
        out[idx] += updates[i]
    return out


def _broadcast_add(x, y):
    x, y = np.asarray(x), np.asarray(y)
    try:
        np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        raise ValueError("operands are not broadcast-compatible") from None
    if x.dtype.kind == "b" and y.dtype.kind == "b":
        return np.logical_or(x, y)
    return x + y


# helpers exposed for counterpart composition
def _sort(x):
    return np.sort(np.ravel(np.asarray(x)))


def _equal(x, y):
    return np.equal(np.ravel(np.asarray(x)), np.ravel(np.asarray(y)))


def _all_true(x):
    return bool(np.all(np.asarray(x)))


def _debug_sleep(seconds):
    import time

    time.sleep(float(seconds))
    return True


def _debug_abort():
    raise ToyCrash("abort: debug abort requested")


class ToyLibrary:
    """One toy library: a named bag of operations."""

    def __init__(self, name: str, ops: dict):
        self.name = name
        self._ops = ops

    def op_names(self) -> tuple[str, ...]:
        return tuple(sorted(self._ops))

    def resolve(self, name: str):
        if name not in self._ops:
            raise KeyError(f"{self.name} has no operation {name!r}")
        return self._ops[name]

    def __getattr__(self, name: str):
        try:
            return self._ops[name]
        except KeyError:
            raise AttributeError(name) from None


def _build(seeded: bool, name: str) -> ToyLibrary:
    return ToyLibrary(name, {
        "is_nondecreasing": _is_nondecreasing_buggy if seeded else _is_nondecreasing_ref,
        "bincount": lambda arr, size, weights: _bincount(arr, size, weights, clamp=not seeded),
        "matrix_diag_v2": lambda diagonal, k, num_rows, num_cols: _matrix_diag(
            diagonal, k, num_rows, num_cols, seeded),
        "pad": lambda x, pad_amount: _pad(x, pad_amount, seeded),
        "reduce_sum": lambda x, axis: _reduce_sum(x, axis, seeded),
        "elementwise_less": _elementwise_less,
        "scatter_add": _scatter_add,
        "broadcast_add": _broadcast_add,
        "sort": _sort,
        "equal": _equal,
        "all_true": _all_true,
        "debug_sleep": _debug_sleep,
        "debug_abort": _debug_abort,
    })


REFERENCE = _build(seeded=False, name="toy-ref")
BUGGY = _build(seeded=True, name="toy-buggy")

#: known-good counterpart programs in the reference-library dialect
REFERENCE_COUNTERPARTS = {
    "is_nondecreasing": (
        "def counterpart(x):\n"
        "    s = ref.sort(x)\n"
        "    return ref.all_true(ref.equal(x, s))"
    ),
    "bincount": (
        "def counterpart(arr, size, weights):\n"
        "    return ref.bincount(arr, size, weights)"
    ),
    "matrix_diag_v2": (
        "def counterpart(diagonal, k, num_rows, num_cols):\n"
        "    return ref.matrix_diag_v2(diagonal, k, num_rows, num_cols)"
    ),
    "pad": (
        "def counterpart(x, pad_amount):\n"
        "    return ref.pad(x, pad_amount)"
    ),
    "reduce_sum": (
        "def counterpart(x, axis):\n"
        "    return ref.reduce_sum(x, axis)"
    ),
    "elementwise_less": (
        "def counterpart(x, y):\n"
        "    return ref.elementwise_less(x, y)"
    ),
    "scatter_add": (
        "def counterpart(indices, updates, size):\n"
        "    return ref.scatter_add(indices, updates, size)"
    ),
    "broadcast_add": (
        "def counterpart(x, y):\n"
        "    return ref.broadcast_add(y, x)"
    ),
}

#: faults and their documented minimal triggering inputs (kwargs per op)
SEEDED_FAULTS = {
    "overflow": ("is_nondecreasing", dict(x=np.array([10, 9], dtype=np.uint32))),
    "clamp": ("bincount", dict(arr=np.array([1], dtype=np.int32), size=1,
                               weights=np.array([1.0], dtype=np.float32))),
    "guarded-crash": ("matrix_diag_v2", dict(diagonal=np.array([1.0, 2.0], dtype=np.float32),
                                             k=np.array([1], dtype=np.int32),
                                             num_rows=-1, num_cols=-1)),
    "spurious": ("pad", dict(x=np.array([1.0], dtype=np.float32), pad_amount=3)),
    "nan-drop": ("reduce_sum", dict(x=np.array([np.nan], dtype=np.float32), axis=0)),
}
