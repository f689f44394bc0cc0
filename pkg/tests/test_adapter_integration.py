"""Engine-side integration with the real-library adapter worker.

The engine talks to the adapter exclusively through the wire protocol; these
tests skip when no torch host is importable.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from difflens.harness import Harness
from difflens.synthesis import compare
from difflens.values import ConcreteInput, DType, TensorValue

pytest.importorskip("torch")

ADAPTER_SRC = Path(__file__).resolve().parents[1] / "adapter" / "src"
WORKER_COMMAND = [
    sys.executable,
    "-c",
    (
        f"import sys; sys.path.insert(0, {str(ADAPTER_SRC)!r}); "
        "from dl_adapter.worker import main; main(['--library', 'torch'])"
    ),
]

SORT_AND_COMPARE = (
    "def counterpart(x):\n"
    "    return torch.all(torch.eq(x, torch.sort(x)[0]))"
)


@pytest.fixture(scope="module")
def adapter_harness():
    with Harness({"torch-adapter": {"command": WORKER_COMMAND}}) as h:
        yield h


def test_descending_uint32_counterpart_disagrees_with_buggy_target(adapter_harness):
    """End to end across the process boundary: the buggy toy library answers
    True, the torch counterpart answers False, and the comparison flags it."""
    x = ConcreteInput({"x": TensorValue.of([10, 9], DType.UINT32)})
    buggy = adapter_harness.call("toy-buggy", "is_nondecreasing", x)
    torch_side = adapter_harness.eval_program("torch-adapter", SORT_AND_COMPARE, x)
    assert buggy.outputs == (True,)
    assert torch_side.ok
    assert torch_side.outputs[0].to_numpy().item() is np.bool_(False).item()
    kind, dev = compare(buggy, torch_side, eps=0.1)
    assert kind == "inconsistent" and dev > 0.1


def test_dotted_api_call_through_adapter(adapter_harness):
    x = ConcreteInput({
        "input": TensorValue.of([1.0, -2.0], DType.FLOAT32),
    })
    outcome = adapter_harness.call("torch-adapter", "abs", x)
    assert outcome.ok
    assert outcome.outputs[0].to_numpy().tolist() == [1.0, 2.0]


def test_marshaling_bit_exact_through_worker(adapter_harness):
    payload = np.array([0x7FC00123, 0x3F800000], dtype=np.uint32).view(np.float32)
    x = ConcreteInput({"input": TensorValue.from_numpy(payload)})
    outcome = adapter_harness.call("torch-adapter", "clone", x)
    assert outcome.ok
    assert outcome.outputs[0].data == x.args["input"].data
