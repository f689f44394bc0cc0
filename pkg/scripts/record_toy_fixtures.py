#!/usr/bin/env python3
"""Regenerate the bundled gateway fixtures for the toy campaign.

A scripted oracle answers every prompt the pipeline builds for the bundled
corpus; running the validate-inputs, synth, and extract stages against it
with capture enabled writes fixtures/<tag>/<digest>.txt, which the recorded
backend replays afterwards. Usage:

    python scripts/record_toy_fixtures.py [--fixtures FIXTURES_DIR]
"""

from __future__ import annotations

import argparse
import re
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from difflens.cli import stage_extract, stage_synth, stage_validate_inputs  # noqa: E402
from difflens.config import CampaignConfig  # noqa: E402
from difflens.gateway import CompletionRequest, Gateway, MockBackend, Tag  # noqa: E402
from difflens import cli  # noqa: E402


SEED_BLOCKS = {
    "is_nondecreasing": [
        "x = tensor([1, 2, 3], dtype=int32)",
        "x = tensor([0, 1, 1, 4], dtype=int32)",
        "x = tensor([2, 5], dtype=int32)",
    ],
    "bincount": [
        "arr = tensor([0, 0, 0], dtype=int32)\nsize = 8\nweights = tensor([1.0, 1.0, 1.0], dtype=float32)",
        "arr = tensor([0], dtype=int32)\nsize = 8\nweights = tensor([1.0], dtype=float32)",
        "arr = tensor([0, 0], dtype=int32)\nsize = 6\nweights = tensor([0.5, 0.5], dtype=float32)",
    ],
    "matrix_diag_v2": [
        "diagonal = tensor([1.0, 2.0, 3.0], dtype=float32)\nk = tensor([0], dtype=int32)\nnum_rows = -1\nnum_cols = -1",
        "diagonal = tensor([1.0, 2.0], dtype=float32)\nk = tensor([0], dtype=int32)\nnum_rows = -1\nnum_cols = -1",
        "diagonal = tensor([4.0, 5.0, 6.0, 7.0], dtype=float32)\nk = tensor([0], dtype=int32)\nnum_rows = 4\nnum_cols = 4",
    ],
    "pad": [
        "x = tensor([1.0, 2.0], dtype=float32)\npad_amount = 1",
        # deliberately invalid: exercises the one-shot self-debug round
        "x = tensor([1.0], dtype=float32)\npad_amount = -1",
        "x = tensor([[1.0, 2.0], [3.0, 4.0]], dtype=float32)\npad_amount = 2",
    ],
    "reduce_sum": [
        "x = tensor([[1.0, 2.0], [3.0, 4.0]], dtype=float32)\naxis = 0",
        "x = tensor([1.0, 2.0, 3.0], dtype=float32)\naxis = 0",
        "x = tensor([[1.0], [2.0]], dtype=float32)\naxis = 1",
    ],
    "elementwise_less": [
        "x = tensor([1.0, 2.0], dtype=float32)\ny = tensor([2.0, 1.0], dtype=float32)",
        "x = tensor([0.0], dtype=float32)\ny = tensor([1.0], dtype=float32)",
        "x = tensor([[1.0, 5.0]], dtype=float32)\ny = tensor([[2.0, 2.0]], dtype=float32)",
    ],
    "scatter_add": [
        "indices = tensor([0, 1], dtype=int32)\nupdates = tensor([1.0, 2.0], dtype=float32)\nsize = 4",
        "indices = tensor([0], dtype=int32)\nupdates = tensor([3.0], dtype=float32)\nsize = 2",
        "indices = tensor([2, 2], dtype=int32)\nupdates = tensor([1.0, 1.0], dtype=float32)\nsize = 3",
    ],
    "broadcast_add": [
        "x = tensor([1.0, 2.0], dtype=float32)\ny = tensor([3.0, 4.0], dtype=float32)",
        "x = tensor([1.0], dtype=float32)\ny = tensor([5.0, 6.0], dtype=float32)",
        "x = tensor([[1.0, 2.0]], dtype=float32)\ny = tensor([[2.0, 2.0]], dtype=float32)",
    ],
}

SELF_DEBUG_BLOCKS = {
    "pad": "x = tensor([1.0], dtype=float32)\npad_amount = 0",
}

from difflens.toylib import REFERENCE_COUNTERPARTS  # noqa: E402

COUNTERPARTS = REFERENCE_COUNTERPARTS

# first synthesis attempt for this API is deliberately broken so the
# feedback/refinement loop is exercised end to end
BROKEN_FIRST = {
    "is_nondecreasing": (
        "def counterpart(x):\n"
        "    s = ref.sort_descending(x)\n"
        "    return ref.all_true(ref.equal(x, s))"
    ),
}


def infer_reply(condition: str, trace: str) -> str | None:
    if condition == "diag_index.num_element > 0":
        return "k.num_element > 0"
    if condition == "diag_index.shape[0] > 1":
        return "k.shape[0] > 1"
    if condition == "not diag_index.shape[0] > 1":
        return "k.shape[0] <= 1"
    if condition.startswith("num_rows"):
        bound = "k.value_max" if "diag_index.value_max" in trace else "k.value_min"
        return f"num_rows == -1 or num_rows >= diagonal.shape[-1] - min({bound}, 0)"
    if condition.startswith("num_cols"):
        return "num_cols == -1 or num_cols >= diagonal.shape[-1] + max(k.value_min, 0)"
    if condition == "low >= 0" and "reduce_min(arr)" in trace:
        return "arr.value_min >= 0"
    if condition == "low >= 0" and "reduce_min(indices)" in trace:
        return "indices.value_min >= 0"
    if condition == "high < size":
        return "indices.value_max < size"
    if condition == "IsVector(x)":
        return "x.ndims == 1"
    if condition == "not IsVector(x)":
        return "x.ndims != 1"
    return None


def _section(prompt: str, header: str) -> str:
    m = re.search(rf"\[{header}\]\n(.*?)(?:\n\[|\Z)", prompt, re.DOTALL)
    return m.group(1).strip() if m else ""


class ScriptedOracle:
    """Deterministic stand-in for a live model, good for the bundled corpus."""

    def __init__(self):
        self.synth_seen: set[str] = set()

    def __call__(self, request: CompletionRequest) -> str | None:
        tag = request.tag
        first = request.messages[0][1]
        last = request.messages[-1][1]
        if tag is Tag.VALIDATE_INPUT:
            api = self._api_from_call(first)
            m = re.search(r"Sample (\d+) of", first)
            if api in SEED_BLOCKS and m:
                block = SEED_BLOCKS[api][int(m.group(1)) - 1]
                return f"Here is a valid input.\n```\n{block}\n```"
        if tag is Tag.SELF_DEBUG:
            api = self._api_from_call(first)
            if api in SELF_DEBUG_BLOCKS:
                return f"Repaired input:\n```\n{SELF_DEBUG_BLOCKS[api]}\n```"
        if tag is Tag.INFER_CONSTRAINT:
            condition = _section(first, "Condition")
            trace = _section(first, "Execution Trace")
            reply = infer_reply(condition, trace)
            if reply is not None:
                return ("The external calls only constrain basic properties "
                        f"of the inputs. Proposed constraint: `{reply}`")
        if tag is Tag.SELF_VALIDATE:
            condition = _section(first, "Condition")
            trace = _section(first, "Execution Trace")
            reply = infer_reply(condition, trace)
            if reply is not None:
                return f"The analysis holds.\n```\n{reply}\n```"
        if tag is Tag.SYNTHESIZE:
            api = self._api_from_backtick(first)
            if api in COUNTERPARTS:
                program = BROKEN_FIRST.get(api) if api not in self.synth_seen else None
                self.synth_seen.add(api)
                body = program or COUNTERPARTS[api]
                return f"Counterpart:\n```\n{body}\n```"
        if tag is Tag.REFINE:
            api = self._api_from_backtick(first)
            if api in COUNTERPARTS:
                return f"Corrected version:\n```\n{COUNTERPARTS[api]}\n```"
        return None

    @staticmethod
    def _api_from_call(prompt: str) -> str:
        m = re.search(r"the call (\w+)\(", prompt)
        return m.group(1) if m else ""

    @staticmethod
    def _api_from_backtick(prompt: str) -> str:
        m = re.search(r"`(\w+)\(", prompt)
        return m.group(1) if m else ""


def record(fixtures_dir: Path) -> None:
    if fixtures_dir.exists():
        shutil.rmtree(fixtures_dir)
    fixtures_dir.mkdir(parents=True)
    oracle = ScriptedOracle()
    gateway = Gateway(MockBackend(script=oracle), capture_dir=fixtures_dir)

    original = cli._gateway
    cli._gateway = lambda cfg: gateway
    try:
        with tempfile.TemporaryDirectory() as scratch:
            cfg = CampaignConfig(
                corpus_dir=REPO / "corpus",
                fixtures_dir=fixtures_dir,
                backend="mock",
                seed=42,
                out_dir=Path(scratch),
            )
            stage_validate_inputs(cfg)
            stage_synth(cfg)
            stage_extract(cfg)
    finally:
        cli._gateway = original
    count = sum(1 for _ in fixtures_dir.rglob("*.txt"))
    print(f"recorded {count} fixtures under {fixtures_dir}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--fixtures", type=Path, default=REPO / "fixtures")
    record(parser.parse_args().fixtures)
