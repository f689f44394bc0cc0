"""Reference worker: serves a toy library over the stdio wire protocol.

Used to exercise the subprocess execution path without real DL libraries
(`python -m difflens.worker --target toy-ref`). Real-library workers follow
the same protocol (see docs/protocol.md).
"""

from __future__ import annotations

import argparse
import os
import sys

from .harness import ExecRequest, TransportError, execute_toy, read_frame, write_frame
from .toylib import BUGGY, REFERENCE, ToyCrash
from .values import ConcreteInput, decode_value
from .values import TENSOR_DTYPES


def serve(target: str):
    library = {"toy-ref": REFERENCE, "toy-buggy": BUGGY}[target]
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    write_frame(stdout, {
        "op": "hello",
        "worker": library.name,
        "capabilities": {"dtypes": [d.value for d in TENSOR_DTYPES]},
    })
    while True:
        try:
            doc = read_frame(stdin)
        except EOFError:
            return
        except TransportError as exc:
            # header line already consumed; report and resynchronize
            write_frame(stdout, {"op": "error", "kind": "transport", "message": str(exc)})
            continue
        args = ConcreteInput({k: decode_value(v) for k, v in doc.get("args", {}).items()})
        request = ExecRequest(
            target=target,
            op=doc.get("op", "call"),
            callee=doc.get("callee"),
            program=doc.get("program"),
            args=args,
            timeout=float(doc.get("timeout", 10.0)),
        )
        try:
            outcome = execute_toy(request, library)
        except TransportError as exc:
            write_frame(stdout, {"op": "error", "kind": "transport", "message": str(exc)})
            continue
        if outcome.status == "crash":
            # surface simulated aborts as real process death in worker mode
            sys.stdout.flush()
            os.abort()
        write_frame(stdout, {"op": "outcome", "outcome": outcome.to_doc()})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="difflens-worker")
    parser.add_argument("--target", choices=["toy-ref", "toy-buggy"], required=True)
    args = parser.parse_args(argv)
    serve(args.target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
