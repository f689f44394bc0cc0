"""Wire-protocol worker serving a real tensor library.

Launch from a targets file as `python -m dl_adapter.worker --library torch`.
The worker answers `call` requests by resolving dotted API names in the host
library and `eval-program` requests by executing counterpart program text in
a restricted namespace exposing only that library. Host exceptions map to
exception outcomes; anything that kills the process is, by design, reported
as a crash by the managing engine.
"""

from __future__ import annotations

import argparse
import json
import sys

from .marshal import HOSTS, MarshalError, decode_value, encode_outputs

FRAME_MAGIC = "DLP1"

#: reserved exception class for names that do not resolve in the host library
RESOLUTION_ERROR = "ApiResolutionError"

RESTRICTED_BUILTINS = {
    "abs": abs, "min": min, "max": max, "len": len, "range": range,
    "sum": sum, "float": float, "int": int, "bool": bool, "True": True,
    "False": False,
}


class ProtocolError(ValueError):
    pass


def write_frame(stream, doc: dict):
    body = json.dumps(doc, sort_keys=True).encode("utf-8")
    stream.write(f"{FRAME_MAGIC} {len(body)}\n".encode("ascii"))
    stream.write(body)
    stream.flush()


def read_frame(stream) -> dict:
    header = stream.readline()
    if not header:
        raise EOFError
    try:
        magic, length = header.decode("ascii").split()
        if magic != FRAME_MAGIC:
            raise ValueError
        n = int(length)
    except ValueError:
        raise ProtocolError(f"bad frame header {header!r}") from None
    body = stream.read(n)
    if len(body) != n:
        raise EOFError
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"bad frame body: {exc}") from exc


def resolve_api(host, dotted: str):
    node = host.root()
    for part in dotted.split("."):
        node = getattr(node, part, None)
        if node is None:
            raise LookupError(dotted)
    if not callable(node):
        raise LookupError(dotted)
    return node


def evaluate_program(host, program: str, args: dict):
    namespace = dict(host.namespace())
    namespace["__builtins__"] = RESTRICTED_BUILTINS
    exec(compile(program, "<counterpart>", "exec"), namespace)
    fn = namespace.get("counterpart")
    if fn is None or not callable(fn):
        raise ValueError("program must define a function named `counterpart`")
    return fn(**args)


def handle(doc: dict, host) -> dict:
    op = doc.get("op")
    try:
        args = {name: decode_value(v, host) for name, v in doc.get("args", {}).items()}
    except MarshalError as exc:
        return {"status": "exception", "class": "MarshalError", "message": str(exc)}
    try:
        if op == "call":
            try:
                fn = resolve_api(host, doc.get("callee", ""))
            except LookupError as exc:
                return {"status": "exception", "class": RESOLUTION_ERROR,
                        "message": f"cannot resolve {exc}"}
            result = fn(**args)
        elif op == "eval-program":
            result = evaluate_program(host, doc.get("program", ""), args)
        else:
            raise ProtocolError(f"unknown request op {op!r}")
        return {"status": "ok", "outputs": encode_outputs(result, host)}
    except ProtocolError:
        raise
    except MarshalError as exc:
        return {"status": "exception", "class": "MarshalError", "message": str(exc)}
    except Exception as exc:
        return {"status": "exception", "class": type(exc).__name__, "message": str(exc)}


def serve(library: str):
    host = HOSTS[library]()
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    write_frame(stdout, {
        "op": "hello",
        "worker": f"dl-adapter[{library}]",
        "capabilities": {"dtypes": host.supported_dtypes()},
    })
    while True:
        try:
            doc = read_frame(stdin)
        except EOFError:
            return
        except ProtocolError as exc:
            write_frame(stdout, {"op": "error", "kind": "transport", "message": str(exc)})
            continue
        try:
            outcome = handle(doc, host)
        except ProtocolError as exc:
            write_frame(stdout, {"op": "error", "kind": "transport", "message": str(exc)})
            continue
        write_frame(stdout, {"op": "outcome", "outcome": outcome})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dl-adapter-worker")
    parser.add_argument("--library", choices=sorted(HOSTS), default="torch")
    args = parser.parse_args(argv)
    serve(args.library)
    return 0


if __name__ == "__main__":
    sys.exit(main())
