"""Target-execution boundary.

Toy targets run in-process and deterministically; external targets are served
by one worker subprocess each, speaking length-prefixed JSON frames over
stdio (grammar in docs/protocol.md). Worker death is reported as a crash
outcome, never conflated with protocol errors, and the worker is restarted
for the next request.
"""

from __future__ import annotations

import json
import shlex
import signal
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .values import ConcreteInput, TensorValue, Value, decode_value, encode_value
from .toylib import BUGGY, REFERENCE, ToyCrash, ToyLibrary

FRAME_MAGIC = "DLP1"
DEFAULT_TIMEOUT = 10.0


class TransportError(RuntimeError):
    """Wire-protocol violation or broken channel; distinct from target crashes."""


@dataclass(frozen=True)
class ExecRequest:
    target: str
    op: str  # "call" | "eval-program"
    callee: str | None = None
    program: str | None = None
    args: ConcreteInput | None = None
    timeout: float = DEFAULT_TIMEOUT

    def payload(self) -> dict:
        doc = {"op": self.op, "timeout": self.timeout}
        if self.callee is not None:
            doc["callee"] = self.callee
        if self.program is not None:
            doc["program"] = self.program
        if self.args is not None:
            doc["args"] = {k: encode_value(v) for k, v in self.args.args.items()}
        return doc


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str  # ok | exception | crash | timeout
    outputs: tuple[Value, ...] = ()
    exc_class: str = ""
    message: str = ""
    descriptor: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_doc(self) -> dict:
        doc: dict = {"status": self.status}
        if self.status == "ok":
            doc["outputs"] = [encode_value(v) for v in self.outputs]
        elif self.status == "exception":
            doc["class"] = self.exc_class
            doc["message"] = self.message
        elif self.status in ("crash", "timeout"):
            doc["descriptor"] = self.descriptor
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "ExecutionOutcome":
        status = doc["status"]
        if status == "ok":
            return cls("ok", outputs=tuple(decode_value(v) for v in doc.get("outputs", ())))
        if status == "exception":
            return cls("exception", exc_class=doc.get("class", ""), message=doc.get("message", ""))
        return cls(status, descriptor=doc.get("descriptor", ""))


# ---------------------------------------------------------------------------
# Value marshaling for the toy libraries
# ---------------------------------------------------------------------------

def to_host(v: Value):
    if isinstance(v, TensorValue):
        return v.to_numpy()
    if isinstance(v, tuple):
        return list(v)
    return v


def from_host(result) -> tuple[Value, ...]:
    """Normalize an operation result into a tuple of wire values."""
    if isinstance(result, tuple):
        return tuple(_one_from_host(r) for r in result)
    return (_one_from_host(result),)


def _one_from_host(r) -> Value:
    if isinstance(r, bool):
        return r
    if isinstance(r, (int, float, str)):
        return r
    if isinstance(r, np.bool_):
        return bool(r)
    if isinstance(r, np.integer):
        return int(r)
    if isinstance(r, np.floating):
        return float(r)
    arr = np.asarray(r)
    if arr.dtype == np.complex128:
        arr = arr.astype(np.complex64)
    if arr.dtype == np.uint64:
        arr = arr.astype(np.int64)
    return TensorValue.from_numpy(arr)


RESTRICTED_BUILTINS = {
    "abs": abs, "min": min, "max": max, "len": len, "range": range,
    "sum": sum, "float": float, "int": int, "bool": bool, "True": True,
    "False": False,
}


def evaluate_program(program: str, args: dict, library: ToyLibrary):
    """Run a counterpart program in a namespace exposing only the library."""
    namespace = {"ref": library, "__builtins__": RESTRICTED_BUILTINS}
    exec(compile(program, "<counterpart>", "exec"), namespace)
    fn = namespace.get("counterpart")
    if fn is None or not callable(fn):
        raise ValueError("program must define a function named `counterpart`")
    return fn(**args)


def execute_toy(request: ExecRequest, library: ToyLibrary) -> ExecutionOutcome:
    host_args = {k: to_host(v) for k, v in (request.args.args if request.args else {}).items()}
    try:
        if request.op == "call":
            fn = library.resolve(request.callee or "")
            result = fn(**host_args)
        elif request.op == "eval-program":
            result = evaluate_program(request.program or "", host_args, library)
        else:
            raise TransportError(f"unknown request op {request.op!r}")
        return ExecutionOutcome("ok", outputs=from_host(result))
    except ToyCrash as exc:
        return ExecutionOutcome("crash", descriptor=exc.descriptor)
    except TransportError:
        raise
    except Exception as exc:
        return ExecutionOutcome("exception", exc_class=type(exc).__name__, message=str(exc))


# ---------------------------------------------------------------------------
# Wire framing
# ---------------------------------------------------------------------------

def write_frame(stream, doc: dict):
    body = json.dumps(doc, sort_keys=True).encode("utf-8")
    stream.write(f"{FRAME_MAGIC} {len(body)}\n".encode("ascii"))
    stream.write(body)
    stream.flush()


def read_frame(stream) -> dict:
    header = stream.readline()
    if not header:
        raise EOFError("channel closed")
    try:
        magic, length = header.decode("ascii").split()
        if magic != FRAME_MAGIC:
            raise ValueError
        n = int(length)
    except ValueError:
        raise TransportError(f"bad frame header {header!r}") from None
    body = stream.read(n)
    if len(body) != n:
        raise EOFError("short frame body")
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise TransportError(f"bad frame body: {exc}") from exc


# ---------------------------------------------------------------------------
# Worker subprocesses
# ---------------------------------------------------------------------------

@dataclass
class WorkerHandle:
    """One target worker; restarted after a crash, reused across requests."""

    name: str
    command: list[str]
    process: subprocess.Popen | None = None
    capabilities: dict = field(default_factory=dict)

    def ensure_started(self, timeout: float = DEFAULT_TIMEOUT):
        if self.process is not None and self.process.poll() is None:
            return
        self.process = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        hello = read_frame(self.process.stdout)
        if hello.get("op") != "hello":
            raise TransportError(f"worker {self.name} sent no hello frame")
        self.capabilities = hello.get("capabilities", {})

    def stop(self):
        if self.process is not None and self.process.poll() is None:
            self.process.kill()
            self.process.wait()
        self.process = None

    def request(self, req: ExecRequest) -> ExecutionOutcome:
        self.ensure_started()
        proc = self.process
        assert proc is not None
        try:
            write_frame(proc.stdin, req.payload())
        except (BrokenPipeError, OSError):
            return self._death_outcome()
        deadline = time.monotonic() + req.timeout
        # the reply is a single frame; poll the pipe with the deadline
        import selectors

        sel = selectors.DefaultSelector()
        sel.register(proc.stdout, selectors.EVENT_READ)
        buffered = b""
        try:
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self.stop()
                    return ExecutionOutcome("timeout", descriptor=f"exceeded {req.timeout}s")
                if not sel.select(timeout=min(remaining, 0.25)):
                    if proc.poll() is not None:
                        return self._death_outcome()
                    continue
                try:
                    doc = read_frame(proc.stdout)
                except EOFError:
                    return self._death_outcome()
                if doc.get("op") == "outcome":
                    return ExecutionOutcome.from_doc(doc["outcome"])
                raise TransportError(f"unexpected frame from worker {self.name}")
        finally:
            sel.close()

    def _death_outcome(self) -> ExecutionOutcome:
        proc = self.process
        self.process = None
        if proc is None:
            return ExecutionOutcome("crash", descriptor="worker vanished")
        code = proc.wait()
        if code < 0:
            try:
                name = signal.Signals(-code).name
            except ValueError:
                name = f"signal {-code}"
            return ExecutionOutcome("crash", descriptor=f"worker killed by {name}")
        return ExecutionOutcome("crash", descriptor=f"worker exited with status {code}")


# ---------------------------------------------------------------------------
# Harness facade
# ---------------------------------------------------------------------------

BUILTIN_TARGETS = {"toy-ref": REFERENCE, "toy-buggy": BUGGY}


class Harness:
    """Routes requests to in-process toy targets or subprocess workers.

    `targets` maps a target name to either {"builtin": "toy-ref"} or
    {"command": "..."} (a worker launch command, shell-split).
    """

    def __init__(self, targets: dict[str, dict] | None = None):
        self.targets = dict(targets or {})
        self.targets.setdefault("toy-ref", {"builtin": "toy-ref"})
        self.targets.setdefault("toy-buggy", {"builtin": "toy-buggy"})
        self._workers: dict[str, WorkerHandle] = {}

    def close(self):
        for worker in self._workers.values():
            worker.stop()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def execute(self, request: ExecRequest) -> ExecutionOutcome:
        spec = self.targets.get(request.target)
        if spec is None:
            raise TransportError(f"unknown target {request.target!r}")
        if "builtin" in spec:
            return execute_toy(request, BUILTIN_TARGETS[spec["builtin"]])
        worker = self._workers.get(request.target)
        if worker is None:
            command = spec["command"]
            if isinstance(command, str):
                command = shlex.split(command)
            worker = WorkerHandle(request.target, list(command))
            self._workers[request.target] = worker
        return worker.request(request)

    def call(self, target: str, callee: str, args: ConcreteInput,
             timeout: float = DEFAULT_TIMEOUT) -> ExecutionOutcome:
        return self.execute(ExecRequest(target, "call", callee=callee, args=args, timeout=timeout))

    def eval_program(self, target: str, program: str, args: ConcreteInput,
                     timeout: float = DEFAULT_TIMEOUT) -> ExecutionOutcome:
        return self.execute(ExecRequest(target, "eval-program", program=program,
                                        args=args, timeout=timeout))


def load_targets_config(path: str | Path) -> dict[str, dict]:
    """targets.toml: one [targets.<name>] table per worker with a `command`."""
    from . import _toml as tomllib

    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return dict(doc.get("targets", {}))
