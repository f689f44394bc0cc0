from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parents[1] / "src"
sys.path.insert(0, str(SRC))

torch = pytest.importorskip("torch")


class WorkerProcess:
    """Tiny test client speaking raw frames to a spawned adapter worker."""

    def __init__(self, library: str = "torch"):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "dl_adapter.worker", "--library", library],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            env={"PYTHONPATH": str(SRC), "PATH": "/usr/bin:/bin"},
        )
        from dl_adapter.worker import read_frame

        self.hello = read_frame(self.proc.stdout)

    def request(self, doc: dict) -> dict:
        from dl_adapter.worker import read_frame, write_frame

        write_frame(self.proc.stdin, doc)
        return read_frame(self.proc.stdout)

    def send_raw(self, data: bytes):
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def read(self) -> dict:
        from dl_adapter.worker import read_frame

        return read_frame(self.proc.stdout)

    def close(self):
        self.proc.kill()
        self.proc.wait()


@pytest.fixture(scope="module")
def worker():
    w = WorkerProcess()
    yield w
    w.close()
