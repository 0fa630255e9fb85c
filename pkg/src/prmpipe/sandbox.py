"""Isolated execution of untrusted verification-code snippets.

Each snippet runs in a fresh interpreter subprocess with a throwaway working
directory, closed stdin, scrubbed environment, a wall-clock kill switch, and
best-effort guards against network use and writes outside the jail directory.
This is process-level isolation, not a container; don't point it at code you
expect to fight back.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

_BOOTSTRAP = r"""
import os, runpy, sys

_JAIL = os.path.realpath(os.getcwd())
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC

def _inside_jail(path):
    try:
        resolved = os.path.realpath(os.path.join(_JAIL, os.fsdecode(path)))
    except (TypeError, ValueError):
        return True
    return resolved == _JAIL or resolved.startswith(_JAIL + os.sep)

def _guard(event, args):
    if event != "open":
        return
    path, mode, flags = args
    if path is None or isinstance(path, int):
        return
    writing = False
    if mode is not None and any(c in str(mode) for c in "wax+"):
        writing = True
    if isinstance(flags, int) and flags & _WRITE_FLAGS:
        writing = True
    if writing and not _inside_jail(path):
        raise PermissionError("sandbox: write outside working directory blocked: %r" % (path,))

sys.addaudithook(_guard)

if os.environ.get("PRMPIPE_SANDBOX_NET") != "1":
    import socket

    def _no_network(*_args, **_kwargs):
        raise PermissionError("sandbox: network access disabled")

    socket.socket = _no_network
    socket.create_connection = _no_network

runpy.run_path(sys.argv[1], run_name="__main__")
"""


class SandboxConfigError(RuntimeError):
    """Interpreter missing or unusable; raised at construction, never per call."""


@dataclass(frozen=True)
class SandboxLimits:
    wall_clock_seconds: float = 10.0
    output_byte_cap: int = 8192
    network_allowed: bool = False

    def __post_init__(self) -> None:
        if self.wall_clock_seconds <= 0:
            raise ValueError("wall_clock_seconds must be > 0")
        if self.output_byte_cap <= 0:
            raise ValueError("output_byte_cap must be > 0")


@dataclass
class SandboxResult:
    """Captured run outcome; ``exit_status`` is None when the wall clock fired."""

    stdout: str
    stderr: str
    exit_status: int | None
    wall_time: float
    truncated: bool = False

    @property
    def timed_out(self) -> bool:
        return self.exit_status is None


def _truncate(raw: bytes, cap: int) -> tuple[str, bool]:
    truncated = len(raw) > cap
    return raw[:cap].decode("utf-8", errors="replace"), truncated


class CodeSandbox:
    """Runs snippets through a configurable interpreter command.

    Invocations are fully independent; any number may run concurrently.
    """

    def __init__(
        self,
        limits: SandboxLimits | None = None,
        interpreter: tuple[str, ...] | None = None,
    ) -> None:
        self.limits = limits or SandboxLimits()
        self.interpreter = interpreter or (sys.executable, "-I")
        resolved = shutil.which(self.interpreter[0])
        if resolved is None:
            raise SandboxConfigError(f"interpreter not found: {self.interpreter[0]}")

    def execute(self, code: str, limits: SandboxLimits | None = None) -> SandboxResult:
        if not code:
            raise ValueError("code must be non-empty")
        limits = limits or self.limits
        workdir = Path(tempfile.mkdtemp(prefix="prmpipe-sbx-"))
        try:
            script = workdir / "snippet.py"
            script.write_text(code, encoding="utf-8")
            env = {
                "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
                "HOME": str(workdir),
                "TMPDIR": str(workdir),
                "PYTHONDONTWRITEBYTECODE": "1",
            }
            if limits.network_allowed:
                env["PRMPIPE_SANDBOX_NET"] = "1"
            start = time.monotonic()
            try:
                proc = subprocess.run(
                    [*self.interpreter, "-c", _BOOTSTRAP, str(script)],
                    cwd=workdir,
                    env=env,
                    stdin=subprocess.DEVNULL,
                    capture_output=True,
                    timeout=limits.wall_clock_seconds,
                )
                wall = time.monotonic() - start
                stdout, out_trunc = _truncate(proc.stdout, limits.output_byte_cap)
                stderr, err_trunc = _truncate(proc.stderr, limits.output_byte_cap)
                return SandboxResult(
                    stdout=stdout,
                    stderr=stderr,
                    exit_status=proc.returncode,
                    wall_time=wall,
                    truncated=out_trunc or err_trunc,
                )
            except subprocess.TimeoutExpired as exc:
                wall = time.monotonic() - start
                stdout, out_trunc = _truncate(exc.stdout or b"", limits.output_byte_cap)
                stderr, err_trunc = _truncate(exc.stderr or b"", limits.output_byte_cap)
                return SandboxResult(
                    stdout=stdout,
                    stderr=stderr,
                    exit_status=None,
                    wall_time=wall,
                    truncated=out_trunc or err_trunc,
                )
        finally:
            shutil.rmtree(workdir, ignore_errors=True)


def execute(code: str, limits: SandboxLimits | None = None) -> SandboxResult:
    """One-shot execution with the default interpreter."""
    return CodeSandbox(limits=limits).execute(code)


def format_feedback(result: SandboxResult) -> str:
    """Execution feedback in the exact ``[Code output: ...]`` grammar.

    Successful runs carry stdout with the trailing newline stripped; failures
    carry a one-line summary (last stderr line, or "Timeout").
    """
    if result.timed_out:
        payload = "Timeout"
    elif result.exit_status == 0:
        payload = result.stdout.rstrip("\n")
    else:
        lines = [line for line in result.stderr.splitlines() if line.strip()]
        payload = lines[-1] if lines else f"exit status {result.exit_status}"
    return f"[Code output: {payload}]"
