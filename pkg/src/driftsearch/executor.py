"""Client side of the line-delimited JSON executor protocol.

The executor is a child process that reads one request per line on stdin and
answers with one JSON object per line on stdout.  A reply that does not parse
is treated as a desync: the child is killed and relaunched once before the
request is retried.
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import subprocess
from typing import Optional, Sequence

from .environment import EnvironmentSpec
from .errors import BackendFailure, ContractViolation
from .validation import ValidationResult

log = logging.getLogger(__name__)

EXECUTOR_ENV_VAR = "V2_EXECUTOR_CMD"


def validate_request(snippet: str, env: EnvironmentSpec, timeout: float) -> dict:
    if timeout < 0:
        raise ValueError("timeout must be non-negative")
    return {
        "op": "validate",
        "snippet": str(snippet),
        "runtime": env.runtime,
        "deps": [[name, v.raw] for name, v in env.deps],
        "timeout": timeout,
    }


def detect_request(snippet: str) -> dict:
    return {"op": "detect", "snippet": str(snippet)}


def executor_command(explicit: Optional[str] = None) -> list[str]:
    cmd = explicit or os.environ.get(EXECUTOR_ENV_VAR, "")
    if not cmd.strip():
        raise BackendFailure(f"no executor configured; set {EXECUTOR_ENV_VAR}")
    return shlex.split(cmd)


class ExecutorClient:
    """One executor child process, restarted on desync or crash."""

    def __init__(self, command: Sequence[str], restarts: int = 1):
        self.command = list(command)
        self.restarts = restarts
        self.proc: Optional[subprocess.Popen] = None
        self.launches = 0

    def _start(self):
        self.close()
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendFailure(f"cannot launch executor {self.command}: {exc}") from exc
        self.launches += 1

    def _exchange(self, request: dict) -> dict:
        if self.proc is None or self.proc.poll() is not None:
            self._start()
        try:
            self.proc.stdin.write(json.dumps(request) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise _Desync(f"executor pipe closed: {exc}") from exc
        if not line:
            raise _Desync("executor closed its output")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _Desync(f"unparseable executor reply {line[:80]!r}") from exc
        if not isinstance(reply, dict):
            raise _Desync(f"executor reply is not an object: {line[:80]!r}")
        return reply

    def request(self, request: dict) -> dict:
        for attempt in range(self.restarts + 1):
            try:
                reply = self._exchange(request)
            except _Desync as exc:
                log.warning("executor desync (%s); restarting", exc)
                self.close()
                if attempt == self.restarts:
                    raise BackendFailure(str(exc)) from exc
                continue
            if "error" in reply and "status" not in reply:
                raise BackendFailure(f"executor error: {reply['error']}")
            return reply
        raise BackendFailure("executor unavailable")  # pragma: no cover

    def close(self):
        if self.proc is not None:
            try:
                self.proc.kill()
                self.proc.wait(timeout=5)
            except OSError:
                pass
            for stream in (self.proc.stdin, self.proc.stdout):
                if stream is not None:
                    stream.close()
            self.proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Desync(Exception):
    pass


class ExecutorValidator:
    """Validator callable that delegates each validation to the executor."""

    def __init__(self, snippet: str, timeout: float, client: ExecutorClient):
        self.snippet = snippet
        self.timeout = timeout
        self.client = client
        self.calls = 0

    def __call__(self, env: EnvironmentSpec) -> ValidationResult:
        self.calls += 1
        reply = self.client.request(validate_request(self.snippet, env, self.timeout))
        try:
            return ValidationResult.from_json(reply)
        except (KeyError, ValueError, TypeError, ContractViolation) as exc:
            raise BackendFailure(f"malformed validation reply: {exc}") from exc


def detect(client: ExecutorClient, snippet: str) -> tuple[list[str], list[str]]:
    """Runtime candidates and imports the executor found in ``snippet``."""
    reply = client.request(detect_request(snippet))
    try:
        runtimes = [str(r) for r in reply["runtimes"]]
        imports = [str(m) for m in reply["imports"]]
    except (KeyError, TypeError) as exc:
        raise BackendFailure(f"malformed detect reply: {exc}") from exc
    return runtimes, imports
