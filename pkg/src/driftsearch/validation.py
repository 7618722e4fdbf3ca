"""Validation results and the predicates the search makes over them.

A validation either succeeds, raises, or times out.  Everything here is a
pure function of immutable values so any validator backend (the in-process
simulator or the out-of-process executor) can share it.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .environment import EnvironmentSpec, Patch
from .errors import ContractViolation

if TYPE_CHECKING:
    from .universe import KnowledgeBase


class Status(enum.Enum):
    SUCCESS = "success"
    EXCEPTION = "exception"
    TIMEOUT = "timeout"


class Origin(enum.Enum):
    SNIPPET = "snippet"
    STDLIB = "stdlib"
    DEPENDENCY = "dependency"
    FILESYSTEM = "filesystem"


@dataclass(frozen=True)
class StackFrame:
    origin: Origin
    line: int = 1
    package: Optional[str] = None

    def __post_init__(self):
        if self.line < 1:
            raise ValueError("frame lines are 1-based")
        if (self.origin is Origin.DEPENDENCY) != (self.package is not None):
            raise ValueError("exactly the dependency frames name a package")

    def to_json(self) -> dict:
        out = {"origin": self.origin.value, "line": self.line}
        if self.package is not None:
            out["package"] = self.package
        return out

    @classmethod
    def from_json(cls, data: dict) -> "StackFrame":
        return cls(Origin(data["origin"]), int(data.get("line", 1)), data.get("package"))


@dataclass(frozen=True)
class ValidationResult:
    status: Status
    exception_name: Optional[str] = None
    exception_message: Optional[str] = None
    trace: tuple[StackFrame, ...] = ()
    snippet_line: Optional[int] = None
    install_failures: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "trace", tuple(self.trace))
        object.__setattr__(
            self, "install_failures", tuple((p, m) for p, m in self.install_failures)
        )
        if self.status is Status.EXCEPTION:
            if not self.exception_name or not self.trace:
                raise ContractViolation("an Exception result needs a name and a non-empty trace")
        elif self.status is Status.SUCCESS:
            if self.exception_name or self.exception_message or self.trace:
                raise ContractViolation("a Success result carries no exception data")
        if self.snippet_line is not None and self.snippet_line < 0:
            raise ContractViolation("snippet_line must be non-negative")

    @classmethod
    def success(cls, snippet_line: Optional[int] = None, install_failures=()) -> "ValidationResult":
        return cls(Status.SUCCESS, snippet_line=snippet_line, install_failures=install_failures)

    @classmethod
    def timeout(cls, snippet_line: Optional[int] = None, install_failures=()) -> "ValidationResult":
        return cls(Status.TIMEOUT, snippet_line=snippet_line, install_failures=install_failures)

    @property
    def progress(self) -> float:
        """How far execution got; success counts as covering the whole snippet."""
        if self.status is Status.SUCCESS:
            return math.inf
        return self.snippet_line or 0

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "exception_name": self.exception_name,
            "message": self.exception_message,
            "trace": [f.to_json() for f in self.trace],
            "snippet_line": self.snippet_line,
            "install_failures": [{"package": p, "message": m} for p, m in self.install_failures],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ValidationResult":
        failures = []
        for item in data.get("install_failures") or []:
            if isinstance(item, dict):
                failures.append((item["package"], item.get("message", "")))
            else:
                failures.append((item[0], item[1]))
        return cls(
            Status(data["status"]),
            data.get("exception_name"),
            data.get("message", data.get("exception_message")),
            tuple(StackFrame.from_json(f) for f in data.get("trace") or []),
            data.get("snippet_line"),
            tuple(failures),
        )


@dataclass(frozen=True)
class Checkpoint:
    """The latest unfixed failure and the mutations applied since it was seen."""

    result: ValidationResult
    env_at_checkpoint: str
    mutations_since: Patch = field(default_factory=Patch)

    def __post_init__(self):
        if self.result.status is not Status.EXCEPTION:
            raise ContractViolation("checkpoints are Exception results")


IMPORT_ERRORS = frozenset({"ImportError", "ModuleNotFoundError"})
FILESYSTEM_ERRORS = frozenset(
    {
        "FileNotFoundError",
        "PermissionError",
        "IsADirectoryError",
        "NotADirectoryError",
        "FileExistsError",
    }
)
API_BREAK_ERRORS = frozenset({"TypeError", "AttributeError"})

_NO_MODULE = re.compile(r"No module named '?([\w.]+)'?")
_CANNOT_IMPORT = re.compile(r"cannot import name '?(\w+)'? from '([\w.]+)'")


def _short_name(name: Optional[str]) -> str:
    return (name or "").rsplit(".", 1)[-1]


def missing_module(result: ValidationResult) -> Optional[str]:
    """The module an import error failed on, recovered from its message."""
    if _short_name(result.exception_name) not in IMPORT_ERRORS:
        return None
    message = result.exception_message or ""
    m = _CANNOT_IMPORT.search(message)
    if m:
        return m.group(2)
    m = _NO_MODULE.search(message)
    if m:
        return m.group(1)
    return None


def _installed_providers(
    result: ValidationResult, env: EnvironmentSpec, kb: Optional["KnowledgeBase"]
) -> set[str]:
    module = missing_module(result)
    if module is None or kb is None:
        return set()
    return set(kb.lookup(module) or ()) & set(env.packages)


def is_fixed(checkpoint: Optional[Checkpoint], fresh: ValidationResult) -> bool:
    """Did ``fresh`` get further through the snippet than the checkpoint failure?

    A missing snippet line counts as line 0.
    """
    if checkpoint is None:
        return False
    if fresh.status is Status.SUCCESS:
        return True
    if fresh.status is not Status.EXCEPTION:
        return False
    return fresh.progress > checkpoint.result.progress


def _require_exception(result: ValidationResult):
    if result.status is not Status.EXCEPTION:
        raise ContractViolation(f"expected an Exception result, got {result.status.value}")


def is_filesystem_failure(result: ValidationResult) -> bool:
    return _short_name(result.exception_name) in FILESYSTEM_ERRORS or any(
        f.origin is Origin.FILESYSTEM for f in result.trace
    )


def is_fixable(
    result: ValidationResult, env: EnvironmentSpec, kb: Optional["KnowledgeBase"] = None
) -> bool:
    """Could changing dependency versions plausibly repair this failure?"""
    _require_exception(result)
    if is_filesystem_failure(result):
        return False
    installed = set(env.packages)
    if any(f.origin is Origin.DEPENDENCY and f.package in installed for f in result.trace):
        return True
    if _installed_providers(result, env, kb):
        return True
    return _short_name(result.exception_name) in API_BREAK_ERRORS


def localize_fault(
    result: ValidationResult, env: EnvironmentSpec, kb: Optional["KnowledgeBase"] = None
) -> Optional[str]:
    """Map a failure to the single installed package most likely responsible."""
    _require_exception(result)
    installed = set(env.packages)
    raising = result.trace[-1]
    if raising.origin not in (Origin.SNIPPET, Origin.STDLIB):
        for frame in reversed(result.trace):
            if frame.origin is Origin.DEPENDENCY and frame.package in installed:
                return frame.package
    providers = _installed_providers(result, env, kb)
    if len(providers) == 1:
        return providers.pop()
    return None


SCRIPT_TIMEOUT = 60
NOTEBOOK_BASE_TIMEOUT = 120
NOTEBOOK_PER_CELL_TIMEOUT = 60


def timeout_budget(kind: str, cell_count: int = 0) -> int:
    """Execution time limit in seconds for a script or a notebook of ``cell_count`` cells."""
    if cell_count < 0:
        raise ValueError("cell_count must be non-negative")
    if kind == "script":
        return SCRIPT_TIMEOUT
    if kind == "notebook":
        return NOTEBOOK_BASE_TIMEOUT + NOTEBOOK_PER_CELL_TIMEOUT * cell_count
    raise ValueError(f"unknown snippet kind {kind!r}")
