"""Environment configurations and the mutations that move between them."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional

from .errors import ContractViolation, StaleMutation
from .semver import Version, as_version

if TYPE_CHECKING:
    from .universe import PackageIndex
    from .validation import ValidationResult


@dataclass(frozen=True)
class EnvironmentSpec:
    """A ``(runtime, dependencies)`` tuple; ``deps`` is in install order."""

    runtime: str
    deps: tuple[tuple[str, Version], ...] = ()
    origin: str = ""

    def __post_init__(self):
        deps = tuple((name, as_version(v)) for name, v in self.deps)
        object.__setattr__(self, "deps", deps)
        object.__setattr__(self, "runtime", str(self.runtime))
        names = [name for name, _ in deps]
        if len(set(names)) != len(names):
            raise ValueError(f"package pinned twice in {names}")

    @property
    def packages(self) -> list[str]:
        return [name for name, _ in self.deps]

    def pins(self) -> dict[str, Version]:
        return dict(self.deps)

    def pin(self, package: str) -> Optional[Version]:
        for name, version in self.deps:
            if name == package:
                return version
        return None

    def __contains__(self, package: str) -> bool:
        return self.pin(package) is not None

    def describe(self) -> str:
        pins = ", ".join(f"{n}=={v}" for n, v in self.deps)
        return f"py{self.runtime} [{pins}]"

    def to_json(self) -> dict:
        return {
            "runtime": self.runtime,
            "deps": [[name, v.raw] for name, v in self.deps],
            "origin": self.origin,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EnvironmentSpec":
        return cls(data["runtime"], tuple((n, v) for n, v in data["deps"]), data.get("origin", ""))


class MutationOp(enum.Enum):
    MAJOR = "DecrementSemverMajor"
    MINOR = "DecrementSemverMinor"
    JUMP = "MatrixJump"


@dataclass(frozen=True)
class Mutation:
    op: MutationOp
    package: str
    from_version: Version
    to_version: Version

    def __post_init__(self):
        object.__setattr__(self, "from_version", as_version(self.from_version))
        object.__setattr__(self, "to_version", as_version(self.to_version))
        if not self.to_version < self.from_version:
            raise ContractViolation(
                f"{self.op.value}({self.package}) must downgrade: "
                f"{self.from_version} -> {self.to_version}"
            )

    def __str__(self):
        return f"{self.op.value}({self.package}=={self.from_version}) -> {self.to_version}"

    def to_json(self) -> dict:
        return {
            "op": self.op.value,
            "package": self.package,
            "from": self.from_version.raw,
            "to": self.to_version.raw,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Mutation":
        return cls(MutationOp(data["op"]), data["package"], data["from"], data["to"])


@dataclass(frozen=True)
class Patch:
    mutations: tuple[Mutation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mutations", tuple(self.mutations))

    def __len__(self):
        return len(self.mutations)

    def __iter__(self):
        return iter(self.mutations)

    def __add__(self, other: "Patch") -> "Patch":
        return Patch(self.mutations + tuple(other))

    def apply(self, env: EnvironmentSpec, index: Optional["PackageIndex"] = None) -> EnvironmentSpec:
        for m in self.mutations:
            env = apply_mutation(env, m, index)
        return env

    def to_json(self) -> list:
        return [m.to_json() for m in self.mutations]


@dataclass(frozen=True)
class DriftInstance:
    """A failure paired with the patch that got execution past it."""

    checkpoint: "ValidationResult"
    patch: Patch
    validations_spent: int
    localized_package: Optional[str] = None
    checkpoint_env: Optional[EnvironmentSpec] = field(default=None, compare=False)

    def __post_init__(self):
        from .validation import Status

        if self.checkpoint.status is not Status.EXCEPTION:
            raise ContractViolation("a drift checkpoint must be an Exception result")
        if not len(self.patch):
            raise ContractViolation("a drift patch must contain at least one mutation")

    def signature(self) -> tuple:
        c = self.checkpoint
        return (c.exception_name, c.exception_message, c.snippet_line, self.patch.mutations)

    def to_json(self, snippet: str = "") -> dict:
        return {
            "snippet": snippet,
            "checkpoint": self.checkpoint.to_json(),
            "patch": self.patch.to_json(),
            "validations": self.validations_spent,
            "localized_package": self.localized_package,
            "environment": self.checkpoint_env.to_json() if self.checkpoint_env else None,
        }


def apply_mutation(
    env: EnvironmentSpec, m: Mutation, index: Optional["PackageIndex"] = None
) -> EnvironmentSpec:
    """Replace ``m.package``'s pin.

    With an ``index`` the environment is re-resolved for the new pin: packages
    the new version requires are added at their latest release and the
    install order is recomputed.  Existing packages are never dropped.
    """
    if env.pin(m.package) != m.from_version:
        raise StaleMutation(
            f"{m.package} is pinned at {env.pin(m.package)}, mutation expects {m.from_version}"
        )
    pins = env.pins()
    pins[m.package] = m.to_version
    if index is None:
        deps = tuple((n, pins[n]) for n, _ in env.deps)
        return EnvironmentSpec(env.runtime, deps, env.origin)
    return reresolve(env.runtime, pins, index, env.origin)


def reresolve(runtime: str, pins: dict, index: "PackageIndex", origin: str = "") -> EnvironmentSpec:
    from .universe import install_order, transitive_closure

    packages = transitive_closure(pins, index, pins)
    full = {p: pins.get(p) or index.latest(p) for p in packages}
    order = install_order(packages, index, full).packages
    return EnvironmentSpec(runtime, tuple((p, full[p]) for p in order), origin)


def canonical_key(env: EnvironmentSpec) -> str:
    """Order-insensitive identity of an environment configuration."""
    pins = ",".join(f"{name}=={v.raw}" for name, v in sorted(env.deps, key=lambda d: d[0]))
    return f"py{env.runtime}|{pins}"


def distance(patch: Iterable[Mutation]) -> int:
    """Path length of a patch; every step is a strict downgrade so nothing cancels out."""
    return len(tuple(patch))
