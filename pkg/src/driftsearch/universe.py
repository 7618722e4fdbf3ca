"""Package index, knowledge base, and candidate environment generation."""

from __future__ import annotations

import heapq
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional

from .environment import EnvironmentSpec
from .errors import MissingPackage
from .semver import ReleaseHistory, Version, as_version, latest_version, parse_version

log = logging.getLogger(__name__)

RUNTIMES = ("2", "3")


@dataclass(frozen=True)
class PackageEntry:
    history: ReleaseHistory
    deps: Mapping[Version, tuple[str, ...]]


@dataclass(frozen=True)
class PackageIndex:
    packages: Mapping[str, PackageEntry]

    def __contains__(self, package: str) -> bool:
        return package in self.packages

    def history(self, package: str) -> ReleaseHistory:
        try:
            return self.packages[package].history
        except KeyError:
            raise MissingPackage(f"package {package!r} is not in the index") from None

    def latest(self, package: str) -> Version:
        return latest_version(self.history(package))

    def deps_of(self, package: str, version: Version) -> tuple[str, ...]:
        entry = self.packages.get(package)
        if entry is None:
            raise MissingPackage(f"package {package!r} is not in the index")
        return entry.deps.get(version, ())

    def missing_edges(self) -> list[tuple[str, str]]:
        """Dependency edges naming packages absent from the index."""
        return sorted(
            {
                (name, dep)
                for name, entry in self.packages.items()
                for deps in entry.deps.values()
                for dep in deps
                if dep not in self.packages
            }
        )

    @classmethod
    def from_json(cls, data: dict, include_prerelease: bool = False) -> "PackageIndex":
        packages = {}
        for name, body in data.get("packages", {}).items():
            deps = {}
            texts = []
            for rel in body.get("releases", []):
                text = rel["version"]
                try:
                    version = parse_version(text)
                except ValueError:
                    log.warning("%s: dropping unparseable release %r", name, text)
                    continue
                if version in deps:
                    log.warning("%s: duplicate release %s ignored", name, text)
                    continue
                deps[version] = tuple(d["name"] if isinstance(d, dict) else d for d in rel.get("deps", []))
                texts.append(text)
            history = ReleaseHistory.from_strings(name, texts, include_prerelease)
            packages[name] = PackageEntry(history, deps)
        return cls(packages)

    def to_json(self) -> dict:
        return {
            "packages": {
                name: {
                    "releases": [
                        {"version": v.raw, "deps": [{"name": d} for d in entry.deps.get(v, ())]}
                        for v in entry.history
                    ]
                }
                for name, entry in sorted(self.packages.items())
            }
        }


@dataclass(frozen=True)
class KnowledgeBase:
    module_map: Mapping[str, frozenset[str]]
    stdlib: frozenset[str] = frozenset()

    def __post_init__(self):
        for module, pkgs in self.module_map.items():
            if not pkgs:
                raise ValueError(f"knowledge base maps {module!r} to no package")

    def is_stdlib(self, module: str) -> bool:
        return module in self.stdlib or module.split(".")[0] in self.stdlib

    def lookup(self, module: str) -> Optional[frozenset[str]]:
        """Candidate packages for the longest mapped prefix of ``module``."""
        parts = module.split(".")
        for end in range(len(parts), 0, -1):
            hit = self.module_map.get(".".join(parts[:end]))
            if hit:
                return hit
        return None

    @classmethod
    def from_json(cls, data: dict) -> "KnowledgeBase":
        return cls(
            {mod: frozenset(pkgs) for mod, pkgs in data.get("modules", {}).items()},
            frozenset(data.get("stdlib", [])),
        )

    def to_json(self) -> dict:
        return {
            "modules": {m: sorted(p) for m, p in sorted(self.module_map.items())},
            "stdlib": sorted(self.stdlib),
        }


@dataclass(frozen=True)
class SnippetManifest:
    snippet_id: str
    kind: str = "script"
    cell_count: int = 0
    imports: tuple[str, ...] = ()
    runtime_candidates: tuple[str, ...] = ("3",)

    def __post_init__(self):
        object.__setattr__(self, "imports", tuple(self.imports))
        object.__setattr__(
            self, "runtime_candidates", tuple(sorted({str(r) for r in self.runtime_candidates}))
        )
        if self.kind not in ("script", "notebook"):
            raise ValueError(f"unknown snippet kind {self.kind!r}")
        if self.kind == "script" and self.cell_count != 0:
            raise ValueError("scripts have no cells")
        if self.cell_count < 0:
            raise ValueError("cell_count must be non-negative")
        if not self.runtime_candidates:
            raise ValueError("manifest needs at least one runtime candidate")
        bad = set(self.runtime_candidates) - set(RUNTIMES)
        if bad:
            raise ValueError(f"unknown runtime levels {sorted(bad)}")

    @classmethod
    def from_json(cls, data: dict) -> "SnippetManifest":
        return cls(
            snippet_id=data["snippet_id"],
            kind=data.get("kind", "script"),
            cell_count=int(data.get("cell_count", 0)),
            imports=tuple(data.get("imports", [])),
            runtime_candidates=tuple(data.get("runtime_candidates", ["3"])),
        )

    def to_json(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "kind": self.kind,
            "cell_count": self.cell_count,
            "imports": list(self.imports),
            "runtime_candidates": list(self.runtime_candidates),
        }


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_index(path, include_prerelease: bool = False) -> PackageIndex:
    return PackageIndex.from_json(load_json(path), include_prerelease)


def load_knowledge_base(path) -> KnowledgeBase:
    return KnowledgeBase.from_json(load_json(path))


def load_manifest(path) -> SnippetManifest:
    return SnippetManifest.from_json(load_json(path))


# --- import extraction -------------------------------------------------------

_DOTTED = r"[A-Za-z_][\w]*(?:\.[A-Za-z_][\w]*)*"
_IMPORT_RE = re.compile(r"^\s*import\s+(.+)$")
_FROM_RE = re.compile(rf"^\s*from\s+({_DOTTED})\s+import\s+(.+)$")
_ALIASED_RE = re.compile(rf"^({_DOTTED})(?:\s+as\s+[A-Za-z_]\w*)?$")


def _split_names(clause: str) -> Optional[list[str]]:
    clause = clause.strip()
    if clause.startswith("("):
        if not clause.endswith(")"):
            return None
        clause = clause[1:-1]
    names = []
    for item in clause.split(","):
        item = item.strip()
        if not item:
            continue
        m = _ALIASED_RE.match(item)
        if m is None:
            return None
        names.append(m.group(1))
    return names


def _logical_lines(source: str) -> Iterable[str]:
    pending = None
    for line in source.splitlines():
        line = line.split("#", 1)[0].rstrip()
        if pending is not None:
            pending += " " + line.strip()
            if ")" in line:
                yield pending
                pending = None
            continue
        if line.lstrip().startswith("from ") and "(" in line and ")" not in line:
            pending = line
            continue
        yield line
    if pending is not None:
        yield pending


def extract_imports(source_text: str) -> list[str]:
    """Fully-qualified names from ``import``/``from ... import`` statements.

    Lines outside the restricted grammar are skipped.  For ``from a import b``
    both ``a.b`` and ``a`` are reported since ``b`` may be a module or a member.
    """
    found: dict[str, None] = {}
    for line in _logical_lines(source_text):
        m = _FROM_RE.match(line)
        if m:
            base, clause = m.groups()
            if clause.strip() == "*":
                found.setdefault(base)
                continue
            names = _split_names(clause)
            if names is None:
                continue
            for name in names:
                found.setdefault(f"{base}.{name}")
                found.setdefault(base)
            continue
        m = _IMPORT_RE.match(line)
        if m:
            names = _split_names(m.group(1))
            for name in names or ():
                found.setdefault(name)
    return list(found)


# --- dependency resolution ----------------------------------------------------


def resolve_direct_dependencies(imports: Iterable[str], kb: KnowledgeBase) -> set[str]:
    """Packages that may provide the non-stdlib ``imports`` (possibly an overestimate)."""
    packages: set[str] = set()
    for module in imports:
        if kb.is_stdlib(module):
            continue
        hit = kb.lookup(module)
        if hit:
            packages |= hit
    return packages


def unmapped_modules(imports: Iterable[str], kb: KnowledgeBase) -> list[str]:
    return [m for m in imports if not kb.is_stdlib(m) and kb.lookup(m) is None]


def _pin(index: PackageIndex, pins: Optional[Mapping[str, Version]], package: str) -> Version:
    if pins and package in pins:
        return pins[package]
    return index.latest(package)


def transitive_closure(
    direct: Iterable[str], index: PackageIndex, pins: Optional[Mapping[str, Version]] = None
) -> set[str]:
    """Least fixed point of the pinned-version dependency relation over ``direct``."""
    seen: set[str] = set()
    stack = list(direct)
    while stack:
        package = stack.pop()
        if package in seen:
            continue
        if package not in index:
            raise MissingPackage(f"package {package!r} is not in the index")
        seen.add(package)
        for dep in index.deps_of(package, _pin(index, pins, package)):
            if dep not in index:
                raise MissingPackage(f"{package} depends on {dep!r}, which is not in the index")
            if dep not in seen:
                stack.append(dep)
    return seen


class InstallOrder(NamedTuple):
    packages: list[str]
    # (dependent, dependency) pairs whose ordering constraint was dropped
    broken_edges: list[tuple[str, str]]


def _strongly_connected(nodes: set[str], edges: Mapping[str, set[str]]) -> list[set[str]]:
    index_of: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[set[str]] = []
    counter = 0

    for root in sorted(nodes):
        if root in index_of:
            continue
        work = [(root, iter(sorted(edges.get(root, ()) & nodes)))]
        index_of[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, children = work[-1]
            advanced = False
            for child in children:
                if child not in index_of:
                    index_of[child] = low[child] = counter
                    counter += 1
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(sorted(edges.get(child, ()) & nodes))))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index_of[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index_of[node]:
                comp = set()
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp.add(member)
                    if member == node:
                        break
                out.append(comp)
    return out


def install_order(
    deps: Iterable[str], index: PackageIndex, pins: Optional[Mapping[str, Version]] = None
) -> InstallOrder:
    """Dependencies-first order; ties and cycles resolved lexicographically.

    When every remaining package is blocked, the lexicographically smallest
    package of a cycle that waits on nothing outside itself is released by
    dropping its dependencies on the rest of that cycle.
    """
    nodes = set(deps)
    requires = {
        p: {d for d in index.deps_of(p, _pin(index, pins, p)) if d in nodes} for p in nodes
    }
    broken: list[tuple[str, str]] = []
    for p in sorted(nodes):
        if p in requires[p]:
            requires[p].discard(p)
            broken.append((p, p))

    dependents: dict[str, set[str]] = {p: set() for p in nodes}
    for p, reqs in requires.items():
        for d in reqs:
            dependents[d].add(p)

    ready = [p for p in nodes if not requires[p]]
    heapq.heapify(ready)
    order: list[str] = []
    remaining = set(nodes)
    while remaining:
        if not ready:
            # a component waiting on nothing outside itself exists whenever nothing is ready
            cyclic = [
                c
                for c in _strongly_connected(remaining, requires)
                if all(requires[m] <= c for m in c)
            ]
            victim = min(min(c) for c in cyclic)
            comp = next(c for c in cyclic if victim in c)
            for d in sorted(requires[victim] & comp):
                requires[victim].discard(d)
                dependents[d].discard(victim)
                broken.append((victim, d))
            if not requires[victim]:
                heapq.heappush(ready, victim)
            continue
        p = heapq.heappop(ready)
        order.append(p)
        remaining.discard(p)
        for q in sorted(dependents[p]):
            requires[q].discard(p)
            if not requires[q] and q in remaining and q not in ready:
                heapq.heappush(ready, q)
    if broken:
        log.info("install order dropped cyclic edges: %s", broken)
    return InstallOrder(order, broken)


@dataclass
class Resolution:
    """Everything learned while turning a manifest into candidate environments."""

    direct: set[str]
    packages: set[str]
    order: list[str]
    broken_edges: list[tuple[str, str]] = field(default_factory=list)
    unmapped: list[str] = field(default_factory=list)

    def metadata(self) -> dict:
        return {
            "direct": sorted(self.direct),
            "unmapped_modules": list(self.unmapped),
            "broken_edges": [{"package": a, "depends_on": b} for a, b in self.broken_edges],
        }


def resolve_manifest(
    manifest: SnippetManifest, kb: KnowledgeBase, index: PackageIndex
) -> Resolution:
    direct = resolve_direct_dependencies(manifest.imports, kb)
    packages = transitive_closure(direct, index)
    order = install_order(packages, index)
    return Resolution(
        direct, packages, order.packages, order.broken_edges, unmapped_modules(manifest.imports, kb)
    )


def generate_candidates(
    manifest: SnippetManifest, kb: KnowledgeBase, index: PackageIndex
) -> list[EnvironmentSpec]:
    """One environment per runtime candidate, every dependency pinned at its latest release."""
    res = resolve_manifest(manifest, kb, index)
    deps = tuple((p, index.latest(p)) for p in res.order)
    return [
        EnvironmentSpec(runtime, deps, origin=f"{manifest.snippet_id}:py{runtime}")
        for runtime in manifest.runtime_candidates
    ]


def pins_of(pairs: Iterable[tuple[str, object]]) -> dict[str, Version]:
    return {name: as_version(v) for name, v in pairs}


def read_source(path) -> str:
    return Path(path).read_text(encoding="utf-8", errors="replace")
