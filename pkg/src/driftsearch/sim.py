"""A deterministic simulated package world and snippet executor.

Each ``(package, version)`` exports a table of modules and their symbols.
Snippets are abstract statement lists; running one against an environment
behaves like real module loading: importing a package first runs that
package's own cross-package imports, so a breaking change in one library can
surface through another library's frames.
"""

from __future__ import annotations

import itertools
import json
import random
import sys
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

from .environment import EnvironmentSpec, canonical_key
from .errors import WorldInconsistency
from .matrix import Cell, UpgradeMatrix
from .semver import (
    ReleaseHistory,
    Version,
    decrement_semver_major,
    decrement_semver_minor,
    parse_version,
)
from .universe import KnowledgeBase, PackageEntry, PackageIndex, SnippetManifest, generate_candidates
from .validation import Origin, StackFrame, Status, ValidationResult

DEFAULT_STDLIB = frozenset(getattr(sys, "stdlib_module_names", ())) or frozenset(
    {"math", "os", "sys", "re", "json", "functools", "itertools", "collections", "random", "time"}
)


# --- statements ---------------------------------------------------------------


@dataclass(frozen=True)
class Import:
    module: str
    names: tuple[str, ...] = ()


@dataclass(frozen=True)
class Call:
    module: str
    symbol: str
    arg_count: int = 0


@dataclass(frozen=True)
class UseFile:
    path: str


@dataclass(frozen=True)
class RaiseLocal:
    name: str
    message: str = ""


Statement = Union[Import, Call, UseFile, RaiseLocal]


@dataclass(frozen=True)
class SimSnippet:
    """Statements run in order; statement ``i`` sits on line ``i + 1``."""

    statements: tuple[Statement, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "statements", tuple(self.statements))

    def __len__(self):
        return len(self.statements)

    def imports(self) -> list[str]:
        found: dict[str, None] = {}
        for st in self.statements:
            if isinstance(st, Import):
                for name in st.names:
                    found.setdefault(f"{st.module}.{name}")
                found.setdefault(st.module)
            elif isinstance(st, Call):
                found.setdefault(st.module)
        return list(found)

    def to_json(self) -> list:
        out = []
        for line, st in enumerate(self.statements, start=1):
            if isinstance(st, Import):
                out.append({"line": line, "kind": "import", "module": st.module, "names": list(st.names)})
            elif isinstance(st, Call):
                out.append(
                    {"line": line, "kind": "call", "module": st.module, "symbol": st.symbol, "args": st.arg_count}
                )
            elif isinstance(st, UseFile):
                out.append({"line": line, "kind": "use_file", "path": st.path})
            else:
                out.append({"line": line, "kind": "raise", "name": st.name, "message": st.message})
        return out

    @classmethod
    def from_json(cls, data: Iterable[Mapping]) -> "SimSnippet":
        items = list(data)
        lines = [item.get("line", i) for i, item in enumerate(items, start=1)]
        if lines != list(range(1, len(items) + 1)):
            raise ValueError(f"snippet lines must be 1-based and contiguous, got {lines}")
        statements: list[Statement] = []
        for item in items:
            kind = item["kind"]
            if kind == "import":
                statements.append(Import(item["module"], tuple(item.get("names", ()))))
            elif kind == "call":
                statements.append(Call(item["module"], item["symbol"], int(item.get("args", 0))))
            elif kind == "use_file":
                statements.append(UseFile(item["path"]))
            elif kind == "raise":
                statements.append(RaiseLocal(item["name"], item.get("message", "")))
            else:
                raise ValueError(f"unknown statement kind {kind!r}")
        return cls(tuple(statements))


# --- world --------------------------------------------------------------------


@dataclass(frozen=True)
class CrossImport:
    module: str
    provider: str
    line: int = 1


ApiTable = Mapping[str, Mapping[str, int]]


@dataclass(frozen=True)
class SimWorld:
    index: PackageIndex
    api: Mapping[tuple[str, Version], ApiTable]
    cross_imports: Mapping[tuple[str, Version], tuple[CrossImport, ...]] = field(default_factory=dict)
    seed: int = 0
    stdlib: frozenset[str] = DEFAULT_STDLIB
    snippets: Mapping[str, SimSnippet] = field(default_factory=dict)

    def __post_init__(self):
        for pkg, ver in itertools.chain(self.api, self.cross_imports):
            if pkg not in self.index or ver not in self.index.history(pkg):
                raise WorldInconsistency(f"{pkg}@{ver} is not a release in the world's index")

    def knowledge_base(self) -> KnowledgeBase:
        """Module-to-package map covering every module any release exports."""
        module_map: dict[str, set[str]] = {}
        for (pkg, _), table in self.api.items():
            for module in table:
                module_map.setdefault(module, set()).add(pkg)
        return KnowledgeBase({m: frozenset(p) for m, p in module_map.items()}, frozenset(self.stdlib))

    @classmethod
    def from_json(cls, data: Mapping) -> "SimWorld":
        index = PackageIndex.from_json(data["index"])

        def key(text: str) -> tuple[str, Version]:
            pkg, _, ver = text.rpartition("@")
            return pkg, parse_version(ver)

        api = {
            key(k): {mod: {sym: int(arity) for sym, arity in syms} for mod, syms in table.items()}
            for k, table in data.get("api", {}).items()
        }
        cross = {
            key(k): tuple(
                CrossImport(c["module"], c["provider"], int(c.get("line", i)))
                for i, c in enumerate(items, start=1)
            )
            for k, items in data.get("cross_imports", {}).items()
        }
        snippets = {sid: SimSnippet.from_json(st) for sid, st in data.get("snippets", {}).items()}
        stdlib = frozenset(data["stdlib"]) if "stdlib" in data else DEFAULT_STDLIB
        return cls(index, api, cross, int(data.get("seed", 0)), stdlib, snippets)

    def to_json(self) -> dict:
        out = {
            "seed": self.seed,
            "index": self.index.to_json(),
            "api": {
                f"{p}@{v.raw}": {mod: [[s, a] for s, a in sorted(syms.items())] for mod, syms in sorted(t.items())}
                for (p, v), t in sorted(self.api.items())
            },
            "cross_imports": {
                f"{p}@{v.raw}": [{"module": c.module, "provider": c.provider, "line": c.line} for c in items]
                for (p, v), items in sorted(self.cross_imports.items())
                if items
            },
        }
        if self.stdlib != DEFAULT_STDLIB:
            out["stdlib"] = sorted(self.stdlib)
        if self.snippets:
            out["snippets"] = {sid: s.to_json() for sid, s in sorted(self.snippets.items())}
        return out


def load_world(path) -> SimWorld:
    with open(path, encoding="utf-8") as fh:
        return SimWorld.from_json(json.load(fh))


# --- execution ----------------------------------------------------------------


class _Raised(Exception):
    def __init__(self, name: str, message: str, frames: list[StackFrame]):
        super().__init__(message)
        self.name = name
        self.message = message
        self.frames = frames


class _Interpreter:
    def __init__(self, env: EnvironmentSpec, world: SimWorld):
        self.world = world
        self.order = env.packages
        self.tables: dict[str, ApiTable] = {}
        for pkg, ver in env.deps:
            table = world.api.get((pkg, ver))
            if table is None:
                raise WorldInconsistency(f"world has no export table for {pkg}@{ver}")
            self.tables[pkg] = table
        self.cross = {pkg: world.cross_imports.get((pkg, ver), ()) for pkg, ver in env.deps}
        self.loaded: set[str] = set()

    def _owner(self, module: str) -> Optional[str]:
        top = module.split(".")[0]
        for pkg in self.order:
            if top in self.tables[pkg]:
                return pkg
        return None

    def _load(self, pkg: str, chain: list[StackFrame]):
        if pkg in self.loaded:
            return
        self.loaded.add(pkg)
        for ci in self.cross[pkg]:
            frames = chain + [StackFrame(Origin.DEPENDENCY, ci.line, pkg)]
            provider = ci.provider if ci.provider in self.tables else None
            if provider is None:
                top = ci.module.split(".")[0]
                raise _Raised("ModuleNotFoundError", f"No module named '{top}'", frames)
            self.import_module(ci.module, (), frames, provider)

    def import_module(
        self, module: str, names: tuple[str, ...], chain: list[StackFrame], owner: Optional[str] = None
    ):
        owner = owner or self._owner(module)
        if owner is None:
            if module.split(".")[0] in self.world.stdlib:
                return
            raise _Raised("ModuleNotFoundError", f"No module named '{module.split('.')[0]}'", chain)
        self._load(owner, chain)
        table = self.tables[owner]
        # failures inside library code are attributed to the library that lacks the module
        blame = chain + [StackFrame(Origin.DEPENDENCY, 1, owner)] if chain else chain
        parts = module.split(".")
        for end in range(1, len(parts) + 1):
            prefix = ".".join(parts[:end])
            if prefix not in table:
                if end == len(parts) and end > 1 and parts[-1] in table.get(".".join(parts[:-1]), {}):
                    break
                parent = ".".join(parts[: end - 1])
                if chain and parent and end == len(parts):
                    raise _Raised(
                        "ImportError", f"cannot import name '{parts[end - 1]}' from '{parent}'", blame
                    )
                raise _Raised("ModuleNotFoundError", f"No module named '{prefix}'", blame)
        exports = table.get(module, {})
        for name in names:
            if name not in exports and f"{module}.{name}" not in table:
                raise _Raised("ImportError", f"cannot import name '{name}' from '{module}'", blame)
        return owner

    def call(self, st: Call):
        owner = self.import_module(st.module, (), [])
        if owner is None:
            return
        exports = self.tables[owner].get(st.module, {})
        if st.symbol not in exports:
            raise _Raised("AttributeError", f"module '{st.module}' has no attribute '{st.symbol}'", [])
        arity = exports[st.symbol]
        if arity != st.arg_count:
            raise _Raised(
                "TypeError",
                f"{st.symbol}() takes {arity} positional arguments but {st.arg_count} were given",
                [StackFrame(Origin.DEPENDENCY, 1, owner)],
            )


def simulate_validation(
    snippet: SimSnippet, env: EnvironmentSpec, world: SimWorld, budget: Optional[float] = None
) -> ValidationResult:
    """Run ``snippet`` in ``env``.  Pure in its arguments.

    ``budget`` is accepted for parity with real validators; simulated
    statements take no time so the result is never a timeout.
    """
    interp = _Interpreter(env, world)
    for line, st in enumerate(snippet.statements, start=1):
        here = StackFrame(Origin.SNIPPET, line)
        try:
            if isinstance(st, Import):
                interp.import_module(st.module, st.names, [])
            elif isinstance(st, Call):
                interp.call(st)
            elif isinstance(st, UseFile):
                raise _Raised(
                    "FileNotFoundError",
                    f"[Errno 2] No such file or directory: '{st.path}'",
                    [StackFrame(Origin.FILESYSTEM, 1)],
                )
            else:
                raise _Raised(st.name, st.message or st.name, [])
        except _Raised as exc:
            return ValidationResult(
                Status.EXCEPTION, exc.name, exc.message, (here, *exc.frames), snippet_line=line
            )
    return ValidationResult.success(snippet_line=len(snippet))


class SimValidator:
    """Validator callable backed by :func:`simulate_validation`."""

    def __init__(self, snippet: SimSnippet, world: SimWorld, budget: Optional[float] = None):
        self.snippet = snippet
        self.world = world
        self.budget = budget
        self.calls = 0

    def __call__(self, env: EnvironmentSpec) -> ValidationResult:
        self.calls += 1
        return simulate_validation(self.snippet, env, self.world, self.budget)


# --- exhaustive oracle --------------------------------------------------------


def operator_closure(history: ReleaseHistory, start: Version) -> set[Version]:
    """Every version reachable from ``start`` by the two semver operators."""
    seen = {start}
    frontier = [start]
    while frontier:
        v = frontier.pop()
        for op in (decrement_semver_major, decrement_semver_minor):
            w = op(history, v)
            if w is not None and w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen


def enumerate_closure(candidate: EnvironmentSpec, index: PackageIndex) -> Iterator[EnvironmentSpec]:
    """Cartesian product of per-package operator closures (dependency edges held fixed)."""
    names = candidate.packages
    per_package = [sorted(operator_closure(index.history(p), v), reverse=True) for p, v in candidate.deps]
    for combo in itertools.product(*per_package):
        yield EnvironmentSpec(candidate.runtime, tuple(zip(names, combo)), candidate.origin)


def brute_force_oracle(snippet: SimSnippet, world: SimWorld, candidate: EnvironmentSpec) -> set[str]:
    """Keys of every configuration in the candidate's operator closure that validates."""
    return {
        canonical_key(env)
        for env in enumerate_closure(candidate, world.index)
        if simulate_validation(snippet, env, world).status is Status.SUCCESS
    }


# --- seeded scenarios ---------------------------------------------------------

PACKAGE_NAMES = ("alpha", "bravo", "charlie", "delta", "echo", "foxtrot")
DRIFT_KINDS = ("remove_symbol", "rename_import", "arity", "remove_module", "cross")


@dataclass(frozen=True)
class SeededDrift:
    kind: str
    package: str
    boundary: Version
    statement: Statement


@dataclass
class Scenario:
    seed: int
    world: SimWorld
    snippet: SimSnippet
    manifest: SnippetManifest
    matrices: dict[str, UpgradeMatrix] = field(default_factory=dict)
    drifts: list[SeededDrift] = field(default_factory=list)

    def __iter__(self):
        return iter((self.world, self.snippet, self.manifest))

    @property
    def kb(self) -> KnowledgeBase:
        return self.world.knowledge_base()

    def candidates(self) -> list[EnvironmentSpec]:
        return generate_candidates(self.manifest, self.kb, self.world.index)

    def validator(self) -> SimValidator:
        return SimValidator(self.snippet, self.world)


def _random_history(rng: random.Random, n: int) -> list[Version]:
    major, minor, patch = rng.choice((0, 1)), rng.randrange(3), 0
    out = [(major, minor, patch)]
    while len(out) < n:
        r = rng.random()
        if r < 0.2:
            major, minor, patch = major + 1, 0, 0
        elif r < 0.65:
            minor, patch = minor + 1, 0
        else:
            patch += 1
        out.append((major, minor, patch))
    return [Version(*t) for t in out]


def _latest_patches(versions: list[Version]) -> list[Version]:
    best: dict[tuple[int, int], Version] = {}
    for v in versions:
        best[(v.major, v.minor)] = max(best.get((v.major, v.minor), v), v)
    return sorted(best.values())


def _pick_boundary(rng: random.Random, versions: list[Version]) -> Version:
    group_starts = [
        v for prev, v in zip(versions, versions[1:]) if (prev.major, prev.minor) != (v.major, v.minor)
    ]
    if group_starts and rng.random() < 0.8:
        return rng.choice(group_starts)
    return rng.choice(versions[1:])


def generate_scenario(seed: int, n_packages: int = 2, n_versions: int = 3, n_drifts: int = 1) -> Scenario:
    """Deterministic random world with ``n_drifts`` breaking changes the snippet trips over.

    Each drift makes some API the snippet relies on disappear (or change
    shape) from a chosen release onward.  Export tables are otherwise
    identical across releases.
    """
    if n_packages < 1 or n_versions < 1 or n_drifts < 0:
        raise ValueError("scenario knobs must be positive")
    n_packages = min(n_packages, len(PACKAGE_NAMES))
    rng = random.Random(seed)
    names = list(PACKAGE_NAMES[:n_packages])
    histories = {p: _random_history(rng, n_versions) for p in names}
    requires = {p: tuple(q for q in names[:i] if rng.random() < 0.3) for i, p in enumerate(names)}

    base: dict[str, dict[str, dict[str, int]]] = {}
    for p in names:
        base[p] = {
            p: {"version": 0},
            f"{p}.core": {f"f{k}": rng.randrange(4) for k in range(3)},
            f"{p}.util": {f"u{k}": rng.randrange(4) for k in range(2)},
        }
    # (package, predicate over version, table edit) applied per release
    edits: list[tuple] = []
    cross: dict[str, list[CrossImport]] = {p: [] for p in names}
    imports: list[Statement] = []
    calls: list[Statement] = []
    drifts: list[SeededDrift] = []

    def versions_from(pkg: str, boundary: Version, fn):
        edits.append((pkg, lambda v, b=boundary: v >= b, fn))

    for k in range(n_drifts):
        kinds = list(DRIFT_KINDS)
        pairs = [(p, q) for p in names for q in requires[p]]
        if not pairs:
            kinds.remove("cross")
        kind = rng.choice(kinds)
        if kind == "cross":
            importer, pkg = rng.choice(pairs)
        else:
            pkg = rng.choice(names)
        versions = histories[pkg]
        if len(versions) < 2:
            kind, boundary = "remove_symbol", versions[0]
        else:
            boundary = _pick_boundary(rng, versions)
        core = f"{pkg}.core"
        sym = f"api{k}"
        if kind == "remove_symbol":
            arity = rng.randrange(4)
            base[pkg][core][sym] = arity
            versions_from(pkg, boundary, lambda t, s=sym, c=core: t[c].pop(s))
            imports.append(Import(core))
            st: Statement = Call(core, sym, arity)
            calls.append(st)
        elif kind == "rename_import":
            base[pkg][core][sym] = 1

            def rename(t, s=sym, c=core):
                t[c][f"{s}_v2"] = t[c].pop(s)

            versions_from(pkg, boundary, rename)
            st = Import(core, (sym,))
            imports.append(st)
        elif kind == "arity":
            arity = rng.randrange(3)
            base[pkg][core][sym] = arity
            versions_from(pkg, boundary, lambda t, s=sym, c=core: t[c].__setitem__(s, t[c][s] + 1))
            imports.append(Import(core))
            st = Call(core, sym, arity)
            calls.append(st)
        elif kind == "remove_module":
            legacy = f"{pkg}.legacy{k}"
            base[pkg][legacy] = {"run": 0}
            versions_from(pkg, boundary, lambda t, m=legacy: t.pop(m))
            st = Import(legacy)
            imports.append(st)
        else:
            shared = f"{pkg}.shared{k}"
            base[pkg][shared] = {"hook": 0}
            versions_from(pkg, boundary, lambda t, m=shared: t.pop(m))
            cross[importer].append(CrossImport(shared, pkg, line=len(cross[importer]) + 1))
            st = Import(importer)
            imports.append(st)
        drifts.append(SeededDrift(kind, pkg, boundary, st))

    # occasionally the snippet also needs an API only newer releases have
    if n_drifts and rng.random() < 0.25:
        pkg = rng.choice(names)
        versions = histories[pkg]
        floor = rng.choice(versions[: max(1, len(versions) - 1)])
        base[pkg][f"{pkg}.core"]["newer"] = 0
        edits.append((pkg, lambda v, f=floor: v < f, lambda t, c=f"{pkg}.core": t[c].pop("newer")))
        calls.append(Call(f"{pkg}.core", "newer", 0))

    for p in names:
        if rng.random() < 0.7:
            imports.append(Import(f"{p}.util", (rng.choice(sorted(base[p][f"{p}.util"])),)))
        if rng.random() < 0.5:
            sym, arity = rng.choice(sorted(base[p][f"{p}.core"].items()))
            if not sym.startswith("api") and sym != "newer":
                calls.append(Call(f"{p}.core", sym, arity))
    if not imports:
        imports.append(Import(names[0]))
    rng.shuffle(imports)
    rng.shuffle(calls)
    statements = imports + calls
    if n_drifts:
        r = rng.random()
        if r < 0.15:
            statements.append(RaiseLocal("NameError", "name 'data' is not defined"))
        elif r < 0.25:
            statements.append(UseFile("data/input.csv"))
    snippet = SimSnippet(tuple(statements))

    api: dict[tuple[str, Version], dict] = {}
    cross_table: dict[tuple[str, Version], tuple[CrossImport, ...]] = {}
    for p in names:
        for v in histories[p]:
            table = {m: dict(syms) for m, syms in base[p].items()}
            for pkg, applies, fn in edits:
                if pkg == p and applies(v):
                    fn(table)
            api[(p, v)] = table
            cross_table[(p, v)] = tuple(cross[p])

    index = PackageIndex(
        {
            p: PackageEntry(ReleaseHistory(p, tuple(histories[p])), {v: requires[p] for v in histories[p]})
            for p in names
        }
    )
    world = SimWorld(index, api, cross_table, seed)

    runtimes = ("3",) if rng.random() < 0.7 else ("2", "3")
    manifest = SnippetManifest(f"scenario-{seed}", imports=tuple(snippet.imports()), runtime_candidates=runtimes)

    matrices: dict[str, UpgradeMatrix] = {}
    for d in drifts:
        if rng.random() >= 0.4:
            continue
        versions = histories[d.package]
        reachable = _latest_patches(versions)
        good = [v for v in reachable if v < d.boundary]
        later = [v for v in versions if v >= d.boundary]
        cells: dict[tuple[Version, Version], Cell] = {}
        if good and later:
            total = rng.randint(1, 5)
            cells[(rng.choice(good), rng.choice(later))] = Cell(total, rng.randint(1, total))
        if rng.random() < 0.1:
            bad = [v for v in reachable if v >= d.boundary]
            higher = [v for v in versions if bad and v > min(bad)]
            if bad and higher:
                src = rng.choice(bad)
                dst = [v for v in higher if v > src]
                if dst:
                    cells[(src, rng.choice(dst))] = Cell(2, 1)
        for _ in range(rng.randint(0, 2)):
            a, b = sorted(rng.sample(versions, 2)) if len(versions) > 1 else (None, None)
            if a is not None and (a, b) not in cells:
                cells[(a, b)] = Cell(rng.randint(1, 3), 0)
        if cells:
            m = UpgradeMatrix(d.package, cells)
            matrices[d.package] = matrices[d.package].merge(m) if d.package in matrices else m

    return Scenario(seed, world, snippet, manifest, matrices, drifts)


def random_knobs(seed: int, max_packages: int = 4, max_versions: int = 8, max_drifts: int = 3) -> dict:
    """Knob draw used by the randomized scenario suite."""
    rng = random.Random(f"knobs-{seed}")
    return {
        "n_packages": rng.randint(1, max_packages),
        "n_versions": rng.randint(2, max_versions),
        "n_drifts": rng.randint(0, max_drifts),
    }
