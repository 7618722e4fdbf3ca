"""Feedback-directed search over dependency-version configurations.

Every candidate environment gets its own lane.  A lane validates, keeps the
latest unfixed failure as its checkpoint, and mutates its environment until
execution gets past that failure.  Lanes are serviced round-robin, one
validation per turn, and share one visited set so no configuration is ever
validated twice.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Sequence

from .environment import (
    DriftInstance,
    EnvironmentSpec,
    Mutation,
    MutationOp,
    Patch,
    apply_mutation,
    canonical_key,
)
from .errors import BackendFailure
from .matrix import UpgradeMatrix, exploration_order, iter_jumps
from .semver import Version, decrement_semver_major, decrement_semver_minor
from .universe import KnowledgeBase, PackageIndex
from .validation import Checkpoint, Status, ValidationResult, is_fixable, is_fixed, localize_fault

log = logging.getLogger(__name__)

Validator = Callable[[EnvironmentSpec], ValidationResult]
Path = tuple[Mutation, ...]


class Termination(enum.Enum):
    WORKING = "Working"
    NOT_FIXABLE = "NotFixable"
    SPACE_EXHAUSTED = "SpaceExhausted"
    BUDGET = "Budget"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SearchBudget:
    wall_clock_limit: float = 3600.0
    max_validations: Optional[int] = None

    def __post_init__(self):
        if self.wall_clock_limit <= 0:
            raise ValueError("wall_clock_limit must be positive")
        if self.max_validations is not None and self.max_validations < 0:
            raise ValueError("max_validations must be non-negative")


@dataclass(frozen=True)
class ValidationRecord:
    origin: str
    key: str
    status: Status
    exception_name: Optional[str]
    snippet_line: Optional[int]

    def to_json(self) -> dict:
        return {
            "origin": self.origin,
            "env": self.key,
            "status": self.status.value,
            "exception_name": self.exception_name,
            "snippet_line": self.snippet_line,
        }


@dataclass(frozen=True)
class CandidateStats:
    origin: str
    validations: int
    mutations: int
    termination: Optional[Termination] = None
    final_exception: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "origin": self.origin,
            "validations": self.validations,
            "mutations": self.mutations,
            "termination": self.termination.value if self.termination else None,
            "final_exception": self.final_exception,
        }


@dataclass
class SearchOutcome:
    working_env: Optional[EnvironmentSpec]
    drift_instances: list[DriftInstance]
    termination: Termination
    validations_total: int
    per_candidate_stats: list[CandidateStats]
    log: list[ValidationRecord] = field(default_factory=list)
    working_patch: Optional[Patch] = None

    def __post_init__(self):
        if (self.termination is Termination.WORKING) != (self.working_env is not None):
            raise ValueError("a working environment is present exactly when search ends Working")


# --- enumeration ----------------------------------------------------------------

def iddfs(
    root: EnvironmentSpec,
    index: PackageIndex,
    visited: set[str],
    *,
    scope: Optional[Sequence[str]] = None,
    orderings: Optional[Mapping[str, Sequence[Version]]] = None,
) -> Iterator[tuple[EnvironmentSpec, Path]]:
    """Iterative deepening over mutation sequences from ``root``.

    Sequences are canonical so each configuration has exactly one: packages
    are mutated in install order, and for any one package every major
    decrement precedes every minor decrement.  A package with an entry in
    ``orderings`` may first take one jump to a listed version, tried before
    its semver moves.  Configurations in ``visited`` are skipped, which also
    covers the rare jump that lands where a semver path already went.
    Stops once a depth level has no configurations.
    """
    position = {p: i for i, p in enumerate(root.packages)}

    def rank(p: str):
        return (position.get(p, len(position)), p)

    def children(env: EnvironmentSpec, last) -> Iterator[Mutation]:
        pkgs = env.packages if scope is None else [p for p in scope if p in env]
        for p in sorted(pkgs, key=rank):
            if last is not None and rank(p) < rank(last[0]):
                continue
            same = last is not None and last[0] == p
            current = env.pin(p)
            if orderings and p in orderings and not same:
                for target in iter_jumps(orderings[p], current):
                    yield Mutation(MutationOp.JUMP, p, current, target)
            history = index.history(p)
            if not (same and last[1] is MutationOp.MINOR):
                target = decrement_semver_major(history, current)
                if target is not None:
                    yield Mutation(MutationOp.MAJOR, p, current, target)
            target = decrement_semver_minor(history, current)
            if target is not None:
                yield Mutation(MutationOp.MINOR, p, current, target)

    def limited(env: EnvironmentSpec, path: Path, remaining: int, last):
        if remaining == 0:
            yield env, path
            return
        for m in children(env, last):
            yield from limited(apply_mutation(env, m, index), path + (m,), remaining - 1, (m.package, m.op))

    depth = 0
    while True:
        reached = False
        for env, path in limited(root, (), depth, None):
            reached = True
            if canonical_key(env) not in visited:
                yield env, path
        if not reached:
            return
        depth += 1


def matrix_mutator(package: str, matrix: UpgradeMatrix, current: Version) -> Iterator[Mutation]:
    """Jumps from ``current`` to each downgrade target the matrix suggests, in order."""
    for target in iter_jumps(exploration_order(matrix, current), current):
        yield Mutation(MutationOp.JUMP, package, current, target)


def _matrix_then_iddfs(
    root: EnvironmentSpec, package: str, matrix: UpgradeMatrix, index: PackageIndex, visited: set[str]
) -> Iterator[tuple[EnvironmentSpec, Path]]:
    base, base_path = root, ()
    for m in matrix_mutator(package, matrix, root.pin(package)):
        env = apply_mutation(root, m, index)
        base, base_path = env, (m,)
        if canonical_key(env) not in visited:
            yield env, (m,)
    for env, path in iddfs(base, index, visited, scope=[package]):
        yield env, base_path + path


def select_mutator(
    env: EnvironmentSpec,
    localized: Optional[str],
    matrices: Mapping[str, UpgradeMatrix],
    index: PackageIndex,
    visited: set[str],
) -> Iterator[tuple[EnvironmentSpec, Path]]:
    if localized is not None:
        if localized in matrices:
            return _matrix_then_iddfs(env, localized, matrices[localized], index, visited)
        return iddfs(env, index, visited, scope=[localized])
    orderings = {
        p: exploration_order(matrices[p], v) for p, v in env.deps if p in matrices
    }
    return iddfs(env, index, visited, orderings=orderings)


# --- bookkeeping shared by both strategies ----------------------------------------


class _BudgetSpent(Exception):
    pass


class _Runner:
    def __init__(self, validator: Validator, budget: Optional[SearchBudget], clock):
        self.validator = validator
        self.budget = budget or SearchBudget()
        self.clock = clock
        self.started = clock()
        self.visited: set[str] = set()
        self.log: list[ValidationRecord] = []

    def check_budget(self):
        b = self.budget
        if b.max_validations is not None and len(self.log) >= b.max_validations:
            raise _BudgetSpent
        if self.clock() - self.started >= b.wall_clock_limit:
            raise _BudgetSpent

    def validate(self, origin: str, env: EnvironmentSpec) -> ValidationResult:
        self.check_budget()
        key = canonical_key(env)
        try:
            result = self.validator(env)
        except BackendFailure:
            raise
        except Exception as exc:
            raise BackendFailure(f"validator failed on {env.describe()}: {exc}") from exc
        if not isinstance(result, ValidationResult):
            raise BackendFailure(f"validator returned {type(result).__name__}, not a ValidationResult")
        self.visited.add(key)
        self.log.append(ValidationRecord(origin, key, result.status, result.exception_name, result.snippet_line))
        log.debug("%s %s -> %s %s", origin, key, result.status.value, result.exception_name or "")
        return result


@dataclass
class _Lane:
    candidate: EnvironmentSpec
    env: EnvironmentSpec = None
    path: Path = ()
    applied: Path = ()
    checkpoint: Optional[Checkpoint] = None
    checkpoint_env: Optional[EnvironmentSpec] = None
    localized: Optional[str] = None
    mutator: Optional[Iterator] = None
    validations: int = 0
    since_checkpoint: int = 0
    termination: Optional[Termination] = None
    last: Optional[ValidationResult] = None
    drifts: list[DriftInstance] = field(default_factory=list)

    def __post_init__(self):
        if self.env is None:
            self.env = self.candidate

    @property
    def origin(self) -> str:
        return self.candidate.origin or canonical_key(self.candidate)

    def stats(self) -> CandidateStats:
        final = self.last.exception_name if self.last is not None else None
        return CandidateStats(self.origin, self.validations, len(self.applied), self.termination, final)


def _aggregate(lanes: list[_Lane], budget_hit: bool) -> Termination:
    if any(l.termination is Termination.WORKING for l in lanes):
        return Termination.WORKING
    if budget_hit:
        return Termination.BUDGET
    ends = {l.termination for l in lanes}
    for t in (Termination.INCONCLUSIVE, Termination.NOT_FIXABLE, Termination.SPACE_EXHAUSTED):
        if t in ends:
            return t
    return Termination.SPACE_EXHAUSTED


def _unique(drifts: list[DriftInstance]) -> list[DriftInstance]:
    seen, out = set(), []
    for d in drifts:
        sig = d.signature()
        if sig not in seen:
            seen.add(sig)
            out.append(d)
    return out


def _outcome(lanes: list[_Lane], runner: _Runner, budget_hit: bool) -> SearchOutcome:
    termination = _aggregate(lanes, budget_hit)
    winner = next((l for l in lanes if l.termination is Termination.WORKING), None)
    stats = [l.stats() for l in lanes]
    return SearchOutcome(
        working_env=winner.env if winner else None,
        drift_instances=_unique([d for l in lanes for d in l.drifts]),
        termination=termination,
        validations_total=sum(s.validations for s in stats),
        per_candidate_stats=stats,
        log=list(runner.log),
        working_patch=Patch(winner.applied) if winner else None,
    )


# --- feedback-directed search ------------------------------------------------------


def _record_drift(lane: _Lane):
    lane.drifts.append(
        DriftInstance(
            lane.checkpoint.result,
            Patch(lane.path),
            lane.since_checkpoint,
            lane.localized,
            lane.checkpoint_env,
        )
    )


def _feedback_step(lane: _Lane, runner: _Runner, matrices, index, kb):
    env = lane.env
    result = runner.validate(lane.origin, env)
    lane.validations += 1
    lane.since_checkpoint += 1
    lane.last = result

    if result.status is Status.SUCCESS:
        if lane.checkpoint is not None:
            _record_drift(lane)
        lane.applied += lane.path
        lane.termination = Termination.WORKING
        return
    if result.status is Status.TIMEOUT:
        # neither success nor failure: nothing more can be learned from this lane
        lane.termination = Termination.INCONCLUSIVE
        return

    if lane.checkpoint is None or is_fixed(lane.checkpoint, result):
        if lane.checkpoint is not None:
            _record_drift(lane)
        lane.applied += lane.path
        lane.checkpoint = Checkpoint(result, canonical_key(env))
        lane.checkpoint_env = env
        lane.path = ()
        lane.since_checkpoint = 0
        if not is_fixable(result, env, kb):
            lane.termination = Termination.NOT_FIXABLE
            return
        lane.localized = localize_fault(result, env, kb)
        lane.mutator = select_mutator(env, lane.localized, matrices, index, runner.visited)
        log.info(
            "%s: checkpoint %s at line %s, localized to %s",
            lane.origin, result.exception_name, result.snippet_line, lane.localized,
        )

    nxt = next(lane.mutator, None)
    if nxt is None:
        lane.termination = Termination.SPACE_EXHAUSTED
        return
    lane.env, lane.path = nxt


def _round_robin(lanes: list[_Lane], step) -> bool:
    """Run ``step`` over live lanes until one works or all halt; True if the budget ran out."""
    while True:
        live = [l for l in lanes if l.termination is None]
        if not live:
            return False
        for lane in live:
            try:
                step(lane)
            except _BudgetSpent:
                return True
            if lane.termination is Termination.WORKING:
                return False


def feedback_directed_search(
    candidates: Sequence[EnvironmentSpec],
    validator: Validator,
    matrices: Optional[Mapping[str, UpgradeMatrix]] = None,
    budget: Optional[SearchBudget] = None,
    *,
    index: PackageIndex,
    kb: Optional[KnowledgeBase] = None,
    clock: Callable[[], float] = time.monotonic,
) -> SearchOutcome:
    """Search every candidate in tandem for a working configuration.

    Returns as soon as one lane validates successfully.  Drift instances
    found in several lanes with the same failure and patch are reported once.
    """
    if not candidates:
        raise ValueError("feedback-directed search needs at least one candidate environment")
    matrices = matrices or {}
    runner = _Runner(validator, budget, clock)
    lanes = [_Lane(c) for c in candidates]
    budget_hit = _round_robin(lanes, lambda lane: _feedback_step(lane, runner, matrices, index, kb))
    return _outcome(lanes, runner, budget_hit)


# --- baseline -------------------------------------------------------------------------


def iddfs_baseline(
    candidates: Sequence[EnvironmentSpec],
    validator: Validator,
    budget: Optional[SearchBudget] = None,
    *,
    index: PackageIndex,
    clock: Callable[[], float] = time.monotonic,
) -> SearchOutcome:
    """Uninformed enumeration of each candidate's semver operator closure."""
    if not candidates:
        raise ValueError("the baseline needs at least one candidate environment")
    runner = _Runner(validator, budget, clock)
    lanes = [_Lane(c) for c in candidates]
    for lane in lanes:
        lane.mutator = iddfs(lane.candidate, index, runner.visited)

    def step(lane: _Lane):
        runner.check_budget()
        nxt = next(lane.mutator, None)
        if nxt is None:
            lane.termination = Termination.SPACE_EXHAUSTED
            return
        lane.env, lane.path = nxt
        result = runner.validate(lane.origin, lane.env)
        lane.validations += 1
        lane.last = result
        if result.status is Status.SUCCESS:
            lane.applied = lane.path
            lane.termination = Termination.WORKING

    budget_hit = _round_robin(lanes, step)
    return _outcome(lanes, runner, budget_hit)
