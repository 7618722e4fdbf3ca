"""driftsearch command line."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .errors import BackendFailure, DriftError
from .executor import EXECUTOR_ENV_VAR, ExecutorClient, ExecutorValidator, detect, executor_command
from .matrix import build_matrix, load_events, load_matrices, render_matrix, save_matrices
from .report import aggregate, load_report, outcome_to_json, render_summary, write_report
from .search import SearchBudget, Termination, feedback_directed_search, iddfs_baseline
from .sim import SimSnippet, SimValidator, generate_scenario, load_world
from .universe import (
    SnippetManifest,
    extract_imports,
    generate_candidates,
    load_index,
    load_json,
    load_knowledge_base,
    load_manifest,
    read_source,
    resolve_manifest,
)
from .validation import timeout_budget

log = logging.getLogger("driftsearch")

EXIT_OK, EXIT_ERROR, EXIT_HALTED, EXIT_BUDGET = 0, 1, 2, 3
EXIT_CODES = {
    Termination.WORKING: EXIT_OK,
    Termination.NOT_FIXABLE: EXIT_HALTED,
    Termination.SPACE_EXHAUSTED: EXIT_HALTED,
    Termination.BUDGET: EXIT_BUDGET,
    Termination.INCONCLUSIVE: EXIT_BUDGET,
}
FIXTURES = ("fig1", "sphinx", "vd2")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    manifest: Optional[Path] = None
    index: Optional[Path] = None
    kb: Optional[Path] = None
    matrix: Optional[Path] = None
    world: Optional[Path] = None
    snippet: Optional[Path] = None
    backend: str = "sim"
    budget: SearchBudget = field(default_factory=SearchBudget)
    out: Optional[Path] = None
    verbosity: int = 0
    executor_cmd: Optional[str] = None

    def __post_init__(self):
        if self.backend not in ("sim", "exec"):
            raise UsageError(f"unknown backend {self.backend!r}")
        if self.backend == "exec" and not (self.executor_cmd or os.environ.get(EXECUTOR_ENV_VAR)):
            raise UsageError(f"backend exec needs an executor command in {EXECUTOR_ENV_VAR}")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("driftsearch") / "fixtures" / name))


def _fixture_config(name: str, args) -> None:
    if name not in FIXTURES:
        raise UsageError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    args.manifest = args.manifest or fixture_path(f"{name}-manifest.json")
    args.world = args.world or fixture_path(f"{name}-world.json")
    matrix = fixture_path(f"{name}-matrix.json")
    if args.matrix is None and matrix.exists():
        args.matrix = matrix


# --- search / baseline ----------------------------------------------------------


def _search_inputs(cfg: RunConfig):
    if cfg.manifest is None:
        raise UsageError("--manifest is required")
    manifest = load_manifest(cfg.manifest)
    world = load_world(cfg.world) if cfg.world else None
    if cfg.backend == "sim" and world is None:
        raise UsageError("backend sim needs --world")
    if cfg.index:
        index = load_index(cfg.index)
    elif world is not None:
        index = world.index
    else:
        raise UsageError("--index is required")
    if cfg.kb:
        kb = load_knowledge_base(cfg.kb)
    elif world is not None:
        kb = world.knowledge_base()
    else:
        raise UsageError("--kb is required")
    matrices = load_matrices(cfg.matrix) if cfg.matrix else {}
    return manifest, world, index, kb, matrices


def _sim_snippet(cfg: RunConfig, manifest: SnippetManifest, world) -> SimSnippet:
    if cfg.snippet:
        data = load_json(cfg.snippet)
        return SimSnippet.from_json(data["statements"] if isinstance(data, dict) else data)
    if manifest.snippet_id in world.snippets:
        return world.snippets[manifest.snippet_id]
    raise UsageError(f"world has no snippet {manifest.snippet_id!r}; pass --snippet")


def run_search(cfg: RunConfig) -> int:
    manifest, world, index, kb, matrices = _search_inputs(cfg)
    resolution = resolve_manifest(manifest, kb, index)
    candidates = generate_candidates(manifest, kb, index)
    client = None
    if cfg.backend == "sim":
        validator = SimValidator(_sim_snippet(cfg, manifest, world), world)
    else:
        if cfg.snippet is None:
            raise UsageError("backend exec needs --snippet <source file>")
        client = ExecutorClient(executor_command(cfg.executor_cmd))
        validator = ExecutorValidator(
            str(cfg.snippet), timeout_budget(manifest.kind, manifest.cell_count), client
        )
    try:
        if cfg.command == "baseline":
            outcome = iddfs_baseline(candidates, validator, cfg.budget, index=index)
        else:
            outcome = feedback_directed_search(
                candidates, validator, matrices, cfg.budget, index=index, kb=kb
            )
    finally:
        if client is not None:
            client.close()
    report = outcome_to_json(
        outcome,
        snippet_id=manifest.snippet_id,
        strategy="baseline" if cfg.command == "baseline" else "feedback",
        metadata={"resolution": resolution.metadata(), "backend": cfg.backend},
    )
    if cfg.out:
        write_report(report, cfg.out)
    print(f"{manifest.snippet_id}: {outcome.termination.value} after {outcome.validations_total} "
          f"validations, {len(outcome.drift_instances)} drift instance(s)")
    if outcome.working_env is not None:
        print(f"  working: {outcome.working_env.describe()}")
    for d in outcome.drift_instances:
        print(f"  drift: {d.checkpoint.exception_name} at line {d.checkpoint.snippet_line} fixed by "
              + ", ".join(str(m) for m in d.patch))
    return EXIT_CODES[outcome.termination]


# --- other commands -------------------------------------------------------------


def run_analyze(args) -> int:
    if args.source:
        if args.backend == "exec":
            with ExecutorClient(executor_command()) as client:
                runtimes, imports = detect(client, args.source)
            if not runtimes:
                print(f"{args.source}: no runtime parses this snippet", file=sys.stderr)
                return EXIT_HALTED
        else:
            runtimes, imports = ["3"], extract_imports(read_source(args.source))
        manifest = SnippetManifest(Path(args.source).stem, imports=imports, runtime_candidates=runtimes)
    elif args.manifest:
        manifest = load_manifest(args.manifest)
    else:
        raise UsageError("analyze needs --manifest or --source")
    world = load_world(args.world) if args.world else None
    if args.index:
        index = load_index(args.index)
    elif world is not None:
        index = world.index
    else:
        raise UsageError("--index is required")
    kb = load_knowledge_base(args.kb) if args.kb else (world.knowledge_base() if world else None)
    if kb is None:
        raise UsageError("--kb is required")
    resolution = resolve_manifest(manifest, kb, index)
    out = {
        "manifest": manifest.to_json(),
        "candidates": [c.to_json() for c in generate_candidates(manifest, kb, index)],
        "resolution": resolution.metadata(),
    }
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def run_matrix(args) -> int:
    if args.matrix_command == "build":
        events, malformed = [], 0
        for path in args.events:
            evs, bad = load_events(path)
            events += evs
            malformed += bad
        matrices = build_matrix(events)
        save_matrices(matrices, args.out)
        print(f"{len(events)} events, {malformed} malformed rows skipped, {len(matrices)} package(s)")
        return EXIT_OK
    matrices = load_matrices(args.matrix)
    names = [args.package] if args.package else sorted(matrices)
    for name in names:
        if name not in matrices:
            raise UsageError(f"no matrix for package {name!r}")
        print(render_matrix(matrices[name]))
        print()
    return EXIT_OK


def run_simulate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = generate_scenario(args.seed, args.packages, args.versions, args.drifts)
    stem = f"scenario-{args.seed}"
    world = dataclasses.replace(sc.world, snippets={sc.manifest.snippet_id: sc.snippet})
    (out / f"{stem}-world.json").write_text(json.dumps(world.to_json(), indent=2) + "\n")
    (out / f"{stem}-manifest.json").write_text(json.dumps(sc.manifest.to_json(), indent=2) + "\n")
    if sc.matrices:
        save_matrices(sc.matrices, out / f"{stem}-matrix.json")
    print(f"wrote {stem} to {out}")
    return EXIT_OK


def run_report(args) -> int:
    summary = aggregate(load_report(p) for p in args.reports)
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(render_summary(summary))
    return EXIT_OK


# --- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftsearch", description="Repair dependency drift in code snippets.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("search", "feedback-directed search"), ("baseline", "uninformed IDDFS baseline")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--manifest", type=Path)
        p.add_argument("--index", type=Path)
        p.add_argument("--kb", type=Path)
        p.add_argument("--matrix", type=Path)
        p.add_argument("--world", type=Path)
        p.add_argument("--snippet", type=Path, help="snippet statements (sim) or source file (exec)")
        p.add_argument("--fixture", choices=FIXTURES, help="use a bundled fixture world")
        p.add_argument("--backend", choices=("sim", "exec"), default="sim")
        p.add_argument("--budget-seconds", type=float, default=3600.0)
        p.add_argument("--max-validations", type=int)
        p.add_argument("--out", type=Path)

    p = sub.add_parser("analyze", help="list candidate environments without validating")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--source", type=Path, help="derive the manifest from a snippet file")
    p.add_argument("--index", type=Path)
    p.add_argument("--kb", type=Path)
    p.add_argument("--world", type=Path)
    p.add_argument("--backend", choices=("sim", "exec"), default="sim")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("matrix", help="build or show upgrade matrices")
    msub = p.add_subparsers(dest="matrix_command", required=True)
    b = msub.add_parser("build")
    b.add_argument("events", nargs="+", type=Path)
    b.add_argument("-o", "--out", type=Path, required=True)
    s = msub.add_parser("show")
    s.add_argument("package", nargs="?")
    s.add_argument("--matrix", type=Path, required=True)

    p = sub.add_parser("simulate", help="generate a seeded scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--packages", type=int, default=2)
    p.add_argument("--versions", type=int, default=3)
    p.add_argument("--drifts", type=int, default=1)
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("report", help="aggregate search reports")
    p.add_argument("reports", nargs="+", type=Path)
    p.add_argument("--out", type=Path)
    return parser


def config_from_args(args) -> RunConfig:
    if args.fixture:
        _fixture_config(args.fixture, args)
    return RunConfig(
        command=args.command,
        manifest=args.manifest,
        index=args.index,
        kb=args.kb,
        matrix=args.matrix,
        world=args.world,
        snippet=args.snippet,
        backend=args.backend,
        budget=SearchBudget(args.budget_seconds, args.max_validations),
        out=args.out,
        verbosity=args.verbose,
    )


def run(args) -> int:
    if args.command in ("search", "baseline"):
        return run_search(config_from_args(args))
    return {"analyze": run_analyze, "matrix": run_matrix, "simulate": run_simulate, "report": run_report}[
        args.command
    ](args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return run(args)
    except UsageError as exc:
        print(f"driftsearch: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError, DriftError, BackendFailure) as exc:
        print(f"driftsearch: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
