"""Find working dependency configurations for code snippets that suffer from dependency drift."""

from .environment import DriftInstance, EnvironmentSpec, Mutation, MutationOp, Patch, apply_mutation, canonical_key
from .matrix import UpgradeMatrix, build_matrix, exploration_order
from .search import (
    SearchBudget,
    SearchOutcome,
    Termination,
    feedback_directed_search,
    iddfs,
    iddfs_baseline,
    matrix_mutator,
)
from .semver import ReleaseHistory, Version, decrement_semver_major, decrement_semver_minor, parse_version
from .universe import KnowledgeBase, PackageIndex, SnippetManifest, generate_candidates
from .validation import Status, ValidationResult, is_fixable, is_fixed, localize_fault, timeout_budget

__version__ = "0.1.0"

__all__ = [
    "DriftInstance",
    "EnvironmentSpec",
    "KnowledgeBase",
    "Mutation",
    "MutationOp",
    "PackageIndex",
    "Patch",
    "ReleaseHistory",
    "SearchBudget",
    "SearchOutcome",
    "SnippetManifest",
    "Status",
    "Termination",
    "UpgradeMatrix",
    "ValidationResult",
    "Version",
    "apply_mutation",
    "build_matrix",
    "canonical_key",
    "decrement_semver_major",
    "decrement_semver_minor",
    "exploration_order",
    "feedback_directed_search",
    "generate_candidates",
    "iddfs",
    "iddfs_baseline",
    "is_fixable",
    "is_fixed",
    "localize_fault",
    "matrix_mutator",
    "parse_version",
    "timeout_budget",
]
