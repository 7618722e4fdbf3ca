"""Version upgrade matrices mined from single-dependency upgrade events.

Each cell counts how many CI builds upgraded a package from one version to
another and how many of those went from passing to failing.  Counts rather
than percentages are stored so matrices from several event files merge
associatively.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

from .semver import Version, parse_version

log = logging.getLogger(__name__)

BUILD_STATUSES = ("passing", "failing", "canceled", "errored")
_UNUSABLE = {"canceled", "errored"}
EVENT_COLUMNS = ("package", "from_version", "to_version", "status_before", "status_after")


@dataclass(frozen=True)
class UpgradeEvent:
    package: str
    from_version: Version
    to_version: Version
    status_before: str
    status_after: str
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.from_version == self.to_version:
            raise ValueError(f"{self.package}: upgrade event does not change the version")
        for status in (self.status_before, self.status_after):
            if status not in BUILD_STATUSES:
                raise ValueError(f"unknown build status {status!r}")


@dataclass(frozen=True)
class Cell:
    total: int
    broken: int

    def __post_init__(self):
        if self.total <= 0 or not 0 <= self.broken <= self.total:
            raise ValueError(f"invalid cell counts total={self.total} broken={self.broken}")

    @property
    def percent(self) -> float:
        return 100.0 * self.broken / self.total


@dataclass(frozen=True)
class UpgradeMatrix:
    """``cells[(from_version, to_version)]`` describes upgrading from -> to."""

    package: str
    cells: Mapping[tuple[Version, Version], Cell]

    def breakage(self, from_version: Version, to_version: Version) -> Optional[float]:
        cell = self.cells.get((from_version, to_version))
        return None if cell is None else cell.percent

    def merge(self, other: "UpgradeMatrix") -> "UpgradeMatrix":
        cells = dict(self.cells)
        for key, cell in other.cells.items():
            prev = cells.get(key)
            cells[key] = cell if prev is None else Cell(prev.total + cell.total, prev.broken + cell.broken)
        return UpgradeMatrix(self.package, cells)

    def versions(self) -> tuple[list[Version], list[Version]]:
        rows = sorted({f for f, _ in self.cells})
        cols = sorted({t for _, t in self.cells})
        return rows, cols


def parse_event_rows(rows: Iterable[Mapping[str, str]], source: str = "") -> tuple[list[UpgradeEvent], int]:
    """Parse CSV dict rows; returns the events and the number of malformed rows skipped."""
    events, malformed = [], 0
    for lineno, row in enumerate(rows, start=2):
        try:
            events.append(
                UpgradeEvent(
                    row["package"].strip(),
                    parse_version(row["from_version"]),
                    parse_version(row["to_version"]),
                    row["status_before"].strip().lower(),
                    row["status_after"].strip().lower(),
                    source,
                )
            )
        except (KeyError, ValueError, AttributeError) as exc:
            malformed += 1
            log.warning("%s:%d: skipping malformed upgrade event (%s)", source or "<events>", lineno, exc)
    return events, malformed


def load_events(path) -> tuple[list[UpgradeEvent], int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_event_rows(csv.DictReader(fh), str(path))


def build_matrix(events: Iterable[UpgradeEvent]) -> dict[str, UpgradeMatrix]:
    """Fold upgrade events into per-package matrices.

    Builds whose status before or after the upgrade was canceled or errored
    say nothing about the upgrade and are dropped.  A build is broken when it
    went from passing to failing.
    """
    totals: dict[str, dict] = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    for ev in events:
        if ev.status_before in _UNUSABLE or ev.status_after in _UNUSABLE:
            continue
        counts = totals[ev.package][(ev.from_version, ev.to_version)]
        counts[0] += 1
        if ev.status_before == "passing" and ev.status_after == "failing":
            counts[1] += 1
    return {
        pkg: UpgradeMatrix(pkg, {key: Cell(t, b) for key, (t, b) in cells.items()})
        for pkg, cells in totals.items()
    }


def exploration_order(matrix: UpgradeMatrix, current: Version) -> list[Version]:
    """Downgrade targets suggested by breaking upgrades, most promising first.

    Only upgrades that broke at least one build and whose target is at most
    ``current`` are considered.  Upgrade targets are visited newest first; for
    each, its not-yet-listed source versions are appended by descending
    breakage (then descending version).
    """
    groups: dict[Version, list[tuple[float, Version]]] = defaultdict(list)
    for (source, target), cell in matrix.cells.items():
        if cell.broken > 0 and target <= current:
            groups[target].append((cell.percent, source))
    ordering: list[Version] = []
    placed: set[Version] = set()
    for target in sorted(groups, reverse=True):
        for _, source in sorted(groups[target], key=lambda ps: (ps[0], ps[1]), reverse=True):
            if source not in placed:
                placed.add(source)
                ordering.append(source)
    return ordering


def matrices_to_json(matrices: Mapping[str, UpgradeMatrix]) -> dict:
    return {
        pkg: {
            "cells": [
                {"from": f.raw, "to": t.raw, "total": c.total, "broken": c.broken}
                for (f, t), c in sorted(m.cells.items())
            ]
        }
        for pkg, m in sorted(matrices.items())
    }


def matrices_from_json(data: Mapping) -> dict[str, UpgradeMatrix]:
    out = {}
    for pkg, body in data.items():
        if pkg.startswith("_"):
            continue
        cells = {}
        for c in body.get("cells", []):
            key = (parse_version(c["from"]), parse_version(c["to"]))
            cells[key] = Cell(int(c["total"]), int(c["broken"]))
        out[pkg] = UpgradeMatrix(pkg, cells)
    return out


def load_matrices(path) -> dict[str, UpgradeMatrix]:
    with open(path, encoding="utf-8") as fh:
        return matrices_from_json(json.load(fh))


def save_matrices(matrices: Mapping[str, UpgradeMatrix], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(matrices_to_json(matrices), fh, indent=2)
        fh.write("\n")


def render_matrix(matrix: UpgradeMatrix) -> str:
    """Text grid: one row per source version, one column per target version."""
    rows, cols = matrix.versions()
    head = [f"{matrix.package} from \\ to"] + [c.raw for c in cols]
    table = [head]
    for r in rows:
        line = [r.raw]
        for c in cols:
            pct = matrix.breakage(r, c)
            line.append("." if pct is None else f"{pct:.0f}%")
        table.append(line)
    widths = [max(len(row[i]) for row in table) for i in range(len(head))]
    return "\n".join(
        "  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(row, widths)))
        for row in table
    )


def iter_jumps(ordering: Iterable[Version], current: Version) -> Iterator[Version]:
    """Ordering entries usable as downgrades from ``current``."""
    for v in ordering:
        if v < current:
            yield v
