"""Search reports and their corpus-level aggregation.

A report is a pure function of the run's inputs except for ``generated_at``,
the only field that may differ between two identical runs.
"""

from __future__ import annotations

import json
from collections import Counter
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional

from .search import SearchOutcome, Termination

REPORT_VERSION = 1
VOLATILE_FIELDS = ("generated_at",)


def outcome_to_json(
    outcome: SearchOutcome,
    *,
    snippet_id: str = "",
    strategy: str = "feedback",
    metadata: Optional[Mapping] = None,
    generated_at: Optional[str] = None,
) -> dict:
    return {
        "generated_at": generated_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "report_version": REPORT_VERSION,
        "snippet": snippet_id,
        "strategy": strategy,
        "termination": outcome.termination.value,
        "working_env": outcome.working_env.to_json() if outcome.working_env else None,
        "working_patch": outcome.working_patch.to_json() if outcome.working_patch else None,
        "validations_total": outcome.validations_total,
        "per_candidate_stats": [s.to_json() for s in outcome.per_candidate_stats],
        "drift_instances": [d.to_json(snippet_id) for d in outcome.drift_instances],
        "log": [r.to_json() for r in outcome.log],
        "metadata": dict(metadata or {}),
    }


def stable_view(report: Mapping) -> dict:
    """The report without its timestamp, for byte-level comparisons."""
    return {k: v for k, v in report.items() if k not in VOLATILE_FIELDS}


def dumps(report: Mapping) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(report: Mapping, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(report))


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "termination" not in data or "validations_total" not in data:
        raise ValueError(f"{path}: not a search report")
    return data


def aggregate(reports: Iterable[Mapping]) -> dict:
    """Summary counts over many reports, grouped by strategy."""
    by_strategy: dict[str, dict] = {}
    for rep in reports:
        s = by_strategy.setdefault(
            rep.get("strategy", "feedback"),
            {"snippets": 0, "terminations": Counter(), "validations": 0,
             "drift_instances": 0, "exceptions": Counter(), "operators": Counter()},
        )
        s["snippets"] += 1
        s["terminations"][rep["termination"]] += 1
        s["validations"] += rep["validations_total"]
        for d in rep.get("drift_instances", []):
            s["drift_instances"] += 1
            s["exceptions"][d["checkpoint"]["exception_name"]] += 1
            for m in d["patch"]:
                s["operators"][m["op"]] += 1
    out = {}
    for name, s in sorted(by_strategy.items()):
        working = s["terminations"].get(Termination.WORKING.value, 0)
        out[name] = {
            "snippets": s["snippets"],
            "working": working,
            "terminations": dict(sorted(s["terminations"].items())),
            "validations_total": s["validations"],
            "mean_validations": s["validations"] / s["snippets"] if s["snippets"] else 0.0,
            "drift_instances": s["drift_instances"],
            "drift_exceptions": dict(s["exceptions"].most_common()),
            "patch_operators": dict(sorted(s["operators"].items())),
        }
    return out


def render_summary(summary: Mapping) -> str:
    lines = []
    for name, s in summary.items():
        lines.append(f"[{name}] {s['snippets']} snippets, {s['working']} working, "
                     f"{s['drift_instances']} drift instances, {s['validations_total']} validations")
        for term, n in s["terminations"].items():
            lines.append(f"  {term:<15} {n}")
        for exc, n in s["drift_exceptions"].items():
            lines.append(f"  drift {exc:<20} {n}")
    return "\n".join(lines)
