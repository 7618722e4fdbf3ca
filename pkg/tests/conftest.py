from pathlib import Path

import pytest

from driftsearch.cli import fixture_path
from driftsearch.sim import load_world
from driftsearch.universe import generate_candidates, load_manifest

DATA = Path(__file__).parent / "data"

_criteria: dict[str, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        _criteria.setdefault(marker.args[0], []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _criteria.items():
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")


class Fixture:
    def __init__(self, name):
        self.name = name
        self.world = load_world(fixture_path(f"{name}-world.json"))
        self.manifest = load_manifest(fixture_path(f"{name}-manifest.json"))
        self.index = self.world.index
        self.kb = self.world.knowledge_base()
        self.snippet = self.world.snippets[self.manifest.snippet_id]

    def candidates(self):
        return generate_candidates(self.manifest, self.kb, self.index)


@pytest.fixture(scope="session")
def fig1():
    return Fixture("fig1")


@pytest.fixture(scope="session")
def sphinx():
    return Fixture("sphinx")


@pytest.fixture(scope="session")
def vd2():
    return Fixture("vd2")
