from __future__ import annotations

import json
from pathlib import Path

import pytest

from travelsim.adapters import load_fixture_bundle
from travelsim.core import parse_plan

GOLDEN = Path(__file__).parent / "golden"

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def bundle():
    return load_fixture_bundle("beijing-mini")


@pytest.fixture(scope="session")
def plan(bundle):
    return parse_plan(bundle.extras["plan.json"], bundle.pois)


@pytest.fixture(scope="session")
def profile(bundle):
    return bundle.profile()


@pytest.fixture(scope="session")
def decisions(bundle):
    return bundle.extras["decisions.json"]["decisions"]


@pytest.fixture(scope="session")
def golden():
    def load(name):
        path = GOLDEN / name
        text = path.read_text(encoding="utf-8")
        return json.loads(text) if name.endswith(".json") else text

    return load


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}{'  (' + detail + ')' if detail else ''}")
