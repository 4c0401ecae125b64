import json
import sys
from pathlib import Path

import pytest

from evocomposer.schema import parse_composition

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def ballad_path() -> Path:
    return FIXTURES / "ballad.json"


@pytest.fixture
def ballad(ballad_path):
    return parse_composition(ballad_path.read_text())


@pytest.fixture
def ballad_doc(ballad_path) -> dict:
    return json.loads(ballad_path.read_text())


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
