import sys

import pytest

from twophase_im.graph import toy_graph

from graphs import TOY_TEXT


@pytest.fixture
def toy():
    return toy_graph()


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.txt"
    path.write_text(TOY_TEXT)
    return str(path)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
