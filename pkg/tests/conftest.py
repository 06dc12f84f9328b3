import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import make_dataset  # noqa: E402


@pytest.fixture
def tiny_dataset():
    # 3 users, 4 items, 2 categories; item 1 is split across both
    cats = [["a"], ["a", "b"], ["b"], ["b"]]
    rows = [
        (0, 0, 100), (0, 1, 200), (0, 2, 300),
        (1, 1, 150), (1, 3, 250),
        (2, 0, 120), (2, 2, 220), (2, 3, 320), (2, 3, 330),
    ]
    return make_dataset(rows, cats)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acc.LINES):
            terminalreporter.write_line(acc.LINES[n])
