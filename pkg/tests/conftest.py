import time

import pytest

ACCEPTANCE_LINES = []


class Recorder:
    def __init__(self, number, limit):
        self.number = number
        self.limit = limit
        self.start = time.perf_counter()

    def finish(self, ok, detail):
        elapsed = time.perf_counter() - self.start
        within = self.limit is None or elapsed < self.limit
        verdict = "PASS" if ok and within else "FAIL"
        budget = "" if self.limit is None else f" [{elapsed:.1f}s of {self.limit}s]"
        line = f"criterion {self.number:2d}: {verdict}{budget} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail
        assert within, f"runtime {elapsed:.1f}s exceeds {self.limit}s"


@pytest.fixture
def acceptance():
    return Recorder


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
