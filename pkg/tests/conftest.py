import numpy as np
import pytest

from survae.ad import Parameter


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def params_of(**arrays):
    return {name: Parameter(np.array(v, dtype=float), name=name) for name, v in arrays.items()}


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Collects named checks for one acceptance criterion and emits its PASS/FAIL line."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])
    made = []

    def make(number, title):
        v = Verdict(number, title, lines)
        made.append(v)
        return v

    yield make
    for v in made:
        if not v.done:
            v.emit(False, "did not complete")


class Verdict:
    def __init__(self, number, title, sink):
        self.number, self.title, self.sink = number, title, sink
        self.checks = []
        self.done = False

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))
        return bool(ok)

    def emit(self, ok, detail):
        self.done = True
        line = f"CRITERION {self.number:2d} {'PASS' if ok else 'FAIL'}  {self.title}: {detail}"
        self.sink.append(line)
        print(line)
        return line

    def finish(self, summary):
        """Emit the verdict: the summary on success, the failing checks otherwise."""
        failed = [d for ok, d in self.checks if not ok]
        line = self.emit(not failed, "; ".join(failed) if failed else summary)
        assert not failed, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
