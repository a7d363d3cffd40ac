import time

import pytest

from qitraj import NlpOptions, TranscriptionOptions, builtin, extract_solution, solve, transcribe

# criterion number -> (passed, detail); printed at the end of the session
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        ok, detail = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def record_criterion():
    def record(num, ok, detail):
        CRITERIA[num] = (bool(ok), detail)
        print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


class Run:
    """One timed benchmark solve."""

    def __init__(self, name, opts, nlp=NlpOptions()):
        self.ocp = builtin(name)
        self.opts = opts
        start = time.perf_counter()
        self.problem = transcribe(self.ocp, opts)
        self.result = solve(self.problem, nlp)
        self.solution = extract_solution(self.ocp, opts, self.result.z_star)
        self.seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def aly_chan_run():
    return Run("aly_chan", TranscriptionOptions(steps=100, shape=2.0, kernel=1, scheme="euler"))


@pytest.fixture(scope="session")
def van_der_pol_run():
    return Run("van_der_pol", TranscriptionOptions(steps=300, shape=2.0, kernel=1, scheme="hermite-simpson"))
