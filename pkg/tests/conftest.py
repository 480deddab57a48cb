import functools
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from spiralrot import GaugeSpec, compose_schedule, generate_schedule  # noqa: E402


@functools.lru_cache(maxsize=None)
def plan_and_map(p, N, mode="stretch-rotation", family="log-power", parameter=1.0):
    plan = generate_schedule(p, N, GaugeSpec(family, parameter), mode)
    return plan, compose_schedule(plan)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
