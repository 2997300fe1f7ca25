import os
from collections import deque

import pytest
from hypothesis import HealthCheck, settings

from ergodic_qt.geometry import Group

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

GROUPS = {
    "Z2": Group.zd(2),
    "Heisenberg3": Group.heisenberg(),
    "Lamplighter": Group.lamplighter(),
}


def bfs_ball(group, radius, center=None):
    """Word-metric ball by plain BFS over left multiplication, with distances."""
    start = group.identity if center is None else center
    dist = {start: 0}
    q = deque([start])
    while q:
        x = q.popleft()
        if dist[x] == radius:
            continue
        for s in group.generators:
            y = group.mul(s, x)
            if y not in dist:
                dist[y] = dist[x] + 1
                q.append(y)
    return dist


@pytest.fixture(params=sorted(GROUPS))
def any_group(request):
    return GROUPS[request.param]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
