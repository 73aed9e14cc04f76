import pytest
from hypothesis import HealthCheck, settings

from smallgroup_lab.groups import cyclic_tower, enumerate_fibers

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (description, passed); filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def z4():
    """{e} <- Z/2 <- Z/4 with reduction maps."""
    tower = cyclic_tower([1, 2, 4])
    return tower, enumerate_fibers(tower)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        desc, ok = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {desc}")
