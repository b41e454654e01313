import pytest
from hypothesis import settings

from stablebilevel.harness import problem_from_dict
from stablebilevel.instances import worked_example_doc, random_instance_doc

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, label = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {label}")


@pytest.fixture(scope="session")
def worked():
    return problem_from_dict(worked_example_doc())


def random_suite(count, start=0, **kw):
    """Deterministic list of (seed, problem, family, schedule)."""
    return [(s, *problem_from_dict(random_instance_doc(s, **kw))) for s in range(start, start + count)]
