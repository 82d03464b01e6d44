import pytest

from hypothesis import settings

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")

# criterion number -> (status, detail), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"{status} criterion {num}: {detail}")


@pytest.fixture
def record_criterion():
    def record(num, ok, detail):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE[num] = (status, detail)
        print(f"{status} criterion {num}: {detail}")
        return ok
    return record
