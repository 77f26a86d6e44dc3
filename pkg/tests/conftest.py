import pytest

from support import make_fixture

_criteria: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        n, text = marker.args
        verdict = "PASS" if rep.passed else "FAIL"
        _criteria.append(f"criterion {n:>2} {verdict} ({rep.duration:.1f} s): {text}")


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def fx():
    f = make_fixture()
    yield f
    f.net.stop()


@pytest.fixture
def manual_fx():
    """Same network but blocks are cut only on demand."""
    f = make_fixture(start=False)
    yield f
    f.net.stop()
