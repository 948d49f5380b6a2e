import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion.

    Call ``criterion(k, title, ok, detail)``; a test that raises before
    reporting is recorded as a failure.
    """
    lines = request.config.stash[_ACCEPTANCE]
    seen = []

    def report(k, title, ok, detail=""):
        lines[k] = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
        print(lines[k])
        seen.append(k)
        return ok

    yield report
    if not seen:
        name = request.node.name
        lines.setdefault(name, f"{name}: FAIL  (raised before reporting)")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=str):
            terminalreporter.write_line(lines[key])
