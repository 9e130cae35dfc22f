import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def convergence_slope(hs, errors):
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, str] = {}


class Criterion:
    """Collects named checks for one acceptance criterion and records a verdict line."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.checks: list[tuple[str, bool, str]] = []

    def check(self, name: str, ok, detail: str = "") -> bool:
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        failed = [c for c in self.checks if not c[1]]
        ok = exc_type is None and not failed
        if exc_type is not None:
            why = f"error: {exc_type.__name__}: {exc}"
        elif failed:
            why = "; ".join(f"{n} ({d})" for n, _, d in failed)
        else:
            why = f"{len(self.checks)} checks"
        line = f"CRITERION {self.number} {'PASS' if ok else 'FAIL'}: {self.title} [{why}]"
        _CRITERIA[self.number] = line
        print(line)
        if exc_type is None and failed:
            raise AssertionError("\n".join(f"{n}: {d}" for n, _, d in failed))
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
