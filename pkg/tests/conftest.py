import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from meanprint.synthgen import gen_master

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA: list[str] = []


@pytest.fixture
def criterion(capsys):
    """Record one acceptance line; shown in the terminal summary."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _CRITERIA.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def master():
    return gen_master(seed=3)


def line_skeleton(shape, pts):
    sk = np.zeros(shape, dtype=bool)
    for x, y in pts:
        sk[y, x] = True
    return sk


@pytest.fixture(scope="session")
def db10(tmp_path_factory):
    """Seeded synthetic database: 10 fingers x 8 impressions, dropout 0.05, 3 breaks."""
    from meanprint.evaluation import gen_synthetic_db

    out = tmp_path_factory.mktemp("db10")
    gen_synthetic_db(out, fingers=10, impressions=8, seed=42)
    return out
