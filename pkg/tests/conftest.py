import numpy as np
import pytest

from itsim.series import SyntheticSpec, generate_synthetic


@pytest.fixture
def trend_data():
    return generate_synthetic(SyntheticSpec(beta0=10, beta1=0.05, rho=0.3, sigma=1, n_pre=60, n_post=12, seed=42))


@pytest.fixture
def seasonal_data():
    spec = SyntheticSpec(beta0=20, beta1=0.1, rho=0.5, sigma=1, n_pre=72, n_post=12, seed=7, sin_coef=4, cos_coef=2)
    return generate_synthetic(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One pass/fail line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: dict[int, tuple[bool, str, str]] = {}
ACCEPTANCE_COUNT = 13


@pytest.fixture
def record():
    def _record(number: int, title: str, ok: bool, detail: str):
        ACCEPTANCE_LINES[number] = (bool(ok), title, detail)
        print(f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    ran = [r for rs in terminalreporter.stats.values() for r in rs if "test_acceptance" in getattr(r, "nodeid", "")]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        if n in ACCEPTANCE_LINES:
            ok, title, detail = ACCEPTANCE_LINES[n]
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d} FAIL  not run to completion")
