import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from periopml.data_model import ALL_SURGERIES
from periopml.synth import default_profile, sample_cohort

settings.register_profile(
    "periopml", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("periopml")


@pytest.fixture(scope="session")
def small_cohort():
    return sample_cohort(default_profile(ALL_SURGERIES, n=600, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def binary_task(n=300, p=5, seed=0):
    """Noisy linear labels on uniform features."""
    r = np.random.default_rng(seed)
    X = r.random((n, p))
    logit = 3.0 * (X[:, 0] - 0.5) - 2.0 * (X[:, 1] - 0.5)
    y = (r.random(n) < 1 / (1 + np.exp(-logit))).astype(np.int8)
    return X, y


# --- acceptance reporting -------------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            _ACCEPTANCE[self.number] = ("PASS", self.title, self.detail)
        else:
            msg = str(exc).splitlines()[0] if str(exc) else exc_type.__name__
            _ACCEPTANCE[self.number] = ("FAIL", self.title, f"{self.detail} {msg}".strip())
        print(self.line())
        return False

    def line(self) -> str:
        status, title, detail = _ACCEPTANCE[self.number]
        return f"criterion {self.number:2d} {status}: {title} | {detail}"


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title} | {detail}")
