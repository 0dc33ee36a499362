import numpy as np
import pytest

from sparse_poisson.model import build_model, half_normal_design, random_sparse_truth


@pytest.fixture
def small_model():
    rng = np.random.default_rng(1234)
    A = rng.uniform(0.0, 1.0, size=(8, 4))
    return build_model(A, rng.uniform(0.5, 2.0, size=8))


@pytest.fixture
def poisson_instance():
    """Half-normal design, 3-sparse truth with ||w||_1 = 2 and sampled counts."""
    rng = np.random.default_rng(7)
    model = build_model(half_normal_design(40, 10, rng), 1.0)
    truth = random_sparse_truth(10, 3, 2.0, rng)
    y = rng.poisson(model.lambda0 + model.A @ truth.w_star)
    return model, truth, y


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion, printed after the test summary

_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion for the terminal report."""

    def _record(number: int, title: str, passed: bool, detail: str = ""):
        _ACCEPTANCE[number] = (title, bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}  {detail}")
