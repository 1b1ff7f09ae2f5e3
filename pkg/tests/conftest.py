import numpy as np
import pytest

from scatterzo import mlr
from scatterzo.scattering import ScatteringConfig, build_filter_bank, scatter_batch
from scatterzo.synthgen import gen_cbf


@pytest.fixture(scope="session")
def paper_bank():
    return build_filter_bank(ScatteringConfig())


@pytest.fixture(scope="session")
def cbf_problem(paper_bank):
    """CBF training features (100/class) with a fitted model."""
    train = gen_cbf(100, seed=1)
    features = scatter_batch(train, paper_bank)
    model = mlr.fit(features, train.labels, mlr.FitConfig(seed=0))
    return train, features, model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def record_criterion(number, passed, detail):
    previous = ACCEPTANCE_RESULTS.get(number)
    if previous is not None:
        passed = passed and previous[0]
        detail = f"{previous[1]}; {detail}"
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
