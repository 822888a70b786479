import numpy as np
import pytest
from hypothesis import settings, strategies as st

from markov_bsde import RateModel, random_rate_model

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def two_state():
    return RateModel.homogeneous([[-1.0, 1.0], [1.0, -1.0]], 1.0, 1.0)


@pytest.fixture
def three_state():
    A = np.ones((3, 3))
    np.fill_diagonal(A, -2.0)
    return RateModel.homogeneous(A, 1.0, 1.0)


@st.composite
def rate_models(draw, min_states=2, max_states=6, max_pieces=3, zero_prob=0.3):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(min_states, max_states))
    pieces = draw(st.integers(1, max_pieces))
    er = draw(st.sampled_from([0.25, 0.5, 1.0]))
    return random_rate_model(np.random.default_rng(seed), n, 1.0, pieces, er, zero_prob)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one numbered acceptance criterion")
    config._acceptance_lines = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    verdict = "PASS" if report.passed else "FAIL"
    line = f"criterion {number:>2} {verdict}  {title}" + (f"  [{detail}]" if detail else "")
    item.config._acceptance_lines[number] = line


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
