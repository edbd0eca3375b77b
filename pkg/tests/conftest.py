import numpy as np
import pytest

from gradpoly.model import build_model

SPECS = {
    "torus1": {"kind": "torus", "params": {"weights": [[1], [-1]]}},
    "sym2": {"kind": "torus", "params": {"weights": [[1], [-1]]}, "functors": ["sym:2"]},
    "cross": {"kind": "torus", "params": {"weights": [[1, 0], [-1, 0], [0, 1], [0, -1]]}},
    "sl2": {"kind": "sl_n_real", "params": {"n": 2}},
    "sl3": {"kind": "sl_n_real", "params": {"n": 3}},
    "su21": {"kind": "su_p_q", "params": {"p": 2, "q": 1}},
    "su22": {"kind": "su_p_q", "params": {"p": 2, "q": 2}},
    "product": {"kind": "product", "params": {"factors": [
        {"kind": "sl_n_real", "params": {"n": 2}},
        {"kind": "torus", "params": {"weights": [[1], [-1]]}}]}},
}

_CACHE = {}


def model(name):
    if name not in _CACHE:
        _CACHE[name] = build_model(SPECS[name])
    return _CACHE[name]


@pytest.fixture(scope="session")
def models():
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
