import itertools
import json

import numpy as np
import pytest

from spinflux_cli.engines.builtins import BRICKLAYER_CANONICAL, BRICKLAYER_MIXING, bricklayer_model, leroux_model
from spinflux_cli.engines.model import SpinModel


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long acceptance experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def exchange_model(labels, xi, g, base_rate=2.0, name="exchange", extra=()):
    """Nearest-neighbour swaps with rate base_rate + g(a) − g(b), plus any extra jumps."""
    transitions = [
        ((labels[i], labels[j]), (labels[j], labels[i]), base_rate + g[i] - g[j])
        for i, j in itertools.permutations(range(len(labels)), 2)
    ] + list(extra)
    return SpinModel.from_labels(
        states=labels,
        xi=xi,
        base_measure=np.full(len(labels), 1.0 / len(labels)),
        transitions=transitions,
        name=name,
    )


@pytest.fixture(scope="session")
def leroux():
    return leroux_model(0.0, 0.0)


@pytest.fixture(scope="session")
def leroux_ab():
    return leroux_model(1.0, 1.0)


@pytest.fixture(scope="session")
def bricklayer_canonical():
    return bricklayer_model(**BRICKLAYER_CANONICAL)


@pytest.fixture(scope="session")
def bricklayer():
    return bricklayer_model(**BRICKLAYER_MIXING)


@pytest.fixture(scope="session")
def three_laws():
    """Four states, three indicator conservation laws, asymmetric swaps."""
    return exchange_model(
        ("A", "B", "C", "0"),
        [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]],
        g=(0.0, 0.5, 1.0, 0.25),
        name="three-laws",
    )


ONE_LAW_MERGES = (
    (("a", "c"), ("b", "b"), 0.5),
    (("c", "a"), ("b", "b"), 0.5),
    (("b", "b"), ("c", "a"), 0.5),
    (("b", "b"), ("a", "c"), 0.5),
)


@pytest.fixture(scope="session")
def one_law():
    """ξ ∈ {0, 1, 2}; the (a, c) ↔ (b, b) jumps connect compositions with equal totals."""
    return exchange_model(("a", "b", "c"), [[0], [1], [2]], g=(0.0, 0.2, 0.4), base_rate=1.0, name="one-law",
                          extra=ONE_LAW_MERGES)


@pytest.fixture(scope="session")
def broken_bricklayer():
    """Only the p jumps; conserves both quantities but violates the rate cycle."""
    return SpinModel.from_labels(
        states=("0-", "0+", "1-", "1+"),
        xi=[[-1, 0], [1, 0], [-1, 1], [1, 1]],
        base_measure=np.full(4, 0.25),
        transitions=[(("0-", "1-"), ("1-", "0-"), 1.0), (("1+", "0+"), ("0+", "1+"), 1.0)],
        name="broken",
    )


@pytest.fixture
def broken_model_file(tmp_path, broken_bricklayer):
    from spinflux_cli.model_io import save_model

    path = tmp_path / "broken.json"
    save_model(broken_bricklayer, path)
    return path


@pytest.fixture
def leroux_document(leroux):
    from spinflux_cli.model_io import model_document

    return json.loads(json.dumps(model_document(leroux)))


@pytest.fixture(scope="session")
def leroux_triangle():
    """Admissible Leroux points: ρ ∈ [0.05, 0.9], |u| ≤ 1 − ρ − 0.05."""
    points = []
    for rho in np.linspace(0.05, 0.9, 9):
        bound = 1.0 - rho - 0.05
        for u in np.linspace(-bound, bound, 7):
            points.append((u, rho))
    return np.array(points)
