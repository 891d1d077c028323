import os

import numpy as np
import pytest

# keep test runs from writing a log file into the checkout
os.environ.setdefault("WOTLAB_LOG_FILE", "")

from wotlab.config import SolverOptions  # noqa: E402
from wotlab.services.measures import DiscreteMeasure  # noqa: E402


@pytest.fixture
def opts() -> SolverOptions:
    return SolverOptions()


@pytest.fixture
def delta0() -> DiscreteMeasure:
    return DiscreteMeasure.dirac(0.0)


@pytest.fixture
def delta1() -> DiscreteMeasure:
    return DiscreteMeasure.dirac(1.0)


@pytest.fixture
def symmetric_pair() -> DiscreteMeasure:
    return DiscreteMeasure.create([-1.0, 1.0], [0.5, 0.5])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)
