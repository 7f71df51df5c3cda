import os

os.environ.setdefault("CHISQ_NO_DOTENV", "1")
os.environ.setdefault("CHISQ_QUIET", "1")

import numpy as np
import pytest

from logger import ProcessingLogger


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def logger():
    return ProcessingLogger(quiet=True)
