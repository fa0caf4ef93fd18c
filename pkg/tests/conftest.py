import numpy as np
import pytest

from spiketrack.autodiff import reset_tape, set_debug


@pytest.fixture(autouse=True)
def _clean_engine():
    """Fresh tape and NaN sentinels for every test; heavy runs opt out."""
    set_debug(True)
    reset_tape()
    yield
    set_debug(False)
    reset_tape()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
