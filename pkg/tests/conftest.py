import sys
from pathlib import Path

import pytest
from threadpoolctl import threadpool_limits

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session", autouse=True)
def single_threaded_blas():
    # The suite runs thousands of small factorizations; BLAS thread wake-ups
    # dominate otherwise.
    with threadpool_limits(limits=1):
        yield
