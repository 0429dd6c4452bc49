import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from divctl.model import ModelParams  # noqa: E402


@pytest.fixture(scope="session")
def ref():
    """Reference instance used throughout the suite."""
    return ModelParams(mu=0.5, sigma=1.0, rho=0.25, K=0.2, Delta=0.05)
