import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from beliefmatch import build_toric  # noqa: E402


@pytest.fixture(scope="session")
def code4():
    return build_toric(4)


@pytest.fixture(scope="session")
def code6():
    return build_toric(6)
