import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from vkribbon.cross_section import named_profile  # noqa: E402


@pytest.fixture(scope="session")
def parabola():
    return named_profile("parabola")


@pytest.fixture(scope="session")
def quartic():
    return named_profile("quartic")
