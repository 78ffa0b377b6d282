import pytest

from corkland.core import default_config


@pytest.fixture(scope="session")
def sim():
    return default_config()
