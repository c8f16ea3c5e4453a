import pytest

from paratag.textcore import get_profile


@pytest.fixture(scope="session")
def en():
    return get_profile("en")


@pytest.fixture(scope="session")
def zh():
    return get_profile("zh")
