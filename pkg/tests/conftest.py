import pytest

from bct import numerics as num


@pytest.fixture(autouse=True)
def _default_width():
    """Tests run at 64-bit unless they opt into 32-bit themselves."""
    num.set_element_width(64)
    yield
    num.set_element_width(64)
