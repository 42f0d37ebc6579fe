import pytest
from hypothesis import HealthCheck, settings

from heckelab.arith import working_precision
from heckelab.cm_curve import reference_ctx

settings.register_profile(
    "heckelab",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("heckelab")


@pytest.fixture(scope="session")
def cctx():
    return reference_ctx()


@pytest.fixture
def prec256():
    with working_precision(256):
        yield 256
