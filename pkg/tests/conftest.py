import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

os.environ.setdefault("SOURCE_DATE_EPOCH", "1700000000")


@pytest.fixture
def fixtures_dir():
    return FIXTURES
