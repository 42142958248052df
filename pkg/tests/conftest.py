import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def bundle() -> Path:
    """The committed fixture bundle (see scripts/make_fixtures.py)."""
    if not (FIXTURES / "config.json").is_file():
        pytest.fail("fixtures/ is missing; run scripts/make_fixtures.py")
    return FIXTURES
