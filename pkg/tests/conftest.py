import os
import tempfile

# scale cache must not touch the user cache dir; set before src.config is imported
os.environ.setdefault("PACKLAB_CACHE", tempfile.mkdtemp(prefix="packlab-cache-"))

import pytest
from hypothesis import HealthCheck, settings

from src.integrations.cantor import build_model
from src.integrations.dimfunc import make_builtin

settings.register_profile(
    "packlab",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("packlab")


@pytest.fixture(scope="session")
def sqrt_gauge():
    return make_builtin({"kind": "power", "s": "1/2"}, label="h")


@pytest.fixture(scope="session")
def cube_root_gauge():
    return make_builtin({"kind": "power", "s": "1/3"}, label="g")


@pytest.fixture(scope="session")
def linear_gauge():
    return make_builtin({"kind": "power", "s": 1}, label="h")


@pytest.fixture(scope="session")
def model_d1(sqrt_gauge):
    """d = 1, h = t^(1/2): a_n = 4^-n."""
    return build_model(sqrt_gauge, d=1, depth=12)


@pytest.fixture(scope="session")
def model_d2(linear_gauge):
    """d = 2, h = t: a_n = 4^-n."""
    return build_model(linear_gauge, d=2, depth=8)


@pytest.fixture(scope="session")
def deep_model_d1(sqrt_gauge):
    return build_model(sqrt_gauge, d=1, depth=26)
