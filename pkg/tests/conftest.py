import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from detproc.symbol import builtin_symbol

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one-dimensional builtins used across the property suites
BUILTINS_1D = [
    ("sin2",), ("sin2half",), ("arc", 0.0, 0.5), ("lozenge",), ("renewal", 0.5),
    ("ust_axis_g",), ("zigzag",), ("poly3",), ("recip_trig", 3.0, -1.0), ("const", 0.3),
]


def make(args):
    return builtin_symbol(*args)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
