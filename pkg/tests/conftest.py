import numpy as np
import pytest

from streamsage.core import FeatureSpec, Schema, TargetSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def numeric_schema():
    def make(d=3, classes=None):
        target = TargetSpec("y", "class", classes) if classes else TargetSpec("y", "real")
        return Schema(tuple(FeatureSpec(f"x{i}") for i in range(d)), target)

    return make
