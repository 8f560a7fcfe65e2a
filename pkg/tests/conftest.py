import numpy as np
import pytest

from stiefelflow import RngStream, random_point


@pytest.fixture
def rng():
    return RngStream(20240613)


def make_point(n, p, seed=0):
    return random_point(n, p, RngStream(seed).child(n, p))


def make_matrix(n, p, seed=1):
    return RngStream(seed).child(n, p, 1).generator().standard_normal((n, p))
