import numpy as np
import pytest

from itermask.volume import Volume


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_volume(rng, dims=(4, 4, 4), spacing=(1.0, 1.0, 1.0)):
    return Volume(rng.standard_normal(dims).astype(np.float32), spacing)


def sphere_mask(dims, center, radius):
    idx = np.indices(dims)
    dist2 = sum((idx[i] - center[i]) ** 2 for i in range(3))
    return dist2 <= radius**2


def dice(a, b):
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom
