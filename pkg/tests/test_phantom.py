import numpy as np
import pytest

from itermask.phantom import LesionSpec, make_phantom
from itermask.spectral import high_frequency_image

from conftest import sphere_mask


def test_no_lesion_truth_empty_and_pure_noise():
    ph = make_phantom((32, 32, 32), None, seed=0)
    assert not ph.truth.any()
    diff = ph.observed.data - ph.clean.data
    assert np.all(diff[~ph.brain] == 0)
    inside = diff[ph.brain]
    assert abs(inside.mean()) < 0.02
    assert abs(inside.std() - 0.1) < 0.02


def test_lesion_truth_matches_discrete_sphere_oracle():
    ph = make_phantom((64, 64, 64), LesionSpec((32, 32, 32), 8.0, 4.0), seed=1)
    sphere = sphere_mask((64, 64, 64), (32, 32, 32), 8)
    assert np.array_equal(ph.truth, sphere & ph.brain)
    # with the lesion fully inside the brain the count equals the raw sphere
    assert ph.truth.sum() == sphere.sum()


def test_phantom_deterministic():
    a = make_phantom((32, 32, 32), None, seed=7)
    b = make_phantom((32, 32, 32), None, seed=7)
    assert a.observed.data.tobytes() == b.observed.data.tobytes()
    assert a.clean.data.tobytes() == b.clean.data.tobytes()


def test_lesion_outside_brain_rejected():
    with pytest.raises(ValueError):
        make_phantom((32, 32, 32), LesionSpec((1, 1, 1), 3.0, 4.0), seed=0)


def test_texture_survives_highpass():
    # the fine texture must make the guidance image informative at r=15
    ph = make_phantom((64, 64, 64), None, seed=3)
    guidance = high_frequency_image(ph.clean, 15.0)
    assert guidance.data[ph.brain].std() > 0.05


def test_background_zero():
    ph = make_phantom((32, 32, 32), None, seed=4)
    assert np.all(ph.observed.data[~ph.brain] == 0)
    assert np.all(ph.clean.data[~ph.brain] == 0)
