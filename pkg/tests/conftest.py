import numpy as np
import pytest

from facefuse.synthetic import (
    contour_landmark_vertices,
    generate_synthetic_model,
    standard_synthetic_mapping,
    synthetic_camera,
    synthetic_texture,
)


@pytest.fixture(scope="session")
def small_model():
    """Default 16x16 sheet model with blendshapes."""
    return generate_synthetic_model(seed=0)


@pytest.fixture(scope="session")
def small_mapping():
    return standard_synthetic_mapping((16, 16))


@pytest.fixture(scope="session")
def contour_vertices():
    return contour_landmark_vertices((16, 16))


@pytest.fixture(scope="session")
def frontal_camera():
    return synthetic_camera(0.0)


@pytest.fixture(scope="session")
def texture256():
    return synthetic_texture(256, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
