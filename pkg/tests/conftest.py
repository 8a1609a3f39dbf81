import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_box3d(rng, center_range=20.0, z_range=2.0):
    """Arbitrary valid box for fuzzing (not necessarily car-shaped)."""
    from palf.geometry import Box3D

    return Box3D(
        position=(
            rng.uniform(-center_range, center_range),
            rng.uniform(-center_range, center_range),
            rng.uniform(-z_range, z_range),
        ),
        scale=(rng.uniform(0.5, 6.0), rng.uniform(0.5, 4.0), rng.uniform(0.5, 3.0)),
        yaw=rng.uniform(-np.pi, np.pi),
    )
