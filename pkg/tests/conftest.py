import math

import numpy as np
import pytest

from xpose.geom import CameraIntrinsics, SphericalViewpoint, viewpoint_to_pose
from xpose.synth import OracleGenerator, make_asset, render


def angle_between_deg(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def rotation_angle_deg(R):
    c = (np.trace(R) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def random_rotation(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    theta = rng.uniform(0.05, math.pi - 0.05)
    return rodrigues(axis, theta)


def rodrigues(axis, theta):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


@pytest.fixture(scope="session")
def square_intrinsics():
    return CameraIntrinsics(420.0, 420.0, 128.0, 128.0, 256, 256)


@pytest.fixture(scope="session")
def oracle_setup(square_intrinsics):
    """One asset + oracle + upright reference render shared by fast tests."""
    asset = make_asset(3)
    reference = SphericalViewpoint(50.0, 30.0, 0.0, 2.0)
    oracle = OracleGenerator(asset, reference, square_intrinsics)
    image, mask = render(
        asset,
        viewpoint_to_pose(
            SphericalViewpoint(50.0, 30.0, 0.0, oracle.distance)
        ),
        square_intrinsics,
    )
    return asset, oracle, image, mask
