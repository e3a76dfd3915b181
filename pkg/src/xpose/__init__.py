"""Extreme two-view relative pose estimation via object-centric novel-view
matching, with a synthetic oracle backend, evaluation harness, and pose-graph
loop-closure optimizer."""

__version__ = "0.1.0"

from .geom import (  # noqa: F401
    CameraIntrinsics,
    Homography,
    RigidTransform,
    SphericalViewpoint,
    SquareRoi,
)
from .match import PipelineConfig, estimate_pair  # noqa: F401
