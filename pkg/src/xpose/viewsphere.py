"""Deterministic reference-viewpoint sampling on the upper hemisphere."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import SphericalViewpoint, wrap_delta_deg

GOLDEN_ANGLE_DEG = math.degrees(math.pi * (3.0 - math.sqrt(5.0)))


@dataclass(frozen=True)
class ViewpointSet:
    """Ordered, deterministic set of hemisphere viewpoints."""

    viewpoints: tuple[SphericalViewpoint, ...]
    seed: int
    count: int

    def __post_init__(self):
        if len(self.viewpoints) != self.count:
            raise ValueError("count does not match the number of viewpoints")
        distances = {vp.distance for vp in self.viewpoints}
        if len(distances) > 1:
            raise ValueError("all viewpoints must share one distance")
        for vp in self.viewpoints:
            if not 0.0 <= vp.elevation_deg < 90.0:
                raise ValueError("hemisphere elevations must lie in [0, 90)")

    def __len__(self):
        return self.count

    def __iter__(self):
        return iter(self.viewpoints)


def sample_upper_hemisphere(
    n: int, distance: float, inplane_deg: float = 0.0, seed: int = 0
) -> ViewpointSet:
    """Fibonacci-lattice sampling of ``n`` viewpoints on the upper hemisphere.

    Stratified z with golden-angle azimuth steps; parameter-free and
    bit-deterministic for fixed (n, seed).  All viewpoints share the given
    distance and inplane angle.
    """
    if n < 1:
        raise ValueError("need at least one viewpoint")
    i = np.arange(n)
    z = (i + 0.5) / n
    elevation = np.degrees(np.arcsin(z))
    azimuth = (i * GOLDEN_ANGLE_DEG) % 360.0
    vps = tuple(
        SphericalViewpoint(float(a), float(e), inplane_deg, distance)
        for a, e in zip(azimuth, elevation)
    )
    return ViewpointSet(vps, seed=seed, count=n)


def delta_views(
    reference: SphericalViewpoint, targets: ViewpointSet
) -> list[tuple[float, float]]:
    """Per-target (delta azimuth, delta elevation) relative to ``reference``.

    Azimuth deltas are wrapped into (-180, 180]; the reference's canonical
    azimuth is whatever the caller set (0 for the first object-centric view).
    """
    return [
        (
            wrap_delta_deg(t.azimuth_deg - reference.azimuth_deg),
            t.elevation_deg - reference.elevation_deg,
        )
        for t in targets
    ]
