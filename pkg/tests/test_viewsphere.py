import math

import numpy as np
import pytest

from xpose.geom import SphericalViewpoint
from xpose.viewsphere import ViewpointSet, delta_views, sample_upper_hemisphere


def directions(vps):
    return np.stack([vp.center / vp.distance for vp in vps])


def min_pairwise_separation_rad(vps):
    d = directions(vps)
    dots = d @ d.T
    np.fill_diagonal(dots, -1.0)
    return math.acos(min(1.0, max(-1.0, dots.max())))


class TestSampling:
    def test_single_viewpoint(self):
        vs = sample_upper_hemisphere(1, 2.5)
        assert len(vs) == 1
        assert 0.0 <= vs.viewpoints[0].elevation_deg < 90.0
        assert vs.viewpoints[0].distance == 2.5

    @pytest.mark.parametrize("n", [2, 8, 32, 128])
    def test_min_separation_bound(self, n):
        vs = sample_upper_hemisphere(n, 2.0)
        bound = 0.6 * math.sqrt(2 * math.pi / n)
        assert min_pairwise_separation_rad(vs.viewpoints) >= bound

    def test_determinism(self):
        a = sample_upper_hemisphere(64, 3.0)
        b = sample_upper_hemisphere(64, 3.0)
        for va, vb in zip(a, b):
            assert (va.azimuth_deg, va.elevation_deg, va.distance) == (
                vb.azimuth_deg,
                vb.elevation_deg,
                vb.distance,
            )

    @pytest.mark.parametrize("n", [32, 64, 128])
    def test_elevation_band_coverage(self, n):
        vs = sample_upper_hemisphere(n, 2.0)
        els = np.array([vp.elevation_deg for vp in vs])
        for lo in range(0, 75, 15):
            assert ((els >= lo) & (els < lo + 15)).any(), f"band {lo}..{lo+15} empty"

    def test_inplane_passthrough(self):
        vs = sample_upper_hemisphere(5, 2.0, inplane_deg=12.0)
        assert all(vp.inplane_deg == 12.0 for vp in vs)

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            sample_upper_hemisphere(0, 2.0)

    def test_set_invariants(self):
        with pytest.raises(ValueError):
            ViewpointSet(
                (SphericalViewpoint(0.0, -5.0, 0.0, 2.0),), seed=0, count=1
            )
        with pytest.raises(ValueError):
            ViewpointSet(
                (
                    SphericalViewpoint(0.0, 5.0, 0.0, 2.0),
                    SphericalViewpoint(0.0, 5.0, 0.0, 3.0),
                ),
                seed=0,
                count=2,
            )


class TestDeltaViews:
    def test_zero_for_same_viewpoint(self):
        vs = sample_upper_hemisphere(4, 2.0)
        ref = vs.viewpoints[2]
        deltas = delta_views(ref, vs)
        assert deltas[2] == (0.0, 0.0)

    def test_wrap_case(self):
        ref = SphericalViewpoint(350.0, 10.0, 0.0, 2.0)
        target_set = ViewpointSet(
            (SphericalViewpoint(10.0, 25.0, 0.0, 2.0),), seed=0, count=1
        )
        (d_az, d_el), = delta_views(ref, target_set)
        assert d_az == pytest.approx(20.0)
        assert d_el == pytest.approx(15.0)

    def test_order_preserving_and_inverse(self):
        vs = sample_upper_hemisphere(16, 2.0)
        ref = SphericalViewpoint(123.0, 22.0, 0.0, 2.0)
        deltas = delta_views(ref, vs)
        assert len(deltas) == 16
        for (d_az, d_el), vp in zip(deltas, vs):
            az = (ref.azimuth_deg + d_az) % 360.0
            assert abs(az - vp.azimuth_deg) % 360.0 < 1e-9
            assert ref.elevation_deg + d_el == pytest.approx(vp.elevation_deg, abs=1e-9)
