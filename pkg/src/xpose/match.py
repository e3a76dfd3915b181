"""Viewpoint selection against the reference set, render-and-score pose
refinement, and the end-to-end pair estimation pipeline."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geom import (
    CameraIntrinsics,
    RigidTransform,
    SphericalViewpoint,
    compose_object_to_relative,
    distance_for_inscribed_sphere,
    inplane_rotation_matrix,
    lift_relative_to_input_cameras,
    look_at_rotation,
    object_centric_homography,
    roi_from_mask,
    viewpoint_to_pose,
    virtual_intrinsics,
    warp_image,
    wrap_delta_deg,
)
from .imutil import masked_ncc, resize, resize_mask, to_gray
from .orient import MatcherConfig, estimate_orientation, rotate_inplane
from .viewgen import ViewRequest, build_reference_set

logger = logging.getLogger(__name__)

SCORE_SIZE = 64
_BACKGROUND_THRESHOLD = 248


@dataclass(frozen=True)
class MatchScore:
    index: int
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("score must be finite")


@dataclass(frozen=True)
class PipelineConfig:
    s_v: int = 256
    n_views: int = 128
    steps_orient: int = 75
    steps_generate: int = 50
    refine_iters: int = 3
    scorer: str = "ncc"
    backend: str = "oracle"
    seed: int = 0
    endpoint: str | None = None
    workers: int = 1
    refine_radius_deg: float = 10.0

    def __post_init__(self):
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be >= 0")
        if self.s_v < 16:
            raise ValueError("s_v must be at least 16")
        if self.n_views < 1:
            raise ValueError("n_views must be at least 1")
        if self.scorer != "ncc":
            raise ValueError(f"unknown scorer {self.scorer!r} (available: ncc)")
        if self.backend not in ("oracle", "mock", "remote"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class PairEstimate:
    relative: RigidTransform
    diagnostics: dict = field(compare=False)


def mask_from_rendered(image: np.ndarray) -> np.ndarray:
    """Foreground of a white-background render or generated view."""
    return np.any(np.asarray(image) < _BACKGROUND_THRESHOLD, axis=-1)


def score_pair(query_image, query_mask, candidate_image, candidate_mask) -> float:
    """Zero-mean NCC between the two images at 64x64 grayscale, over the
    union of their (downsampled) masks; 0 for constant inputs."""
    qg = resize(to_gray(query_image), SCORE_SIZE)
    cg = resize(to_gray(candidate_image), SCORE_SIZE)
    qm = (
        resize_mask(query_mask, SCORE_SIZE)
        if query_mask is not None
        else np.ones((SCORE_SIZE, SCORE_SIZE), dtype=bool)
    )
    cm = (
        resize_mask(candidate_mask, SCORE_SIZE)
        if candidate_mask is not None
        else np.ones((SCORE_SIZE, SCORE_SIZE), dtype=bool)
    )
    union = qm | cm
    if not union.any():
        return 0.0
    return masked_ncc(qg, cg, union)


def select_viewpoint(query_image, query_mask, refset):
    """Index of the reference view most similar to the query.

    Returns (MatchScore of the argmax, full score vector); ties break toward
    the lowest index.
    """
    if len(refset) == 0:
        raise ValueError("reference set is empty")
    scores = np.empty(len(refset))
    for i, img in enumerate(refset.images):
        scores[i] = score_pair(query_image, query_mask, img, mask_from_rendered(img))
    best = int(np.argmax(scores))
    return MatchScore(best, float(scores[best])), scores


def refine_viewpoint(
    query_image,
    query_mask,
    coarse: SphericalViewpoint,
    generator,
    iters: int,
    reference: SphericalViewpoint,
    reference_image,
    radius_deg: float = 10.0,
    steps: int = 50,
    seed: int = 0,
) -> SphericalViewpoint:
    """Local render-and-score search around ``coarse``.

    Each iteration scores the 3x3x3 grid over (azimuth, elevation, inplane)
    offsets {-d, 0, +d} with d halving per iteration, and moves to the best.
    The inplane axis is realized by rotating the generated image, since the
    generation contract carries azimuth/elevation deltas only.
    """
    current = coarse
    for it in range(iters):
        delta = radius_deg / (2.0 ** it)
        offsets = (0.0, -delta, delta)
        angular = [
            (
                current.azimuth_deg + d_az,
                float(np.clip(current.elevation_deg + d_el, -89.0, 89.0)),
            )
            for d_az, d_el in itertools.product(offsets, repeat=2)
        ]
        request = ViewRequest(
            reference_image,
            tuple(
                (
                    wrap_delta_deg(az - reference.azimuth_deg),
                    el - reference.elevation_deg,
                )
                for az, el in angular
            ),
            steps,
            seed,
        )
        generated = generator.generate(request)
        best_score = -math.inf
        best_vp = current
        for (az, el), img in zip(angular, generated):
            gmask = mask_from_rendered(img)
            for d_ip in offsets:
                inplane = current.inplane_deg + d_ip
                candidate = rotate_inplane(img, inplane) if abs(inplane) > 1e-12 else img
                s = score_pair(query_image, query_mask, candidate, gmask)
                if s > best_score:
                    best_score = s
                    best_vp = SphericalViewpoint(az, el, inplane, current.distance)
        current = best_vp
    return current


def estimate_pair(
    img1,
    mask1,
    K1: CameraIntrinsics,
    img2,
    mask2,
    K2: CameraIntrinsics,
    config: PipelineConfig,
    generator,
) -> PairEstimate:
    """Full pipeline: object-centric warps, orientation of view 1, reference
    set generation, matching of view 2, and composition into the two-view
    camera pose (x_c2 = R @ x_c1 + t; translation is object-scale, direction
    meaningful)."""
    timings: dict[str, float] = {}
    diagnostics: dict = {"timings_ms": timings}

    t0 = time.perf_counter()
    roi1 = roi_from_mask(mask1)
    roi2 = roi_from_mask(mask2)
    Rv1 = look_at_rotation(roi1.center, K1)
    Rv2 = look_at_rotation(roi2.center, K2)
    Kv1 = virtual_intrinsics(K1, roi1, config.s_v)
    Kv2 = virtual_intrinsics(K2, roi2, config.s_v)
    H1 = object_centric_homography(K1, Kv1, Rv1)
    H2 = object_centric_homography(K2, Kv2, Rv2)
    Iv1, Mv1 = warp_image(img1, mask1, H1, config.s_v)
    Iv2, Mv2 = warp_image(img2, mask2, H2, config.s_v)
    timings["warp"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    matcher_cfg = MatcherConfig(
        intrinsics=Kv1, steps=config.steps_orient, seed=config.seed
    )
    orientation, rectified = estimate_orientation(Iv1, generator, matcher_cfg)
    timings["orientation"] = (time.perf_counter() - t0) * 1000.0
    diagnostics["orientation"] = {
        "inplane_deg": orientation.inplane_deg,
        "elevation_deg": orientation.elevation_deg,
        "score": orientation.score,
    }

    t0 = time.perf_counter()
    refset = build_reference_set(
        rectified,
        orientation,
        Kv1,
        config.n_views,
        generator,
        steps=config.steps_generate,
        seed=config.seed,
    )
    timings["reference_set"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    selected, scores = select_viewpoint(Iv2, Mv2, refset)
    coarse = refset.viewpoints[selected.index]
    timings["selection"] = (time.perf_counter() - t0) * 1000.0
    diagnostics["selected_index"] = selected.index
    diagnostics["selection_score"] = selected.score
    diagnostics["selection_scores"] = scores.tolist()

    t0 = time.perf_counter()
    reference_vp = refset.viewpoints[-1]
    refined = refine_viewpoint(
        Iv2,
        Mv2,
        coarse,
        generator,
        config.refine_iters,
        reference_vp,
        rectified,
        radius_deg=config.refine_radius_deg,
        steps=config.steps_generate,
        seed=config.seed,
    )
    timings["refinement"] = (time.perf_counter() - t0) * 1000.0
    diagnostics["refined_viewpoint"] = {
        "azimuth_deg": refined.azimuth_deg,
        "elevation_deg": refined.elevation_deg,
        "inplane_deg": refined.inplane_deg,
    }

    t0 = time.perf_counter()
    pose1 = viewpoint_to_pose(reference_vp)
    pose2 = viewpoint_to_pose(
        SphericalViewpoint(
            refined.azimuth_deg,
            refined.elevation_deg,
            refined.inplane_deg,
            distance_for_inscribed_sphere(Kv2),
        )
    )
    rel_v = compose_object_to_relative(pose1, pose2)
    # The rectified first view corresponds to the virtual camera rolled by
    # the estimated inplane angle, so fold that roll into Rv1 before lifting.
    Rv1_eff = inplane_rotation_matrix(-orientation.inplane_deg) @ Rv1.rotation
    relative = lift_relative_to_input_cameras(rel_v, Rv1_eff, Rv2.rotation)
    timings["compose"] = (time.perf_counter() - t0) * 1000.0

    return PairEstimate(relative=relative, diagnostics=diagnostics)
