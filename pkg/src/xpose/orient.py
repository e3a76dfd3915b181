"""Joint in-plane rotation and canonical elevation estimation for the first
object-centric view, via three-stage coarse-to-fine enumeration scored by
triangulation consistency of generated nearby views."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import fft as _fft

from .errors import EmptyList
from .geom import (
    CameraIntrinsics,
    Homography,
    SphericalViewpoint,
    distance_for_inscribed_sphere,
    viewpoint_to_pose,
    warp_image,
)
from .imutil import to_gray
from .viewgen import ViewRequest

logger = logging.getLogger(__name__)

DEFAULT_STAGES = (
    ((-30.0, -10.0, 10.0, 30.0), 20.0),
    ((0.0, -14.0, -7.0, 7.0, 14.0), 7.0),
    ((0.0, -4.0, -2.0, 2.0, 4.0), 2.0),
)


@dataclass(frozen=True)
class SearchSchedule:
    """Per-stage (candidate offsets, interval) of the coarse-to-fine search.

    Stage-1 offsets are taken around the search center, later stages around
    the previous best.  Offsets are enumerated center-first within a stage so
    ties resolve toward the incumbent.
    """

    stages: tuple = DEFAULT_STAGES

    def __post_init__(self):
        intervals = [s[1] for s in self.stages]
        if any(b >= a for a, b in zip(intervals, intervals[1:])):
            raise ValueError("stage intervals must be strictly decreasing")


@dataclass(frozen=True)
class OrientationHypothesis:
    inplane_deg: float
    elevation_deg: float
    score: float

    def __post_init__(self):
        if not -45.0 <= self.inplane_deg <= 45.0:
            raise ValueError("inplane estimate out of [-45, 45]")
        if not -10.0 <= self.elevation_deg <= 80.0:
            raise ValueError("elevation estimate out of [-10, 80]")
        if not math.isfinite(self.score):
            raise ValueError("score must be finite")


def coarse_to_fine_angles(
    score_fn: Callable[[float], float],
    max_abs_deg: float = 45.0,
    center_deg: float = 0.0,
    schedule: Optional[SearchSchedule] = None,
    workers: int = 1,
) -> float:
    """Three-stage enumeration returning the best-scoring angle overall.

    Never evaluates outside [center - max_abs, center + max_abs]; duplicate
    candidates are memoized, so at most 14 evaluations occur with the default
    schedule.  Ties keep the earlier-enumerated candidate.  With workers > 1
    a stage's fresh candidates are scored concurrently; the argmax reduction
    stays in enumeration order, so the result is unchanged.
    """
    stages = (schedule or SearchSchedule()).stages
    lo, hi = center_deg - max_abs_deg, center_deg + max_abs_deg
    memo: dict[float, float] = {}

    best_angle = None
    best_score = -math.inf
    anchor = center_deg
    for stage_idx, (offsets, _interval) in enumerate(stages):
        base = center_deg if stage_idx == 0 else anchor
        candidates = [round(min(max(base + off, lo), hi), 9) for off in offsets]
        fresh = [a for a in dict.fromkeys(candidates) if a not in memo]
        if workers > 1 and len(fresh) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for angle, s in zip(fresh, pool.map(score_fn, fresh)):
                    memo[angle] = float(s)
        else:
            for angle in fresh:
                memo[angle] = float(score_fn(angle))
        for angle in candidates:
            if memo[angle] > best_score:
                best_score = memo[angle]
                best_angle = angle
        anchor = best_angle
    return float(best_angle)


@dataclass(frozen=True)
class MatcherConfig:
    """Configuration of the correspondence matcher and consistency scorer.

    Grid/patch/radius/threshold defaults are stated for s_v = 256 and scale
    linearly with the virtual image size.
    """

    intrinsics: CameraIntrinsics
    grid: int = 20
    patch: int = 15
    radius: int = 24
    fb_tol_px: float = 1.5
    min_ncc: float = 0.5
    distinct_margin: float = 0.08
    tau_px: float = 1.0
    nearby_deg: float = 10.0
    min_tracks: int = 8
    steps: int = 75
    seed: int = 0
    workers: int = 1
    elevation_center_deg: float = 35.0
    elevation_halfspan_deg: float = 45.0
    schedule: SearchSchedule = field(default_factory=SearchSchedule)

    @property
    def scale(self) -> float:
        return self.intrinsics.width / 256.0


class ConsistencyResult(NamedTuple):
    elevation_deg: float
    score: float
    insufficient: bool


def rotate_inplane(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a square image about its center (bilinear, white fill).

    The rotation direction matches a camera roll by the same angle: rotating
    a render of pose P by ``a`` matches the render of R_z(a) o P.
    """
    img = np.asarray(image)
    if img.shape[0] != img.shape[1]:
        raise ValueError("rotate_inplane expects a square image")
    s = img.shape[0]
    c = s / 2.0
    rad = math.radians(angle_deg)
    ca, sa = math.cos(rad), math.sin(rad)
    H = np.array(
        [
            [ca, -sa, c - ca * c + sa * c],
            [sa, ca, c - sa * c - ca * c],
            [0.0, 0.0, 1.0],
        ]
    )
    rotated, _ = warp_image(img, None, Homography(H), s)
    return rotated


_BOX_KERNEL_FFT: dict[tuple[int, int], np.ndarray] = {}


def _box_kernel_fft(fft_sz: int, k: int) -> np.ndarray:
    key = (fft_sz, k)
    if key not in _BOX_KERNEL_FFT:
        kernel = np.zeros((fft_sz, fft_sz), dtype=np.float32)
        kernel[:k, :k] = 1.0
        _BOX_KERNEL_FFT[key] = np.conj(_fft.rfft2(kernel))
    return _BOX_KERNEL_FFT[key]


def _batched_ncc_maps(patches: np.ndarray, windows: np.ndarray) -> np.ndarray:
    """NCC of each patch against every placement inside its window.

    patches: (N, k, k), windows: (N, W, W) with W = k + 2r.  Returns
    (N, W-k+1, W-k+1) NCC maps.  The cross term and the sliding window
    sums/squared sums all come from FFT correlations sharing one forward
    transform of the windows.
    """
    n, k, _ = patches.shape
    wsz = windows.shape[1]
    out_sz = wsz - k + 1
    p0 = (patches - patches.mean(axis=(1, 2), keepdims=True)).astype(np.float32)
    pnorm = np.sqrt((p0 * p0).sum(axis=(1, 2)))
    fft_sz = 1 << (wsz - 1).bit_length()
    w32 = np.ascontiguousarray(windows, dtype=np.float32)
    fw = _fft.rfft2(w32, s=(fft_sz, fft_sz), workers=-1)
    fw2 = _fft.rfft2(w32 * w32, s=(fft_sz, fft_sz), workers=-1)
    fp = _fft.rfft2(p0, s=(fft_sz, fft_sz), workers=-1)
    fk = _box_kernel_fft(fft_sz, k)
    cut = (slice(None), slice(out_sz), slice(out_sz))
    corr = _fft.irfft2(fw * np.conj(fp), s=(fft_sz, fft_sz), workers=-1)[cut]
    sums = _fft.irfft2(fw * fk, s=(fft_sz, fft_sz), workers=-1)[cut]
    sq_sums = _fft.irfft2(fw2 * fk, s=(fft_sz, fft_sz), workers=-1)[cut]
    var = np.maximum(sq_sums - sums * sums * np.float32(1.0 / (k * k)), 0.0)
    denom = np.sqrt(var) * pnorm[:, None, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        ncc = np.where(denom > 1e-4, corr / np.maximum(denom, 1e-12), -1.0)
    return np.clip(ncc, -1.0, 1.0)


def _subpixel_peak(ncc_map: np.ndarray, iy: int, ix: int) -> tuple[float, float]:
    dy = dx = 0.0
    h, w = ncc_map.shape
    if 0 < ix < w - 1:
        a, b, c = ncc_map[iy, ix - 1], ncc_map[iy, ix], ncc_map[iy, ix + 1]
        denom = a - 2 * b + c
        if abs(denom) > 1e-12:
            dx = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    if 0 < iy < h - 1:
        a, b, c = ncc_map[iy - 1, ix], ncc_map[iy, ix], ncc_map[iy + 1, ix]
        denom = a - 2 * b + c
        if abs(denom) > 1e-12:
            dy = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return dy, dx


def _match_one_direction(gray_a, gray_b, anchors, cfg: MatcherConfig):
    """Best match in gray_b for a patch at each anchor of gray_a.

    Returns (positions (N, 2) as (y, x) float, ncc (N,), valid (N,)).
    Matches must beat the best peak outside a 5-px exclusion zone by the
    distinctiveness margin, which rejects aperture-ambiguous edge patches on
    flat-shaded surfaces.
    """
    k = cfg.patch
    r = cfg.radius
    hp = k // 2
    n = len(anchors)
    patches = np.empty((n, k, k), dtype=np.float32)
    for i, (ay, ax) in enumerate(anchors):
        patches[i] = gray_a[ay - hp : ay + hp + 1, ax - hp : ax + hp + 1]
    positions = np.zeros((n, 2), dtype=np.float64)
    score = np.full(n, -1.0)
    valid = np.zeros(n, dtype=bool)
    textured = np.flatnonzero(patches.std(axis=(1, 2)) > 2.0)
    if textured.size == 0:
        return positions, score, valid

    windows = np.empty((textured.size, k + 2 * r, k + 2 * r), dtype=np.float32)
    for w_i, i in enumerate(textured):
        ay, ax = anchors[i]
        windows[w_i] = gray_b[ay - hp - r : ay + hp + r + 1, ax - hp - r : ax + hp + r + 1]
    ncc = _batched_ncc_maps(patches[textured], windows)
    flat = ncc.reshape(textured.size, -1)
    best = flat.argmax(axis=1)
    side = ncc.shape[1]
    iy, ix = np.divmod(best, side)
    best_score = flat[np.arange(textured.size), best]
    for w_i, i in enumerate(textured):
        y, x = int(iy[w_i]), int(ix[w_i])
        dy, dx = _subpixel_peak(ncc[w_i], y, x)
        positions[i, 0] = anchors[i][0] + (y + dy - r)
        positions[i, 1] = anchors[i][1] + (x + dx - r)
        score[i] = best_score[w_i]
        suppressed = ncc[w_i]
        suppressed[max(0, y - 5) : y + 6, max(0, x - 5) : x + 6] = -1.0
        valid[i] = (
            best_score[w_i] >= cfg.min_ncc
            and best_score[w_i] - suppressed.max() >= cfg.distinct_margin
        )
    return positions, score, valid


def _grid_anchors(size: int, cfg: MatcherConfig):
    margin = cfg.patch // 2 + cfg.radius
    if size - 1 - margin <= margin:
        return []
    coords = np.linspace(margin, size - 1 - margin, cfg.grid).round().astype(int)
    return [(int(y), int(x)) for y in coords for x in coords]


def find_correspondences(img_a, img_b, cfg: MatcherConfig):
    """Forward-backward checked grid-to-dense NCC matches from img_a to img_b.

    Returns (pts_a (M, 2), pts_b (M, 2)) in continuous (x, y) pixel coords.
    """
    gray_a = to_gray(img_a).astype(np.float64)
    gray_b = to_gray(img_b).astype(np.float64)
    size = gray_a.shape[0]
    anchors = _grid_anchors(size, cfg)
    if not anchors:
        return np.zeros((0, 2)), np.zeros((0, 2))
    fwd_pos, _fwd_score, fwd_valid = _match_one_direction(gray_a, gray_b, anchors, cfg)

    margin = cfg.patch // 2 + cfg.radius
    back_anchors = []
    back_index = []
    for i in range(len(anchors)):
        if not fwd_valid[i]:
            continue
        by = int(round(fwd_pos[i, 0]))
        bx = int(round(fwd_pos[i, 1]))
        if margin <= by < size - margin and margin <= bx < size - margin:
            back_anchors.append((by, bx))
            back_index.append(i)
    if not back_anchors:
        return np.zeros((0, 2)), np.zeros((0, 2))
    back_pos, _back_score, back_valid = _match_one_direction(
        gray_b, gray_a, back_anchors, cfg
    )

    pts_a, pts_b = [], []
    for j, i in enumerate(back_index):
        if not back_valid[j]:
            continue
        ay, ax = anchors[i]
        err = math.hypot(back_pos[j, 0] - ay, back_pos[j, 1] - ax)
        if err <= cfg.fb_tol_px * cfg.scale:
            pts_a.append((ax + 0.5, ay + 0.5))
            pts_b.append((fwd_pos[i, 1] + 0.5, fwd_pos[i, 0] + 0.5))
    if not pts_a:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.asarray(pts_a), np.asarray(pts_b)


NEARBY_DELTAS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def build_tracks(views: Sequence[np.ndarray], cfg: MatcherConfig):
    """Multi-view tracks anchored in view 0.

    Returns (uv (T, V, 2), valid (T, V)) where valid marks the views in which
    a track is observed (always including view 0).
    """
    n_views = len(views)
    per_view = {}
    for j in range(1, n_views):
        pts_a, pts_b = find_correspondences(views[0], views[j], cfg)
        per_view[j] = {tuple(np.round(pa, 3)): pb for pa, pb in zip(pts_a, pts_b)}

    anchor_keys = sorted(set().union(*[set(d.keys()) for d in per_view.values()]) if per_view else [])
    uv = np.zeros((len(anchor_keys), n_views, 2))
    valid = np.zeros((len(anchor_keys), n_views), dtype=bool)
    for t, key in enumerate(anchor_keys):
        uv[t, 0] = key
        valid[t, 0] = True
        for j in range(1, n_views):
            hit = per_view[j].get(key)
            if hit is not None:
                uv[t, j] = hit
                valid[t, j] = True
    keep = valid.sum(axis=1) >= 2
    return uv[keep], valid[keep]


def triangulate_inliers(
    uv: np.ndarray,
    valid: np.ndarray,
    poses,
    K: CameraIntrinsics,
    tau_px: float,
) -> int:
    """DLT-triangulate each track under the hypothesized poses and count the
    tracks whose mean reprojection error is below ``tau_px``."""
    n_tracks, n_views, _ = uv.shape
    if n_tracks == 0:
        return 0
    Km = K.matrix
    P = np.stack(
        [Km @ np.hstack([p.rotation, p.translation[:, None]]) for p in poses], axis=0
    )
    rows = np.zeros((n_tracks, 2 * n_views, 4))
    for j in range(n_views):
        u = uv[:, j, 0][:, None]
        v = uv[:, j, 1][:, None]
        m = valid[:, j][:, None]
        rows[:, 2 * j] = (u * P[j, 2] - P[j, 0]) * m
        rows[:, 2 * j + 1] = (v * P[j, 2] - P[j, 1]) * m
    _, _, vh = np.linalg.svd(rows)
    X = vh[:, -1, :]
    w = X[:, 3]
    ok = np.abs(w) > 1e-12
    Xc = np.where(ok[:, None], X / np.where(ok, w, 1.0)[:, None], 0.0)[:, :3]

    err_sum = np.zeros(n_tracks)
    err_cnt = np.zeros(n_tracks)
    behind = np.zeros(n_tracks, dtype=bool)
    for j in range(n_views):
        cam = Xc @ poses[j].rotation.T + poses[j].translation
        z = cam[:, 2]
        front = z > 1e-9
        proj_u = K.fx * cam[:, 0] / np.where(front, z, 1.0) + K.cx
        proj_v = K.fy * cam[:, 1] / np.where(front, z, 1.0) + K.cy
        e = np.hypot(proj_u - uv[:, j, 0], proj_v - uv[:, j, 1])
        sel = valid[:, j]
        err_sum += np.where(sel & front, e, 0.0)
        err_cnt += np.where(sel & front, 1.0, 0.0)
        behind |= sel & ~front
    mean_err = err_sum / np.maximum(err_cnt, 1.0)
    inliers = ok & ~behind & (err_cnt >= 2) & (mean_err < tau_px)
    return int(inliers.sum())


def consistency_score(
    image: np.ndarray,
    elevation_candidates,
    generator,
    cfg: MatcherConfig,
) -> ConsistencyResult:
    """Triangulation-consistency score of an object-centric image.

    Generates four nearby views (one delta per axis direction) plus an
    anchor view at delta (0, 0), builds forward-backward checked tracks
    among the generated views, then for each elevation hypothesis counts
    tracks that triangulate with mean reprojection error below tau.  The
    best elevation and its inlier count are returned; fewer than
    ``min_tracks`` tracks short-circuit to score 0 with the ``insufficient``
    flag set.
    """
    deltas = ((0.0, 0.0),) + tuple(
        (sx * cfg.nearby_deg, sy * cfg.nearby_deg) for sx, sy in NEARBY_DELTAS
    )
    views = generator.generate(ViewRequest(image, deltas, cfg.steps, cfg.seed))
    uv, valid = build_tracks(views, cfg)

    fallback = (
        float(elevation_candidates[0])
        if elevation_candidates
        else cfg.elevation_center_deg
    )
    if len(uv) < cfg.min_tracks:
        logger.warning(
            "insufficient correspondences (%d < %d); consistency score 0",
            len(uv),
            cfg.min_tracks,
        )
        return ConsistencyResult(fallback, 0.0, True)

    d = distance_for_inscribed_sphere(cfg.intrinsics)
    tau = cfg.tau_px * cfg.scale

    def count_for(elev: float) -> float:
        poses = [
            viewpoint_to_pose(
                SphericalViewpoint(
                    d_az, float(np.clip(elev + d_el, -89.0, 89.0)), 0.0, d
                )
            )
            for d_az, d_el in deltas
        ]
        return float(triangulate_inliers(uv, valid, poses, cfg.intrinsics, tau))

    if elevation_candidates is not None:
        best_el, best_score = None, -math.inf
        for e in elevation_candidates:
            s = count_for(float(e))
            if s > best_score:
                best_el, best_score = float(e), s
        if best_el is None:
            raise EmptyList("no elevation candidates given")
        return ConsistencyResult(best_el, best_score, False)

    best_el = coarse_to_fine_angles(
        count_for,
        max_abs_deg=cfg.elevation_halfspan_deg,
        center_deg=cfg.elevation_center_deg,
        schedule=cfg.schedule,
    )
    return ConsistencyResult(best_el, count_for(best_el), False)


def estimate_orientation(
    image: np.ndarray,
    generator,
    cfg: MatcherConfig,
    schedule: Optional[SearchSchedule] = None,
):
    """Joint in-plane rotation and elevation estimate of the first view.

    For each in-plane candidate the image is counter-rotated and scored by
    consistency_score (with its internal elevation search); the best joint
    hypothesis and the rectified image are returned.
    """
    results: dict[float, ConsistencyResult] = {}

    def score(angle: float) -> float:
        rectified = rotate_inplane(image, -angle)
        res = consistency_score(rectified, None, generator, cfg)
        results[round(angle, 9)] = res
        return res.score

    best = coarse_to_fine_angles(score, 45.0, 0.0, schedule, workers=cfg.workers)
    res = results[round(best, 9)]
    hypothesis = OrientationHypothesis(
        inplane_deg=float(best),
        elevation_deg=float(np.clip(res.elevation_deg, -10.0, 80.0)),
        score=res.score,
    )
    return hypothesis, rotate_inplane(image, -best)
