"""Two-view pose metrics, the benchmark runner, and the mask-dilation
robustness ablation."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import pngio, synth
from .errors import EmptyList, XposeError, ZeroTranslation
from .geom import RigidTransform, roi_from_mask
from .match import PipelineConfig, estimate_pair
from .viewgen import MockGenerator, RemoteGenerator, resolve_endpoint

logger = logging.getLogger(__name__)

FAILED_PAIR_ERROR_DEG = 180.0


def rotation_error_deg(R_gt, R_pr) -> float:
    """Axis-angle magnitude of R_gt^T R_pr in degrees, in [0, 180]."""
    A = R_gt.rotation if isinstance(R_gt, RigidTransform) else np.asarray(R_gt)
    B = R_pr.rotation if isinstance(R_pr, RigidTransform) else np.asarray(R_pr)
    rel = A.T @ B
    c = (np.trace(rel) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def translation_angle_deg(t_gt, t_pr) -> float:
    """Angle between the normalized translations, in degrees."""
    a = np.asarray(t_gt, dtype=np.float64)
    b = np.asarray(t_pr, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise ZeroTranslation("translation norm below 1e-12")
    c = float(np.dot(a / na, b / nb))
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def accuracy_at(errors, threshold: float) -> float:
    """Fraction of errors strictly below ``threshold`` degrees."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    errs = list(errors)
    if not errs:
        raise EmptyList("no errors to aggregate")
    return sum(1 for e in errs if e < threshold) / len(errs)


def dilate_mask(mask: np.ndarray, percent: float) -> np.ndarray:
    """Morphological dilation with a disk of radius round(percent/100 * s),
    s being the max bounding-box side.  percent 0 is the identity."""
    if percent < 0:
        raise ValueError("percent must be >= 0")
    m = np.asarray(mask, dtype=bool)
    if percent == 0 or not m.any():
        return m.copy()
    s = roi_from_mask(m).size
    radius = int(round(percent / 100.0 * s))
    if radius == 0:
        return m.copy()
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    disk = xx * xx + yy * yy <= radius * radius
    return ndimage.binary_dilation(m, structure=disk)


@dataclass(frozen=True)
class PairResult:
    pair_id: str
    rotation_error_deg: float
    translation_angle_deg: float
    time_ms: float
    timings_ms: dict
    error: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.rotation_error_deg <= 180.0:
            raise ValueError("rotation error out of [0, 180]")
        if not 0.0 <= self.translation_angle_deg <= 180.0:
            raise ValueError("translation error out of [0, 180]")


@dataclass(frozen=True)
class BenchmarkReport:
    acc: dict
    pairs: tuple
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "pairs": [
                {
                    "id": p.pair_id,
                    "rot_err_deg": p.rotation_error_deg,
                    "trans_err_deg": p.translation_angle_deg,
                    "time_ms": p.time_ms,
                    **({"error": p.error} if p.error else {}),
                }
                for p in self.pairs
            ],
            "acc": self.acc,
        }


def default_generator_factory(config: PipelineConfig):
    """Per-entry generator construction for the configured backend."""
    if config.backend == "oracle":

        def factory(entry, K1, mask1, pose1):
            asset = synth.make_asset(entry.asset_seed)
            return synth.oracle_for_pair(asset, K1, mask1, pose1, config.s_v)

        return factory
    if config.backend == "mock":
        shared = MockGenerator()
        return lambda entry, K1, mask1, pose1: shared
    if config.backend == "remote":
        endpoint = resolve_endpoint(config.endpoint)
        if not endpoint:
            raise ValueError("remote backend requires generator.endpoint")
        shared = RemoteGenerator(endpoint)
        return lambda entry, K1, mask1, pose1: shared
    raise ValueError(f"unknown backend {config.backend!r}")


def evaluate_entry(entry, manifest_root, config, dilation_percent, factory):
    t_start = time.perf_counter()
    try:
        img1 = pngio.load_image(os.path.join(manifest_root, entry.images[0]))
        img2 = pngio.load_image(os.path.join(manifest_root, entry.images[1]))
        mask1 = pngio.load_mask(os.path.join(manifest_root, entry.masks[0]))
        mask2 = pngio.load_mask(os.path.join(manifest_root, entry.masks[1]))
        if dilation_percent:
            mask1 = dilate_mask(mask1, dilation_percent)
            mask2 = dilate_mask(mask2, dilation_percent)
        K1, K2 = entry.intrinsics
        generator = factory(entry, K1, mask1, entry.poses[0])
        estimate = estimate_pair(img1, mask1, K1, img2, mask2, K2, config, generator)
        gt = synth.relative_pose_gt(entry)
        rot_err = rotation_error_deg(gt.rotation, estimate.relative.rotation)
        trans_err = translation_angle_deg(gt.translation, estimate.relative.translation)
        return PairResult(
            pair_id=entry.pair_id,
            rotation_error_deg=rot_err,
            translation_angle_deg=trans_err,
            time_ms=(time.perf_counter() - t_start) * 1000.0,
            timings_ms=estimate.diagnostics.get("timings_ms", {}),
        )
    except XposeError as exc:
        logger.warning("pair %s failed: %s", entry.pair_id, exc)
        return PairResult(
            pair_id=entry.pair_id,
            rotation_error_deg=FAILED_PAIR_ERROR_DEG,
            translation_angle_deg=FAILED_PAIR_ERROR_DEG,
            time_ms=(time.perf_counter() - t_start) * 1000.0,
            timings_ms={},
            error=str(exc),
        )


def run_benchmark(
    manifest,
    config: PipelineConfig,
    dilation_percent: float = 0.0,
    report_path=None,
    generator_factory=None,
) -> BenchmarkReport:
    """Evaluate every manifest pair and aggregate accuracy at 15 and 30 deg.

    Per-pair failures are recorded with the 180 deg sentinel instead of
    aborting the run.  Results are order-independent (sorted by pair id).
    """
    if not manifest.entries:
        raise EmptyList("manifest has no entries")
    factory = generator_factory or default_generator_factory(config)
    work = [
        (entry, manifest.root, config, dilation_percent, factory)
        for entry in manifest.entries
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda args: evaluate_entry(*args), work))
    else:
        results = [evaluate_entry(*args) for args in work]
    results.sort(key=lambda r: r.pair_id)

    rot = [r.rotation_error_deg for r in results]
    trans = [r.translation_angle_deg for r in results]
    acc = {
        "rot15": accuracy_at(rot, 15.0),
        "rot30": accuracy_at(rot, 30.0),
        "trans15": accuracy_at(trans, 15.0),
        "trans30": accuracy_at(trans, 30.0),
    }
    report = BenchmarkReport(
        acc=acc,
        pairs=tuple(results),
        config={**asdict(config), "dilation_percent": dilation_percent},
    )
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=1)
    return report
