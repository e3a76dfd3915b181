"""Novel-view generator contract, reference-set assembly, the in-process mock
backend, and the HTTP client for the diffusion bridge service."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .errors import GeneratorFailure
from .geom import (
    CameraIntrinsics,
    SphericalViewpoint,
    distance_for_inscribed_sphere,
    viewpoint_to_pose,
)
from .pngio import decode_png_b64, encode_png_b64
from .viewsphere import delta_views, sample_upper_hemisphere

logger = logging.getLogger(__name__)

ENDPOINT_ENV_VAR = "XPOSE_GENERATOR_ENDPOINT"
DEFAULT_TIMEOUT_S = 120.0


@dataclass(frozen=True)
class ViewRequest:
    """One batched generation request: a correctly oriented object-centric
    image plus the (delta azimuth, delta elevation) list to synthesize."""

    image: np.ndarray
    deltas: tuple
    steps: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple((float(a), float(e)) for a, e in self.deltas))
        if len(self.deltas) == 0:
            raise ValueError("deltas must be non-empty")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")


@dataclass(frozen=True)
class GeneratedViewSet:
    """Posed, intrinsics-annotated novel views of the object.

    All members share one intrinsic matrix (the first view's virtual camera)
    and poses[i] equals viewpoint_to_pose(viewpoints[i]).
    """

    images: tuple
    viewpoints: tuple
    poses: tuple
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        if not (len(self.images) == len(self.viewpoints) == len(self.poses)):
            raise ValueError("images, viewpoints, and poses must align")
        for vp, pose in zip(self.viewpoints, self.poses):
            expected = viewpoint_to_pose(vp)
            if (
                np.abs(expected.rotation - pose.rotation).max() > 1e-9
                or np.abs(expected.translation - pose.translation).max() > 1e-9
            ):
                raise ValueError("pose does not match its viewpoint")

    def __len__(self):
        return len(self.images)


def build_reference_set(
    rectified_image: np.ndarray,
    orientation,
    K_v1: CameraIntrinsics,
    n: int,
    generator,
    steps: int = 50,
    seed: int = 0,
) -> GeneratedViewSet:
    """Generate ``n`` hemisphere reference views of the object shown in the
    rectified first view and pose them in the canonical frame.

    The rectified input joins the set as an additional posed member at the
    canonical viewpoint (azimuth 0, estimated elevation, inscribed-sphere
    distance).
    """
    if n < 1:
        raise ValueError("need at least one reference view")
    d = distance_for_inscribed_sphere(K_v1)
    reference_vp = SphericalViewpoint(0.0, float(orientation.elevation_deg), 0.0, d)
    targets = sample_upper_hemisphere(n, d, inplane_deg=0.0, seed=seed)
    deltas = delta_views(reference_vp, targets)
    images = generator.generate(ViewRequest(rectified_image, tuple(deltas), steps, seed))
    if len(images) != n:
        raise GeneratorFailure(
            "count_mismatch", f"backend returned {len(images)} images for {n} deltas"
        )
    viewpoints = tuple(targets.viewpoints) + (reference_vp,)
    all_images = tuple(images) + (rectified_image,)
    poses = tuple(viewpoint_to_pose(vp) for vp in viewpoints)
    return GeneratedViewSet(all_images, viewpoints, poses, K_v1)


# --- mock backend ---------------------------------------------------------

_CARD_BG = 235


def make_test_card(size: int, d_azimuth_deg: float, d_elevation_deg: float) -> np.ndarray:
    """Deterministic test-card image stamping the requested deltas.

    A fiducial corner square plus two bars whose lengths encode the azimuth
    and elevation deltas; decodable via :func:`decode_test_card`.
    """
    img = np.full((size, size, 3), _CARD_BG, dtype=np.uint8)
    img[: size // 8, : size // 8] = (0, 0, 0)
    img[: size // 8, size - size // 8 :] = (255, 0, 0)
    span = size - 16
    az_len = int(round((d_azimuth_deg % 360.0) / 360.0 * span))
    el_len = int(round((d_elevation_deg + 90.0) / 180.0 * span))
    r0 = int(size * 0.40)
    r1 = int(size * 0.60)
    img[r0 : r0 + size // 16, 8 : 8 + az_len] = (0, 90, 200)
    img[r1 : r1 + size // 16, 8 : 8 + el_len] = (200, 60, 0)
    return img


def decode_test_card(image: np.ndarray) -> tuple[float, float]:
    """Recover the stamped (delta azimuth in [0, 360), delta elevation)."""
    size = image.shape[0]
    span = size - 16
    r0 = int(size * 0.40)
    r1 = int(size * 0.60)
    az_len = int((image[r0, :, 2] == 200).sum())
    el_len = int((image[r1, :, 0] == 200).sum())
    return az_len / span * 360.0, el_len / span * 180.0 - 90.0


class MockGenerator:
    """In-process backend returning test cards; bit-deterministic."""

    def generate(self, request: ViewRequest) -> list:
        size = request.image.shape[0]
        return [make_test_card(size, a, e) for a, e in request.deltas]


# --- remote backend -------------------------------------------------------


def resolve_endpoint(configured: str | None) -> str | None:
    """Config key generator.endpoint, overridden by the environment."""
    return os.environ.get(ENDPOINT_ENV_VAR) or configured


def check_health(endpoint: str, timeout: float = 10.0) -> dict:
    try:
        resp = requests.get(endpoint.rstrip("/") + "/v1/health", timeout=timeout)
    except requests.Timeout as exc:
        raise GeneratorFailure("timeout", str(exc)) from exc
    except requests.RequestException as exc:
        raise GeneratorFailure("backend", f"health check failed: {exc}") from exc
    if resp.status_code != 200:
        raise GeneratorFailure("http_status", f"HTTP {resp.status_code}: {resp.text}")
    return resp.json()


def diffusion_client_generate(
    request: ViewRequest, endpoint: str, timeout: float = DEFAULT_TIMEOUT_S
) -> list:
    """POST one batched generation request to a /v1 bridge service and decode
    the returned images; protocol errors map onto GeneratorFailure kinds."""
    payload = {
        "image_png_b64": encode_png_b64(np.ascontiguousarray(request.image)),
        "views": [
            {"d_azimuth_deg": a, "d_elevation_deg": e} for a, e in request.deltas
        ],
        "steps": int(request.steps),
        "seed": int(request.seed),
    }
    url = endpoint.rstrip("/") + "/v1/generate"
    try:
        resp = requests.post(url, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise GeneratorFailure("timeout", f"no response from {url}") from exc
    except requests.RequestException as exc:
        raise GeneratorFailure("backend", f"request to {url} failed: {exc}") from exc

    if resp.status_code != 200:
        try:
            message = resp.json().get("error", resp.text)
        except (ValueError, json.JSONDecodeError):
            message = resp.text
        raise GeneratorFailure("http_status", f"HTTP {resp.status_code}: {message}")

    try:
        body = resp.json()
        encoded = body["images_png_b64"]
    except (ValueError, KeyError) as exc:
        raise GeneratorFailure("decode", f"malformed response body: {exc}") from exc
    if not isinstance(encoded, list) or len(encoded) != len(request.deltas):
        raise GeneratorFailure(
            "count_mismatch",
            f"expected {len(request.deltas)} images, got "
            f"{len(encoded) if isinstance(encoded, list) else type(encoded).__name__}",
        )
    images = []
    for i, item in enumerate(encoded):
        try:
            images.append(decode_png_b64(item))
        except ValueError as exc:
            raise GeneratorFailure("decode", f"image {i}: {exc}") from exc
    return images


class RemoteGenerator:
    """Backend proxying to a bridge service, limiting in-flight requests."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT_S, max_inflight: int = 2):
        self.endpoint = endpoint
        self.timeout = timeout
        self._slots = threading.Semaphore(max_inflight)

    def generate(self, request: ViewRequest) -> list:
        with self._slots:
            return diffusion_client_generate(request, self.endpoint, self.timeout)
