"""Core geometry: virtual object-centric cameras, homography warping, and
viewpoint/pose conversions.

Conventions used throughout the package:

  Camera frame (standard computer vision):
    x right, y down, z forward (optical axis into the scene).
    Pixel = dehomogenize(K @ x_cam); pixel u right, v down.
    Pixel (row i, col j) covers the unit square [j, j+1) x [i, i+1) and is
    sampled at its center (j + 0.5, i + 0.5).

  Canonical object frame:
    z up. A spherical viewpoint (azimuth a, elevation e, distance d) places
    the camera center at C = d * (cos e cos a, cos e sin a, sin e), looking
    at the origin with the world +z mapped to image up, then rolled about
    the optical axis by the inplane angle.

  Transforms map points INTO the named frame: a world->camera transform
  [R, t] satisfies x_cam = R @ x_world + t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateElevation,
    DegeneratePole,
    EmptyMask,
    NonInvertibleHomography,
)

_UP = np.array([0.0, 0.0, 1.0])
BACKGROUND_RGB = (255, 255, 255)


def _as_matrix(value, shape, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters of an input or virtual camera (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def matrix_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element: x_out = rotation @ x_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _as_matrix(self.rotation, (3, 3), "rotation")
        t = _as_matrix(self.translation, (3,), "translation")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self o other (apply ``other`` first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    @property
    def camera_center(self) -> np.ndarray:
        """Center of a world->camera transform, in world coordinates."""
        return -self.rotation.T @ self.translation

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class SquareRoi:
    """Square region of interest: object center and side length in pixels."""

    center: tuple[float, float]
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("roi size must be positive")


def roi_from_mask(mask) -> SquareRoi:
    """Tight square ROI of a boolean mask: side = max bbox side, center = bbox
    center (continuous pixel coordinates)."""
    m = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixels")
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    size = float(max(r1 - r0 + 1, c1 - c0 + 1))
    center = ((c0 + c1 + 1) / 2.0, (r0 + r1 + 1) / 2.0)
    return SquareRoi(center=center, size=size)


def _wrap_azimuth(deg: float) -> float:
    return float(deg % 360.0)


def _wrap_half(deg: float) -> float:
    """Wrap into [-180, 180)."""
    return float(((deg + 180.0) % 360.0) - 180.0)


def wrap_delta_deg(deg: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    return float(180.0 - ((180.0 - deg) % 360.0))


@dataclass(frozen=True)
class SphericalViewpoint:
    """Camera placement in the canonical object frame.

    Azimuth is normalized into [0, 360), inplane into [-180, 180).
    Elevation must stay inside (-90, 90); hemisphere sampling additionally
    restricts it to [0, 90).  Distance is measured in object units where the
    bounding sphere has unit radius, so the camera must sit outside it.
    """

    azimuth_deg: float
    elevation_deg: float
    inplane_deg: float
    distance: float

    def __post_init__(self):
        if not self.distance > 1.0:
            raise ValueError("distance must exceed the unit sphere radius")
        if not -90.0 < self.elevation_deg < 90.0:
            raise ValueError("elevation must lie strictly inside (-90, 90) deg")
        object.__setattr__(self, "azimuth_deg", _wrap_azimuth(self.azimuth_deg))
        object.__setattr__(self, "inplane_deg", _wrap_half(self.inplane_deg))
        object.__setattr__(self, "elevation_deg", float(self.elevation_deg))
        object.__setattr__(self, "distance", float(self.distance))

    @property
    def center(self) -> np.ndarray:
        a = math.radians(self.azimuth_deg)
        e = math.radians(self.elevation_deg)
        return self.distance * np.array(
            [math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)]
        )


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, defined up to scale."""

    matrix: np.ndarray = field()

    def __post_init__(self):
        H = _as_matrix(self.matrix, (3, 3), "homography")
        object.__setattr__(self, "matrix", H)

    def normalized(self) -> np.ndarray:
        H = self.matrix
        return H / np.abs(H).max()

    def is_invertible(self, tol: float = 1e-12) -> bool:
        return abs(np.linalg.det(self.normalized())) > tol


def rot_x(rad: float) -> np.ndarray:
    c, s = math.cos(rad), math.sin(rad)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(rad: float) -> np.ndarray:
    c, s = math.cos(rad), math.sin(rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(rad: float) -> np.ndarray:
    c, s = math.cos(rad), math.sin(rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def inplane_rotation_matrix(deg: float) -> np.ndarray:
    """Camera-frame roll about the optical axis, shared by pose construction
    and image rectification so the two stay sign-consistent."""
    return rot_z(math.radians(deg))


def look_at_rotation(c, K: CameraIntrinsics) -> RigidTransform:
    """Pure rotation turning the camera so its optical axis passes through
    pixel ``c``.

    Composed as R_y(beta) @ R_x(alpha): first a tilt about the camera x-axis
    zeroes the ray's vertical component, then a pan about the y-axis aligns
    it with +z.  Satisfies R @ normalize(K^-1 [c;1]) = (0, 0, 1).
    """
    u, v = float(c[0]), float(c[1])
    ray = K.matrix_inv @ np.array([u, v, 1.0])
    ray /= np.linalg.norm(ray)
    alpha = math.atan2(ray[1], ray[2])
    beta = math.atan2(-ray[0], math.hypot(ray[1], ray[2]))
    R = rot_y(beta) @ rot_x(alpha)
    return RigidTransform(R, np.zeros(3))


def virtual_intrinsics(
    K: CameraIntrinsics, roi: SquareRoi, s_v: int
) -> CameraIntrinsics:
    """Intrinsics of the virtual object-centric camera.

    The roi square of side s maps onto the full s_v x s_v virtual image:
    f_v = s_v * sqrt(f^2 + |c|^2) / s, with the object center c measured
    relative to the principal point and f the mean input focal length.
    """
    if s_v < 16:
        raise ValueError("virtual image size must be at least 16")
    f = 0.5 * (K.fx + K.fy)
    dx = roi.center[0] - K.cx
    dy = roi.center[1] - K.cy
    f_v = s_v * math.sqrt(f * f + dx * dx + dy * dy) / roi.size
    half = s_v / 2.0
    return CameraIntrinsics(f_v, f_v, half, half, int(s_v), int(s_v))


def object_centric_homography(
    K: CameraIntrinsics, K_v: CameraIntrinsics, R_v
) -> Homography:
    """H = K_v @ R_v @ K^-1, mapping input pixels to virtual pixels."""
    R = R_v.rotation if isinstance(R_v, RigidTransform) else _as_matrix(R_v, (3, 3), "R_v")
    return Homography(K_v.matrix @ R @ K.matrix_inv)


def _bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray, fill):
    """Sample ``image`` at continuous pixel coords (x, y); out-of-range
    positions receive ``fill``.  Coordinates follow the half-integer pixel
    center convention."""
    h, w = image.shape[:2]
    xi = x - 0.5
    yi = y - 0.5
    # small tolerance so exact-boundary coordinates survive rounding noise
    eps = 1e-6
    valid = (xi >= -eps) & (xi <= w - 1 + eps) & (yi >= -eps) & (yi <= h - 1 + eps)
    xc = np.clip(xi, 0.0, w - 1)
    yc = np.clip(yi, 0.0, h - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0).astype(np.float32)
    fy = (yc - y0).astype(np.float32)
    img = image.astype(np.float32)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    out = (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )
    fill_arr = np.asarray(fill, dtype=np.float32)
    if img.ndim == 3:
        out = np.where(valid[..., None], out, fill_arr)
    else:
        out = np.where(valid, out, fill_arr)
    return out


def warp_image(image, mask, H: Homography, s_v: int):
    """Warp ``image`` (and optionally ``mask``) through ``H`` into an
    s_v x s_v output by inverse mapping.

    Image channels are sampled bilinearly, the mask with nearest neighbor;
    destination pixels that map outside the source are filled with the white
    background / empty mask.
    """
    if not H.is_invertible():
        raise NonInvertibleHomography("homography determinant below threshold")
    Hinv = np.linalg.inv(H.matrix)
    img = np.asarray(image)
    jj, ii = np.meshgrid(np.arange(s_v), np.arange(s_v))
    dst = np.stack([jj + 0.5, ii + 0.5, np.ones_like(jj, dtype=np.float64)], axis=-1)
    src = dst @ Hinv.T
    w = src[..., 2]
    front = np.abs(w) > 1e-12
    w_safe = np.where(front, w, 1.0)
    x = src[..., 0] / w_safe
    y = src[..., 1] / w_safe
    x = np.where(front & (w > 0), x, -1e9)
    y = np.where(front & (w > 0), y, -1e9)

    fill = BACKGROUND_RGB if img.ndim == 3 else BACKGROUND_RGB[0]
    warped = _bilinear_sample(img, x, y, fill)
    if np.issubdtype(img.dtype, np.integer):
        warped = np.clip(np.rint(warped), 0, 255).astype(np.uint8)

    warped_mask = None
    if mask is not None:
        m = np.asarray(mask)
        h, w_src = m.shape[:2]
        xn = np.floor(x + 1e-9).astype(np.intp)
        yn = np.floor(y + 1e-9).astype(np.intp)
        inside = (xn >= 0) & (xn < w_src) & (yn >= 0) & (yn < h)
        xn = np.clip(xn, 0, w_src - 1)
        yn = np.clip(yn, 0, h - 1)
        warped_mask = np.where(inside, m[yn, xn] != 0, False)
    return warped, warped_mask


def distance_for_inscribed_sphere(K_v: CameraIntrinsics) -> float:
    """Camera-to-origin distance at which the exact silhouette of the unit
    sphere has image radius s_v / 2.

    With t = s_v / (2 f_v) the silhouette relation sin(theta) = 1/d and
    tan(theta) = t give d = sqrt(1 + t^2) / t.
    """
    if K_v.width != K_v.height:
        raise ValueError("virtual intrinsics must be square")
    f_v = 0.5 * (K_v.fx + K_v.fy)
    t = K_v.width / (2.0 * f_v)
    return math.sqrt(1.0 + t * t) / t


def viewpoint_to_pose(vp: SphericalViewpoint) -> RigidTransform:
    """Object->camera transform of a camera at the given spherical viewpoint,
    looking at the origin with +z up, then rolled by the inplane angle."""
    if abs(vp.elevation_deg) >= 90.0:
        raise DegenerateElevation("elevation at the pole: up vector undefined")
    C = vp.center
    z_c = -C / np.linalg.norm(C)
    x_c = np.cross(z_c, _UP)
    n = np.linalg.norm(x_c)
    if n < 1e-9:
        raise DegenerateElevation("optical axis parallel to the up vector")
    x_c /= n
    y_c = np.cross(z_c, x_c)
    R = np.stack([x_c, y_c, z_c], axis=0)
    R = inplane_rotation_matrix(vp.inplane_deg) @ R
    return RigidTransform(R, -R @ C)


def pose_to_viewpoint(pose: RigidTransform) -> SphericalViewpoint:
    """Inverse of :func:`viewpoint_to_pose` on look-at poses."""
    C = pose.camera_center
    d = float(np.linalg.norm(C))
    if math.hypot(C[0], C[1]) < 1e-9 * max(d, 1.0):
        raise DegeneratePole("camera center on the z axis")
    azimuth = math.degrees(math.atan2(C[1], C[0]))
    elevation = math.degrees(math.asin(np.clip(C[2] / d, -1.0, 1.0)))
    base = viewpoint_to_pose(
        SphericalViewpoint(azimuth, elevation, 0.0, max(d, 1.0 + 1e-9))
    )
    roll = pose.rotation @ base.rotation.T
    inplane = math.degrees(math.atan2(roll[1, 0], roll[0, 0]))
    return SphericalViewpoint(azimuth, elevation, inplane, d)


def compose_object_to_relative(
    pose1: RigidTransform, pose2: RigidTransform
) -> RigidTransform:
    """Relative transform between two object->camera poses, oriented so that
    x_v1 = R @ x_v2 + t."""
    R = pose1.rotation @ pose2.rotation.T
    t = pose1.translation - R @ pose2.translation
    return RigidTransform(R, t)


def lift_relative_to_input_cameras(
    rel_v: RigidTransform, Rv1, Rv2
) -> RigidTransform:
    """Map the virtual-camera relative pose back onto the input cameras.

    With x_vi = Rvi @ x_ci and x_v1 = R_rel x_v2 + t_rel, the input-camera
    relative pose satisfying x_c2 = R @ x_c1 + t is
    R = Rv2^T R_rel^T Rv1 and t = -Rv2^T R_rel^T t_rel.  The translation is
    in object-scale units; only its direction is meaningful.
    """
    R1 = Rv1.rotation if isinstance(Rv1, RigidTransform) else _as_matrix(Rv1, (3, 3), "Rv1")
    R2 = Rv2.rotation if isinstance(Rv2, RigidTransform) else _as_matrix(Rv2, (3, 3), "Rv2")
    Rrel_T = rel_v.rotation.T
    R = R2.T @ Rrel_T @ R1
    t = -R2.T @ Rrel_T @ rel_v.translation
    return RigidTransform(R, t)
