"""Model backends: the diffusion adapter plus deterministic mocks for tests.

A backend exposes generate_views(image, views, steps, seed) -> list of uint8
RGB arrays, one per requested (d_azimuth_deg, d_elevation_deg), and a
model_id string.  Backends receive deltas already remapped into the model's
own convention.
"""

from __future__ import annotations

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)


class Zero123Backend:
    """Adapter around a pretrained novel-view diffusion checkpoint.

    Loading happens in load(); heavy dependencies are imported lazily so the
    bridge package stays importable (and the mock paths testable) without
    torch installed.  Conditioning uses the polar-angle form
    [d_polar, sin(d_azimuth), cos(d_azimuth), d_radius].
    """

    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.checkpoint = checkpoint
        self.device = device
        self.model_id = f"zero123:{checkpoint}"
        self._pipeline = None

    def load(self):
        try:
            import torch  # noqa: F401
            from diffusers import DiffusionPipeline
        except ImportError as exc:
            raise RuntimeError(
                "the diffusion backend needs torch and diffusers installed"
            ) from exc
        logger.info("loading checkpoint %s on %s", self.checkpoint, self.device)
        self._pipeline = DiffusionPipeline.from_pretrained(
            self.checkpoint, custom_pipeline="zero123"
        ).to(self.device)

    @staticmethod
    def conditioning(d_azimuth_deg: float, d_elevation_deg: float, d_radius: float = 0.0):
        """Relative-pose conditioning vector; elevation here is already in the
        model's pole-origin polar convention."""
        az = math.radians(d_azimuth_deg)
        return [math.radians(d_elevation_deg), math.sin(az), math.cos(az), d_radius]

    def generate_views(self, image, views, steps, seed):
        if self._pipeline is None:
            raise RuntimeError("model not loaded")
        import torch

        out = []
        generator = torch.Generator(device=self.device).manual_seed(int(seed))
        for d_az, d_el in views:
            cond = self.conditioning(d_az, -d_el)  # polar = -elevation delta
            result = self._pipeline(
                image,
                polar_deg=math.degrees(cond[0]),
                azimuth_deg=d_az,
                radius=cond[3],
                num_inference_steps=int(steps),
                generator=generator,
            )
            out.append(np.asarray(result.images[0].convert("RGB")))
        return out


# --- deterministic mock models ---------------------------------------------

MARKER_HALF = 10
MARKER_SHIFT_PX_PER_DEG = 2.0


def make_marker_card(size: int = 256) -> np.ndarray:
    """White card with one dark square marker at the center."""
    img = np.full((size, size, 3), 255, dtype=np.uint8)
    c = size // 2
    img[c - MARKER_HALF : c + MARKER_HALF, c - MARKER_HALF : c + MARKER_HALF] = (20, 20, 20)
    return img


def detect_marker_x(image: np.ndarray) -> float:
    """Column centroid of the dark marker blob (pixels)."""
    dark = np.all(np.asarray(image) < 100, axis=-1)
    if not dark.any():
        raise ValueError("no marker found")
    return float(np.nonzero(dark)[1].mean())


class MarkerCardModel:
    """Mock model that translates the marker with the azimuth delta.

    In the canonical convention a positive azimuth delta moves the marker
    leftward (the camera orbits one way, the object appears to slide the
    other).  ``azimuth_sign=-1`` builds a convention-flipped model and
    ``contradictory=True`` one whose direction alternates between calls,
    which no remap can explain.
    """

    def __init__(self, azimuth_sign: int = 1, contradictory: bool = False):
        self.azimuth_sign = azimuth_sign
        self.contradictory = contradictory
        self.model_id = "mock-marker/1"
        self._calls = 0

    def load(self):
        pass

    def generate_views(self, image, views, steps, seed):
        size = np.asarray(image).shape[0]
        self._calls += 1
        flip = -1 if (self.contradictory and self._calls % 2 == 0) else 1
        out = []
        for d_az, d_el in views:
            img = np.full((size, size, 3), 255, dtype=np.uint8)
            c = size // 2
            shift = int(round(-self.azimuth_sign * flip * MARKER_SHIFT_PX_PER_DEG * d_az))
            x = int(np.clip(c + shift, MARKER_HALF, size - MARKER_HALF))
            y = int(np.clip(c + int(round(MARKER_SHIFT_PX_PER_DEG * d_el)), MARKER_HALF, size - MARKER_HALF))
            img[y - MARKER_HALF : y + MARKER_HALF, x - MARKER_HALF : x + MARKER_HALF] = (20, 20, 20)
            out.append(img)
        return out


class EchoModel:
    """Mock model returning the conditioning image unchanged for every view."""

    model_id = "mock-echo/1"

    def load(self):
        pass

    def generate_views(self, image, views, steps, seed):
        arr = np.asarray(image)
        return [arr.copy() for _ in views]
