"""Bridge service configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass
class BridgeConfig:
    checkpoint: str | None = None
    device: str = "cpu"
    port: int = 8639
    max_batch: int = 8
    default_steps: int = 50
    # Convention remap between the wire protocol's canonical frame and the
    # model's conditioning; calibrate_conventions can rewrite azimuth_sign.
    azimuth_sign: int = 1
    elevation_origin: str = "equator"  # or "pole"

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError("port must be in [1, 65535]")
        if self.max_batch < 1:
            raise ValueError("max_batch must be positive")
        if self.azimuth_sign not in (-1, 1):
            raise ValueError("azimuth_sign must be +1 or -1")
        if self.elevation_origin not in ("equator", "pole"):
            raise ValueError("elevation_origin must be 'equator' or 'pole'")
        if self.checkpoint is not None and not os.path.exists(self.checkpoint):
            raise ValueError(f"checkpoint not found: {self.checkpoint}")
