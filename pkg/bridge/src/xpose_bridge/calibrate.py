"""Empirical calibration of the azimuth sign convention.

The wire protocol promises that a positive azimuth delta moves a centered
marker leftward in the generated view.  Whether the underlying model agrees
is observable only by probing it, so the bridge asks for +30 and -30 degree
views of a marker card and reads which direction the marker moved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .model import detect_marker_x, make_marker_card

logger = logging.getLogger(__name__)

PROBE_DEG = 30.0
MIN_SHIFT_PX = 4.0


class InconclusiveCalibration(Exception):
    pass


@dataclass(frozen=True)
class CalibrationReport:
    azimuth_remap: str  # "identity" | "negate"
    probes: tuple  # ((x_plus, x_minus, x_ref), ...) per repeat

    @property
    def azimuth_sign(self) -> int:
        return 1 if self.azimuth_remap == "identity" else -1


def calibrate_conventions(backend, marker_image=None, repeats: int = 2) -> CalibrationReport:
    """Probe a live backend with +/-PROBE_DEG azimuth views of a marker card.

    Returns the remap making the served convention canonical; raises
    InconclusiveCalibration when repeats disagree or the marker barely moves.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    image = marker_image if marker_image is not None else make_marker_card()
    x_ref = detect_marker_x(image)
    votes = []
    probes = []
    for r in range(repeats):
        plus, minus = backend.generate_views(
            image, [(PROBE_DEG, 0.0), (-PROBE_DEG, 0.0)], steps=50, seed=r
        )
        x_plus = detect_marker_x(plus)
        x_minus = detect_marker_x(minus)
        probes.append((x_plus, x_minus, x_ref))
        if x_plus < x_ref - MIN_SHIFT_PX and x_minus > x_ref + MIN_SHIFT_PX:
            votes.append("identity")
        elif x_plus > x_ref + MIN_SHIFT_PX and x_minus < x_ref - MIN_SHIFT_PX:
            votes.append("negate")
        else:
            raise InconclusiveCalibration(
                f"repeat {r}: marker moved ambiguously "
                f"(x+={x_plus:.1f}, x-={x_minus:.1f}, ref={x_ref:.1f})"
            )
    if len(set(votes)) != 1:
        raise InconclusiveCalibration(f"repeats disagree: {votes}")
    report = CalibrationReport(azimuth_remap=votes[0], probes=tuple(probes))
    logger.info("calibration: azimuth remap = %s", report.azimuth_remap)
    return report


def apply_calibration(config, report: CalibrationReport):
    """Write the remap into a served configuration."""
    config.azimuth_sign = report.azimuth_sign
    return config
