"""Merging-area geometry: on-ramp segments and the ramp-to-mainline coordinate map.

The ramp is split into three consecutive segments measured as arc length from
the ramp origin:

    R1  low-speed connector from the local road
    R2  acceleration stretch
    R3  lane-change zone, ending at the ramp nose

The nose (downstream end of R3) sits at ``merge_point_x`` on the mainline.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class RampSegment(enum.Enum):
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"


@dataclass(frozen=True)
class RampGeometry:
    len_r1: float = 60.0
    len_r2: float = 100.0
    len_r3: float = 150.0
    merge_point_x: float = 700.0
    mainline_length: float = 1000.0
    speed_limit_r1: float = 16.67
    speed_limit_main: float = 33.33

    def __post_init__(self):
        for name in ("len_r1", "len_r2", "len_r3", "merge_point_x", "mainline_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.merge_point_x > self.mainline_length:
            raise ValueError("merge_point_x lies beyond the mainline end")
        if not 0 < self.speed_limit_r1 < self.speed_limit_main:
            raise ValueError("R1 speed limit must be positive and below the mainline limit")

    @property
    def ramp_length(self) -> float:
        return self.len_r1 + self.len_r2 + self.len_r3

    @property
    def r2_start(self) -> float:
        return self.len_r1

    @property
    def r3_start(self) -> float:
        return self.len_r1 + self.len_r2


def _check_range(ramp_pos: float, geom: RampGeometry) -> None:
    if not 0.0 <= ramp_pos <= geom.ramp_length:
        raise ValueError(
            f"ramp position {ramp_pos} outside [0, {geom.ramp_length}]"
        )


def segment_of(ramp_pos: float, geom: RampGeometry) -> RampSegment:
    """Classify a ramp position; intervals are half-open, R3 closed at the nose."""
    _check_range(ramp_pos, geom)
    if ramp_pos < geom.r2_start:
        return RampSegment.R1
    if ramp_pos < geom.r3_start:
        return RampSegment.R2
    return RampSegment.R3


def virtual_position(ramp_pos: float, geom: RampGeometry) -> float:
    """Mainline coordinate of a ramp position, aligned by arc length at the nose."""
    _check_range(ramp_pos, geom)
    return geom.merge_point_x - (geom.ramp_length - ramp_pos)
