"""Per-step speed guidance for on-ramp merging in a non-cooperative mainline.

Each guidance tick runs four tasks:

1. classify ramp vehicles into R1/R2/R3 by position;
2. check which R3 vehicles may change lanes (gap and speed difference
   against the projected mainline neighbours, judged with IDM desired gaps);
3. pick the on-ramp target: the leading R3 vehicle still unable to merge,
   otherwise the leading R2 vehicle;
4. project the target onto the mainline as a virtual vehicle and compute an
   IDM acceleration against the mainline vehicle ahead of it.

Mainline vehicles never receive commands. Every function here reads vehicle
attributes only (``id``, ``road``, ``position``, ``speed``, ``length``,
``lane_change_ready``, ``is_cav``), so any object exposing them works, not
just :class:`VehicleState`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from . import idm
from .idm import IdmParams
from .roadmodel import RampGeometry, RampSegment, segment_of, virtual_position


class Road(str, enum.Enum):
    MAIN = "main"
    RAMP = "ramp"


@dataclass(frozen=True)
class VehicleState:
    id: str
    road: Road
    position: float  # front bumper; ramp arc length or mainline coordinate [m]
    speed: float
    accel: float = 0.0
    length: float = 5.0
    is_cav: bool = False
    lane_change_ready: bool = False

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"vehicle {self.id}: negative speed {self.speed}")
        if self.length <= 0:
            raise ValueError(f"vehicle {self.id}: non-positive length")


@dataclass(frozen=True)
class GuidanceCommand:
    target_id: str
    recommended_accel: float
    recommended_speed: float
    leader_id: Optional[str]
    issued_at: float
    diagnostic: str = ""


@dataclass(frozen=True)
class MergeCriteria:
    ego: IdmParams
    follower: IdmParams
    check_follower: bool = True

    @classmethod
    def symmetric(cls, p: IdmParams, check_follower: bool = True) -> "MergeCriteria":
        return cls(ego=p, follower=p, check_follower=check_follower)


@dataclass
class VehicleGroups:
    r1: list = field(default_factory=list)
    r2: list = field(default_factory=list)
    r3: list = field(default_factory=list)
    mainline: list = field(default_factory=list)


@dataclass(frozen=True)
class Eligibility:
    eligible: bool
    leader_id: Optional[str] = None
    leader_gap: float = float("inf")
    leader_required: float = 0.0
    follower_id: Optional[str] = None
    follower_gap: float = float("inf")
    follower_required: float = 0.0


def _lead_first(vehicles) -> list:
    return sorted(vehicles, key=lambda v: (-v.position, str(v.id)))


def classify_vehicles(snapshot, geom: RampGeometry) -> VehicleGroups:
    """Split a snapshot into the three ramp groups and the mainline, leading vehicle first."""
    groups = VehicleGroups()
    by_segment = {RampSegment.R1: groups.r1, RampSegment.R2: groups.r2, RampSegment.R3: groups.r3}
    for v in snapshot:
        if v.road == Road.MAIN:
            groups.mainline.append(v)
        else:
            by_segment[segment_of(v.position, geom)].append(v)
    for name in ("r1", "r2", "r3", "mainline"):
        setattr(groups, name, _lead_first(getattr(groups, name)))
    return groups


def first_behind(mainline: Sequence, x: float) -> int:
    """Index of the first vehicle in a leading-first list whose front is at or behind ``x``.

    Returns ``len(mainline)`` when every vehicle is ahead of ``x``.
    """
    lo, hi = 0, len(mainline)
    while lo < hi:
        mid = (lo + hi) // 2
        if mainline[mid].position > x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def merge_eligible(ego, mainline: Sequence, crit: MergeCriteria, geom: RampGeometry) -> Eligibility:
    """Can ``ego`` (in R3) change lanes at its virtual mainline position right now?

    Both the gap ahead (ego's own desired gap) and the gap behind (the
    projected follower's desired gap) must hold; a missing neighbour makes
    its condition vacuous. Any body overlap gives a negative gap and fails.
    """
    if ego.road != Road.RAMP or segment_of(ego.position, geom) is not RampSegment.R3:
        raise ValueError(f"vehicle {ego.id} is not in R3")
    x = virtual_position(ego.position, geom)
    i = first_behind(mainline, x)
    ok = True
    kwargs = {}
    if i > 0:
        leader = mainline[i - 1]
        gap = leader.position - leader.length - x
        need = idm.desired_gap(ego.speed, ego.speed - leader.speed, crit.ego)
        ok = gap > 0 and gap >= need
        kwargs.update(leader_id=leader.id, leader_gap=gap, leader_required=need)
    if i < len(mainline):
        follower = mainline[i]
        gap = x - ego.length - follower.position
        need = idm.desired_gap(follower.speed, follower.speed - ego.speed, crit.follower)
        if crit.check_follower:
            ok = ok and gap > 0 and gap >= need
        else:
            ok = ok and gap > 0
        kwargs.update(follower_id=follower.id, follower_gap=gap, follower_required=need)
    return Eligibility(eligible=ok, **kwargs)


def select_target(groups: VehicleGroups) -> Optional[str]:
    """Id of the on-ramp vehicle to guide this tick, or ``None``."""
    for v in groups.r3:
        if not v.lane_change_ready:
            return v.id
    if groups.r2:
        return groups.r2[0].id
    return None


def compute_guidance(target, mainline: Sequence, geom: RampGeometry, p: IdmParams,
                     now: float, interval: float = 1.0) -> GuidanceCommand:
    """IDM guidance for ``target`` against the mainline vehicle ahead of its virtual position.

    ``p`` carries the mainline speed limit as ``v_max``. A mainline vehicle
    overlapping the virtual vehicle yields a full-braking command flagged
    ``"overlap"`` instead of an error.
    """
    if target.road != Road.RAMP:
        raise ValueError(f"vehicle {target.id} is not on the ramp")
    x = virtual_position(target.position, geom)
    v = target.speed
    leader = None
    for m in mainline:
        rear = m.position - m.length
        if rear > x:
            if leader is None or rear < leader.position - leader.length:
                leader = m
        elif m.position > x - target.length:
            return GuidanceCommand(
                target_id=target.id,
                recommended_accel=-p.b_hard,
                recommended_speed=min(max(v - p.b_hard * interval, 0.0), p.v_max),
                leader_id=m.id,
                issued_at=now,
                diagnostic="overlap",
            )
    if leader is None:
        a = max(min(idm.free_acceleration(v, p), p.a_m), -p.b_hard)
        leader_id = None
    else:
        gap = leader.position - leader.length - x
        a = idm.acceleration(v, gap, v - leader.speed, p)
        leader_id = leader.id
    return GuidanceCommand(
        target_id=target.id,
        recommended_accel=a,
        recommended_speed=min(max(v + a * interval, 0.0), p.v_max),
        leader_id=leader_id,
        issued_at=now,
    )


def guidance_tick(snapshot, geom: RampGeometry, p: IdmParams, crit: MergeCriteria,
                  now: float, interval: float = 1.0):
    """Run all four tasks on a snapshot.

    Returns ``(command_or_None, groups, eligibility_by_id)``. Readiness flags
    are evaluated here rather than trusted from the snapshot.
    """
    groups = classify_vehicles(snapshot, geom)
    verdicts = {v.id: merge_eligible(v, groups.mainline, crit, geom) for v in groups.r3}
    pending = [v for v in groups.r3 if not verdicts[v.id].eligible]
    target_id = pending[0].id if pending else (groups.r2[0].id if groups.r2 else None)
    command = None
    if target_id is not None:
        target = next(v for v in groups.r3 + groups.r2 if v.id == target_id)
        if getattr(target, "is_cav", True):
            command = compute_guidance(target, groups.mainline, geom, p, now, interval)
    return command, groups, verdicts


def command_log_rows(commands: List[GuidanceCommand]) -> List[list]:
    rows = [["time_s", "target_id", "leader_id", "accel_mps2", "speed_mps", "diagnostic"]]
    for c in commands:
        rows.append([
            f"{c.issued_at:.3f}", c.target_id, c.leader_id or "",
            f"{c.recommended_accel:.6f}", f"{c.recommended_speed:.6f}", c.diagnostic,
        ])
    return rows
