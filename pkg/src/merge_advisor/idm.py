"""Intelligent driver model (Treiber, Hennecke & Helbing, 2000).

``dv`` is always the closing speed, ego minus leader: positive when the ego
is approaching its leader.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class IdmParams:
    a_m: float = 1.5  # maximum acceleration [m/s^2]
    b_n: float = 2.0  # desired (comfortable) deceleration [m/s^2]
    v_max: float = 33.33  # desired speed / speed limit [m/s]
    s_min: float = 2.0  # minimum bumper-to-bumper spacing [m]
    t_s: float = 1.5  # desired time headway [s]
    delta: float = 4.0  # free-drive exponent
    b_hard: float = 6.0  # physical braking limit [m/s^2]

    def __post_init__(self):
        positive = ("a_m", "b_n", "v_max", "s_min", "delta", "b_hard")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be > 0")
        if self.t_s < 0:
            raise ValueError("IDM parameter t_s must be >= 0")

    def with_speed_limit(self, v_max: float) -> "IdmParams":
        return replace(self, v_max=v_max)


def desired_gap(v: float, dv: float, p: IdmParams) -> float:
    """Desired bumper-to-bumper gap s*, clamped at zero."""
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    s_star = p.s_min + p.t_s * v + v * dv / (2.0 * math.sqrt(p.a_m * p.b_n))
    return max(s_star, 0.0)


def free_acceleration(v: float, p: IdmParams) -> float:
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    return p.a_m * (1.0 - (v / p.v_max) ** p.delta)


def _clamp(a: float, p: IdmParams) -> float:
    return min(max(a, -p.b_hard), p.a_m)


def acceleration(v: float, s: float, dv: float, p: IdmParams) -> float:
    """IDM acceleration against a leader at gap ``s``, clamped to [-b_hard, a_m].

    Raises ``ValueError`` for ``s <= 0``, which means the two vehicles overlap.
    """
    if s <= 0:
        raise ValueError(f"gap must be positive, got {s}")
    r = desired_gap(v, dv, p) / s
    # explicit square: pow(r, 2.0) can differ from r * r in the last bit
    a = p.a_m * (1.0 - (v / p.v_max) ** p.delta - r * r)
    return _clamp(a, p)


def equilibrium_gap(v: float, p: IdmParams) -> float:
    """Steady-state gap at which a follower matching its leader's speed ``v`` holds it."""
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    if v >= p.v_max:
        raise ValueError("no finite equilibrium gap at or above the desired speed")
    return desired_gap(v, 0.0, p) / math.sqrt(1.0 - (v / p.v_max) ** p.delta)


def equilibrium_flow(v: float, p: IdmParams, vehicle_length: float) -> float:
    """Flow [veh/h] of a homogeneous stream at speed ``v``."""
    if v <= 0:
        return 0.0
    return 3600.0 * v / (equilibrium_gap(v, p) + vehicle_length)


def equilibrium_speed(flow: float, p: IdmParams, vehicle_length: float, tol: float = 1e-9) -> float:
    """Free-branch speed of a homogeneous stream carrying ``flow`` veh/h.

    Demand above capacity returns the speed at capacity.
    """
    if flow <= 0:
        return p.v_max
    # flow(v) rises from 0 to a single maximum then falls back to 0 at v_max
    lo, hi = 0.0, p.v_max * (1.0 - 1e-12)
    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if equilibrium_flow(m1, p, vehicle_length) < equilibrium_flow(m2, p, vehicle_length):
            lo = m1
        else:
            hi = m2
    v_cap = 0.5 * (lo + hi)
    if flow >= equilibrium_flow(v_cap, p, vehicle_length):
        return v_cap
    lo, hi = v_cap, p.v_max * (1.0 - 1e-12)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if equilibrium_flow(mid, p, vehicle_length) > flow:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
