"""Fixed-step microsimulation of a single-lane mainline with one on-ramp.

One run owns its state and its random generator, so runs are independent and
bit-for-bit reproducible from ``(config, seed)``. Per step, in order:

1. Poisson arrivals join the entry queues; at most one queued vehicle per
   entry is inserted, at the entry speed, once the gap to the last vehicle
   covers the IDM desired gap at that speed (never less than ``s_min``);
2. on guidance ticks (1 Hz) the ramp target's command is computed and latched;
3. accelerations: the latched command for the guided target, IDM against the
   same-lane leader for everybody else, optional courtesy braking of one
   mainline vehicle in cooperative mode, and a stop-before-the-nose rule;
4. semi-implicit Euler integration;
5. lane changes for every eligible R3 vehicle, leading vehicle first;
6. fuel accrual after warm-up;
7. removal of vehicles past the mainline end.
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import guidance, idm
from .guidance import GuidanceCommand, MergeCriteria, Road
from .idm import IdmParams
from .roadmodel import RampGeometry, virtual_position

GRAVITY = 9.81

SCOPE_NETWORK = "network"
SCOPE_RAMP = "ramp"


class CollisionError(RuntimeError):
    """Two same-lane vehicles overlap after integration."""

    def __init__(self, message: str, time: float, events: list):
        super().__init__(message)
        self.time = time
        self.events = events


@dataclass(frozen=True)
class FuelModel:
    idle_rate: float = 0.00015  # L/s
    efficiency: float = 0.30
    mass: float = 1500.0  # kg
    rolling_coeff: float = 0.012
    drag_area: float = 0.7  # C_d * A [m^2]
    air_density: float = 1.2  # kg/m^3
    energy_density: float = 34.2e6  # J/L

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"fuel model parameter {f.name} must be > 0")


def fuel_rate(v: float, a: float, fm: FuelModel) -> float:
    """Fuel flow [L/s] from tractive power demand; braking and coasting burn idle fuel."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    resist = fm.rolling_coeff * fm.mass * GRAVITY + 0.5 * fm.air_density * fm.drag_area * v * v
    power = fm.mass * a * v + resist * v
    return fm.idle_rate + max(power, 0.0) / (fm.efficiency * fm.energy_density)


def spawn_arrivals(rng: np.random.Generator, flow: float, dt: float, size: Optional[int] = None):
    """Poisson arrival count per step for a stream of ``flow`` veh/h.

    Returns one count, or an int64 array of ``size`` consecutive steps.
    """
    if flow < 0:
        raise ValueError("flow must be non-negative")
    if size is None:
        return 0 if flow == 0 else int(rng.poisson(flow * dt / 3600.0))
    if flow == 0:
        return np.zeros(size, dtype=np.int64)
    return rng.poisson(flow * dt / 3600.0, size).astype(np.int64)


@dataclass
class ScenarioConfig:
    geometry: RampGeometry = field(default_factory=RampGeometry)
    idm: IdmParams = field(default_factory=lambda: IdmParams(t_s=1.0))
    fuel: FuelModel = field(default_factory=FuelModel)
    mainline_flow: float = 2000.0  # veh/h/ln
    ramp_flow: float = 300.0  # veh/h/ln
    cooperative: bool = False
    guidance_enabled: bool = True
    check_follower: bool = True
    duration: float = 4200.0  # s, warm-up included
    warmup: float = 600.0  # s
    dt: float = 0.1  # s
    guidance_interval: float = 1.0  # s
    seed: int = 0
    r2_entry_speed: float = 15.0  # m/s
    nose_decel: Optional[float] = None  # m/s^2, nose braking onset; None means idm.b_n
    vehicle_length: float = 5.0  # m
    fuel_scope: str = SCOPE_NETWORK
    replay_path: Optional[str] = None
    record_trajectories: bool = False

    def __post_init__(self):
        if self.mainline_flow < 0 or self.ramp_flow < 0:
            raise ValueError("flows must be non-negative")
        if not self.duration > self.warmup >= 0:
            if not (self.duration == self.warmup and self.duration >= 0):
                raise ValueError("duration must exceed warmup")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        ratio = self.guidance_interval / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt must divide the guidance interval")
        if self.fuel_scope not in (SCOPE_NETWORK, SCOPE_RAMP):
            raise ValueError(f"unknown fuel scope {self.fuel_scope!r}")
        if self.r2_entry_speed <= 0:
            raise ValueError("r2_entry_speed must be positive")
        if self.nose_decel is not None and self.nose_decel <= 0:
            raise ValueError("nose_decel must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def nose_braking(self) -> float:
        return self.idm.b_n if self.nose_decel is None else self.nose_decel

    # --- JSON sections: geometry / idm / fuel / flows / flags / seed ---
    def to_dict(self) -> dict:
        return {
            "geometry": dataclasses.asdict(self.geometry),
            "idm": dataclasses.asdict(self.idm),
            "fuel": dataclasses.asdict(self.fuel),
            "flows": {"mainline_flow": self.mainline_flow, "ramp_flow": self.ramp_flow},
            "flags": {"cooperative": self.cooperative, "guidance_enabled": self.guidance_enabled,
                      "check_follower": self.check_follower,
                      "record_trajectories": self.record_trajectories},
            "timing": {"duration": self.duration, "warmup": self.warmup, "dt": self.dt,
                       "guidance_interval": self.guidance_interval},
            "ramp": {"r2_entry_speed": self.r2_entry_speed, "vehicle_length": self.vehicle_length,
                     "nose_decel": self.nose_decel},
            "fuel_scope": self.fuel_scope,
            "replay_path": self.replay_path,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {"geometry", "idm", "fuel", "flows", "flags", "timing", "ramp",
                 "fuel_scope", "replay_path", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        base = cls()
        kw = {}
        if "geometry" in d:
            kw["geometry"] = dataclasses.replace(base.geometry, **d["geometry"])
        if "idm" in d:
            kw["idm"] = dataclasses.replace(base.idm, **d["idm"])
        if "fuel" in d:
            kw["fuel"] = dataclasses.replace(base.fuel, **d["fuel"])
        for section in ("flows", "flags", "timing", "ramp"):
            kw.update(d.get(section, {}))
        for key in ("fuel_scope", "replay_path", "seed"):
            if key in d:
                kw[key] = d[key]
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


class Vehicle:
    """Mutable per-run vehicle; attribute names match :class:`guidance.VehicleState`."""

    __slots__ = ("id", "road", "position", "speed", "accel", "length", "is_cav",
                 "lane_change_ready", "fuel", "origin", "spawned_at", "stopped_at_nose",
                 "replay")

    def __init__(self, vid, road, position, speed, length, origin, spawned_at, is_cav=False):
        self.id = vid
        self.road = road
        self.position = position
        self.speed = speed
        self.accel = 0.0
        self.length = length
        self.is_cav = is_cav
        self.lane_change_ready = False
        self.fuel = 0.0
        self.origin = origin
        self.spawned_at = spawned_at
        self.stopped_at_nose = False
        self.replay = None

    def snapshot(self) -> guidance.VehicleState:
        return guidance.VehicleState(self.id, self.road, self.position, self.speed, self.accel,
                                     self.length, self.is_cav, self.lane_change_ready)


@dataclass
class SimResult:
    seed: int
    total_fuel: float
    fuel_by_vehicle: Dict[str, float]
    merge_count: int
    merge_failures: int
    merge_speed_mean: float
    merge_speed_p05: float
    merge_speed_p95: float
    collision_count: int
    spawned: int
    exited: int
    present: int
    queued: int
    ramp_backlog: List[int]  # ramp-origin vehicles not yet merged, sampled at 1 Hz
    trajectories: Dict[str, list] = field(default_factory=dict)

    CSV_FIELDS = ("seed", "total_fuel_l", "merge_count", "merge_failures", "merge_speed_mean",
                  "merge_speed_p05", "merge_speed_p95", "collision_count", "spawned", "exited",
                  "present", "queued", "final_ramp_backlog")

    def csv_row(self) -> list:
        return [
            str(self.seed), f"{self.total_fuel:.9f}", str(self.merge_count),
            str(self.merge_failures), f"{self.merge_speed_mean:.6f}",
            f"{self.merge_speed_p05:.6f}", f"{self.merge_speed_p95:.6f}",
            str(self.collision_count), str(self.spawned), str(self.exited), str(self.present),
            str(self.queued), str(self.ramp_backlog[-1] if self.ramp_backlog else 0),
        ]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def _percentile(values, q) -> float:
    if not values:
        return float("nan")
    return float(np.percentile(np.asarray(values), q))


class Simulation:
    def __init__(self, config: ScenarioConfig, replay=None):
        self.cfg = config
        g = config.geometry
        self.geom = g
        self.p_main = config.idm.with_speed_limit(g.speed_limit_main)
        self.r1_speed = min(config.r2_entry_speed, g.speed_limit_r1)
        self.p_r1 = config.idm.with_speed_limit(self.r1_speed)
        self.crit = MergeCriteria.symmetric(self.p_main, config.check_follower)
        # one child generator per entry, drawn up front: every engine sees the same
        # arrivals, and a longer run extends a shorter one instead of reshuffling it
        rng_main, rng_ramp = (np.random.default_rng(s)
                              for s in np.random.SeedSequence(config.seed).spawn(2))
        self.arrivals_main = spawn_arrivals(rng_main, config.mainline_flow, config.dt,
                                            config.n_steps)
        self.arrivals_ramp = spawn_arrivals(rng_ramp, config.ramp_flow, config.dt, config.n_steps)
        self.step_index = 0
        self.ticks_per_guidance = int(round(config.guidance_interval / config.dt))
        self.mainline: List[Vehicle] = []  # leading first
        self.ramp: List[Vehicle] = []  # leading first
        self.queues = {Road.MAIN: deque(), Road.RAMP: deque()}
        self.counters = {Road.MAIN: 0, Road.RAMP: 0}
        self.main_entry_speed = idm.equilibrium_speed(
            config.mainline_flow, self.p_main, config.vehicle_length)
        self.command: Optional[GuidanceCommand] = None
        self.command_log: List[GuidanceCommand] = []
        self.events: list = []
        self.fuel: Dict[str, float] = {}
        self.origin: Dict[str, Road] = {}
        self.merge_speeds: List[float] = []
        self.merge_failures = 0
        self.spawned = 0
        self.exited = 0
        self.ramp_backlog: List[int] = []
        self.trajectories: Dict[str, list] = {}
        self.replay = replay  # list of trajio.TrajectoryRecord or None
        self._replay_pending = []
        if replay is not None:
            self._replay_pending = sorted(replay, key=lambda r: (r.times[0], r.vehicle_id))

    @property
    def clock(self) -> float:
        return self.step_index * self.cfg.dt

    # ---------------------------------------------------------------- spawning
    def _spawn(self, t: float) -> None:
        k = self.step_index
        if self.replay is None:
            for _ in range(self.arrivals_main[k]):
                self._enqueue(Road.MAIN, t)
        for _ in range(self.arrivals_ramp[k]):
            self._enqueue(Road.RAMP, t)
        self._insert(Road.MAIN, self.mainline, self.main_entry_speed, self.p_main, t)
        self._insert(Road.RAMP, self.ramp, self.r1_speed, self.p_r1, t)

    def _enqueue(self, road: Road, t: float) -> None:
        self.counters[road] += 1
        prefix = "m" if road == Road.MAIN else "r"
        vid = f"{prefix}{self.counters[road]:05d}"
        self.queues[road].append((vid, t))
        self.spawned += 1
        self.origin[vid] = road
        self.fuel[vid] = 0.0

    def _idle_in_queue(self, spawned_at: float, until: float) -> float:
        start = max(spawned_at, self.cfg.warmup)
        end = min(until, self.cfg.duration)
        return self.cfg.fuel.idle_rate * max(end - start, 0.0)

    def _insert(self, road, lane: List[Vehicle], v_entry: float, p: IdmParams, t: float) -> None:
        queue = self.queues[road]
        if not queue:
            return
        if lane:
            last = lane[-1]
            gap = last.position - last.length
            v_lead = last.speed
        else:
            gap, v_lead = math.inf, None
        if gap < p.s_min:
            return
        if v_lead is not None and gap < idm.desired_gap(v_entry, v_entry - v_lead, p):
            return
        vid, spawned_at = queue.popleft()
        speed = v_entry
        veh = Vehicle(vid, road, 0.0, speed, self.cfg.vehicle_length, road, spawned_at,
                      is_cav=(road == Road.RAMP and self.cfg.guidance_enabled))
        self.fuel[vid] += self._idle_in_queue(spawned_at, t)
        lane.append(veh)

    def _update_replay(self, t: float) -> None:
        while self._replay_pending and self._replay_pending[0].times[0] <= t + 1e-9:
            rec = self._replay_pending.pop(0)
            veh = Vehicle(f"x{rec.vehicle_id}", Road.MAIN, 0.0, 0.0, self.cfg.vehicle_length,
                          Road.MAIN, t)
            veh.replay = rec
            self.fuel[veh.id] = 0.0
            self.origin[veh.id] = Road.MAIN
            self.spawned += 1
            self.mainline.append(veh)
        for veh in self.mainline:
            if veh.replay is not None:
                pos, spd = veh.replay.state_at(t)
                veh.position, veh.speed = pos, spd
        self.mainline.sort(key=lambda v: -v.position)

    # ---------------------------------------------------------------- guidance
    def _leading_candidate(self) -> Optional[Vehicle]:
        # Eligible R3 vehicles merged in the previous step, so the leading ramp
        # vehicle is the target whenever it is past R1 (same as select_target).
        if self.ramp and self.ramp[0].position >= self.geom.r2_start:
            return self.ramp[0]
        return None

    def _run_guidance(self, t: float) -> None:
        self.command = None
        target = self._leading_candidate()
        if target is None or not target.is_cav:
            return
        cmd = guidance.compute_guidance(target, self.mainline, self.geom, self.p_main, t,
                                        self.cfg.guidance_interval)
        self.command = cmd
        self.command_log.append(cmd)

    # ---------------------------------------------------------------- dynamics
    def _mainline_accels(self) -> None:
        p = self.p_main
        leader = None
        for veh in self.mainline:
            if veh.replay is not None:
                leader = veh
                continue
            if leader is None:
                veh.accel = idm.free_acceleration(veh.speed, p)
            else:
                gap = leader.position - leader.length - veh.position
                veh.accel = idm.acceleration(veh.speed, gap, veh.speed - leader.speed, p)
            leader = veh
        if self.cfg.cooperative:
            self.cooperative_adjust()

    def cooperative_adjust(self) -> None:
        """Courtesy braking: the mainline vehicle just behind the candidate's
        virtual position also follows the virtual vehicle."""
        cand = self._leading_candidate()
        if cand is None:
            return
        x = virtual_position(cand.position, self.geom)
        rear = x - cand.length
        i = guidance.first_behind(self.mainline, rear)
        if i >= len(self.mainline):
            return
        f = self.mainline[i]
        gap = rear - f.position
        if f.replay is not None or gap <= 0:
            return
        a = idm.acceleration(f.speed, gap, f.speed - cand.speed, self.p_main)
        f.accel = min(f.accel, a)

    def _nose_limit(self, veh: Vehicle) -> float:
        """Deceleration needed to stop at the nose, once it exceeds comfortable braking."""
        d = self.geom.ramp_length - veh.position
        if d <= 0.01:
            return 0.0
        need = veh.speed * veh.speed / (2.0 * d)
        if need >= self.cfg.nose_braking:
            return -need
        return math.inf

    def _ramp_accels(self, t: float) -> None:
        r2_start = self.geom.r2_start
        cmd = self.command
        leader = None
        for veh in self.ramp:
            p = self.p_r1 if veh.position < r2_start else self.p_main
            if leader is None:
                a = idm.free_acceleration(veh.speed, p)
            else:
                gap = leader.position - leader.length - veh.position
                a = idm.acceleration(veh.speed, gap, veh.speed - leader.speed, p)
            if cmd is not None and cmd.target_id == veh.id:
                a = min(a, cmd.recommended_accel) if leader is not None else cmd.recommended_accel
            a = min(a, self._nose_limit(veh))
            veh.accel = max(min(a, p.a_m), -p.b_hard)
            leader = veh

    def _integrate(self, lane: List[Vehicle], is_ramp: bool) -> None:
        dt = self.cfg.dt
        end = self.geom.ramp_length
        for veh in lane:
            if veh.replay is not None:
                continue
            v = veh.speed + veh.accel * dt
            if v < 0.0:
                v = 0.0
            veh.speed = v
            veh.position += v * dt
            if is_ramp and veh.position >= end:
                veh.position = end
                veh.speed = 0.0
            if is_ramp and not veh.stopped_at_nose and veh.speed < 0.1 and end - veh.position < 1.0:
                veh.stopped_at_nose = True
                self.merge_failures += 1

    def _check_overlaps(self, lane: List[Vehicle], t: float) -> None:
        for lead, foll in zip(lane, lane[1:]):
            if lead.position - lead.length - foll.position <= 0.0:
                self.events.append(("collision", t, lead.id, foll.id))
                raise CollisionError(
                    f"t={t:.1f}s: {foll.id} overlaps {lead.id} on {lead.road.value}",
                    t, list(self.events))

    def _lane_changes(self, t: float) -> None:
        r3_start = self.geom.r3_start
        remaining = []
        for veh in self.ramp:
            if veh.position >= r3_start:
                verdict = guidance.merge_eligible(veh, self.mainline, self.crit, self.geom)
                veh.lane_change_ready = verdict.eligible
                if verdict.eligible:
                    x = virtual_position(veh.position, self.geom)
                    veh.road = Road.MAIN
                    veh.position = x
                    i = guidance.first_behind(self.mainline, x)
                    self.mainline.insert(i, veh)
                    self.merge_speeds.append(veh.speed)
                    self.events.append(("merge", round(t, 6), veh.id, round(veh.speed, 6)))
                    continue
            remaining.append(veh)
        self.ramp = remaining

    def _accrue_fuel(self, t: float) -> None:
        if t < self.cfg.warmup:
            return
        fm = self.cfg.fuel
        dt = self.cfg.dt
        fuel = self.fuel
        for lane in (self.mainline, self.ramp):
            for veh in lane:
                fuel[veh.id] += fuel_rate(veh.speed, veh.accel, fm) * dt

    def _remove_exited(self, t: float) -> None:
        end = self.geom.mainline_length
        keep = []
        for veh in self.mainline:
            gone = veh.position > end
            if veh.replay is not None and t > veh.replay.times[-1] + 1e-9:
                gone = True
            if gone:
                self.exited += 1
            else:
                keep.append(veh)
        self.mainline = keep

    def _record(self, t: float) -> None:
        backlog = len(self.ramp) + len(self.queues[Road.RAMP])
        self.ramp_backlog.append(backlog)
        if self.cfg.record_trajectories:
            for lane in (self.mainline, self.ramp):
                for veh in lane:
                    self.trajectories.setdefault(veh.id, []).append(
                        (round(t, 6), veh.road.value, veh.position, veh.speed))

    def step(self) -> None:
        t = self.clock
        self._spawn(t)
        if self.replay is not None:
            self._update_replay(t)
        tick = self.step_index % self.ticks_per_guidance == 0
        if tick:
            if self.cfg.guidance_enabled:
                self._run_guidance(t)
            self._record(t)
        self._mainline_accels()
        self._ramp_accels(t)
        self._integrate(self.mainline, False)
        self._integrate(self.ramp, True)
        self._check_overlaps(self.mainline, t)
        self._check_overlaps(self.ramp, t)
        self._lane_changes(t)
        self._accrue_fuel(t)
        self._remove_exited(t)
        self.step_index += 1

    def present(self) -> int:
        return len(self.mainline) + len(self.ramp)

    def queued(self) -> int:
        return len(self.queues[Road.MAIN]) + len(self.queues[Road.RAMP])

    def run(self) -> SimResult:
        n_steps = self.cfg.n_steps
        while self.step_index < n_steps:
            self.step()
        return self.result()

    def result(self) -> SimResult:
        end = self.cfg.duration
        fuel = dict(self.fuel)
        for road, queue in self.queues.items():
            for vid, spawned_at in queue:
                fuel[vid] += self._idle_in_queue(spawned_at, end)
        if self.cfg.fuel_scope == SCOPE_RAMP:
            counted = {k: v for k, v in fuel.items() if self.origin[k] == Road.RAMP}
        else:
            counted = fuel
        total = math.fsum(counted[k] for k in sorted(counted))
        speeds = self.merge_speeds
        return SimResult(
            seed=self.cfg.seed,
            total_fuel=total,
            fuel_by_vehicle={k: counted[k] for k in sorted(counted)},
            merge_count=len(speeds),
            merge_failures=self.merge_failures,
            merge_speed_mean=float(np.mean(speeds)) if speeds else float("nan"),
            merge_speed_p05=_percentile(speeds, 5),
            merge_speed_p95=_percentile(speeds, 95),
            collision_count=0,
            spawned=self.spawned,
            exited=self.exited,
            present=self.present(),
            queued=self.queued(),
            ramp_backlog=list(self.ramp_backlog),
            trajectories=self.trajectories,
        )


ENGINES = ("auto", "reference", "compiled")


def _pack_parameters(sim: Simulation) -> np.ndarray:
    from . import _kernel as K

    cfg, g, p, fm = sim.cfg, sim.geom, sim.p_main, sim.cfg.fuel
    prm = np.empty(K.N_FLOAT)
    prm[K.DT], prm[K.DURATION], prm[K.WARMUP], prm[K.LENGTH] = (
        cfg.dt, cfg.duration, cfg.warmup, cfg.vehicle_length)
    prm[K.R2_START], prm[K.R3_START], prm[K.RAMP_LEN] = g.r2_start, g.r3_start, g.ramp_length
    prm[K.MERGE_X], prm[K.MAIN_LEN] = g.merge_point_x, g.mainline_length
    prm[K.A_M], prm[K.B_N], prm[K.S_MIN], prm[K.T_S] = p.a_m, p.b_n, p.s_min, p.t_s
    prm[K.DELTA], prm[K.B_HARD] = p.delta, p.b_hard
    prm[K.V_MAIN], prm[K.V_R1] = p.v_max, sim.r1_speed
    prm[K.V_ENTRY_MAIN], prm[K.NOSE_BRAKING] = sim.main_entry_speed, cfg.nose_braking
    prm[K.IDLE], prm[K.EFF], prm[K.MASS] = fm.idle_rate, fm.efficiency, fm.mass
    prm[K.ROLL], prm[K.DRAG], prm[K.RHO] = fm.rolling_coeff, fm.drag_area, fm.air_density
    prm[K.ENERGY] = fm.energy_density
    return prm


def _run_compiled(config: ScenarioConfig) -> SimResult:
    from . import _kernel as K

    sim = Simulation(config)
    counts, fail_time, fuel_m, fuel_r, speeds, backlog = K.run_kernel(
        sim.arrivals_main, sim.arrivals_ramp, _pack_parameters(sim), sim.ticks_per_guidance,
        config.guidance_enabled, config.cooperative, config.check_follower)
    (status, n_main, n_ramp, in_main, in_ramp, present_m, present_r, exited, failures,
     _, _, _, _, _) = (int(c) for c in counts)
    if status != K.STATUS_OK:
        # replay the run on the reference engine for the full event log
        Simulation(config).run()
        raise CollisionError(f"t={fail_time:.1f}s: overlap in compiled run", fail_time, [])
    fuel = {f"m{i + 1:05d}": float(f) for i, f in enumerate(fuel_m)}
    fuel.update({f"r{i + 1:05d}": float(f) for i, f in enumerate(fuel_r)})
    if config.fuel_scope == SCOPE_RAMP:
        counted = {f"r{i + 1:05d}": float(f) for i, f in enumerate(fuel_r)}
    else:
        counted = fuel
    speeds = [float(v) for v in speeds]
    return SimResult(
        seed=config.seed,
        total_fuel=math.fsum(counted.values()),
        fuel_by_vehicle={k: counted[k] for k in sorted(counted)},
        merge_count=len(speeds),
        merge_failures=failures,
        merge_speed_mean=float(np.mean(speeds)) if speeds else float("nan"),
        merge_speed_p05=_percentile(speeds, 5),
        merge_speed_p95=_percentile(speeds, 95),
        collision_count=0,
        spawned=n_main + n_ramp,
        exited=exited,
        present=present_m + present_r,
        queued=(n_main - in_main) + (n_ramp - in_ramp),
        ramp_backlog=[int(b) for b in backlog],
    )


def run_scenario(config: ScenarioConfig, replay=None, engine: str = "auto") -> SimResult:
    """Run one scenario. ``replay`` (trajectory records) replaces spawned mainline traffic.

    ``engine="auto"`` uses the compiled kernel unless the run needs replay or
    trajectory recording, which only the reference engine supports. Both
    engines evaluate the same expressions in the same order.
    """
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    if replay is None and config.replay_path:
        from .trajio import read_trajectory_csv
        replay = read_trajectory_csv(config.replay_path)
    needs_reference = replay is not None or config.record_trajectories
    if engine == "compiled" and needs_reference:
        raise ValueError("the compiled engine supports neither replay nor trajectory recording")
    if engine == "reference" or needs_reference:
        return Simulation(config, replay).run()
    return _run_compiled(config)


def simulate_platoon(leader_speed, duration: float, p: IdmParams, dt: float = 0.1,
                     follower_speed: Optional[float] = None, initial_gap: Optional[float] = None,
                     vehicle_length: float = 5.0, sample_every: float = 1.0):
    """Leader with a prescribed speed profile and one IDM follower, same integrator as the engine.

    ``leader_speed`` is a constant or a callable of time. Returns arrays of
    sample times, follower positions, follower speeds and bumper gaps.
    """
    speed_of = leader_speed if callable(leader_speed) else (lambda _t: float(leader_speed))
    v_l = speed_of(0.0)
    v_f = v_l if follower_speed is None else follower_speed
    if initial_gap is None:
        initial_gap = idm.equilibrium_gap(min(v_f, 0.95 * p.v_max), p) + 10.0
    x_f = 0.0
    x_l = initial_gap + vehicle_length
    n = int(round(duration / dt))
    every = int(round(sample_every / dt))
    times, pos, spd, gaps = [], [], [], []
    for k in range(n + 1):
        t = k * dt
        gap = x_l - vehicle_length - x_f
        if k % every == 0:
            times.append(t)
            pos.append(x_f)
            spd.append(v_f)
            gaps.append(gap)
        if gap <= 0:
            raise CollisionError("platoon follower hit the leader", t, [])
        a = idm.acceleration(v_f, gap, v_f - v_l, p)
        v_l = speed_of(t + dt)
        x_l += v_l * dt
        v_f = max(v_f + a * dt, 0.0)
        x_f += v_f * dt
    return np.array(times), np.array(pos), np.array(spd), np.array(gaps)
