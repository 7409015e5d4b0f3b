"""Procedural reference-motion generator.

Stands in for motion capture: synthesizes pace/trot/canter clips across the
speed bands, heading-turn clips at 1 m/s, derives per-frame high-level
command labels, and persists datasets as JSON-Lines.

Frames are sampled at the end of each 1/30 s interval (the path origin at
t=0 precedes the first stored frame), so a 60 s clip holds 1800 frames and
its center-of-mass path reaches exactly the integrated travel distance.
All velocity fields are forward finite differences of the stored positions
on the 30 Hz grid, which makes kinematic consistency hold by construction.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    AgentState,
    Command,
    QuadrupedConfig,
    heading_vector,
    quat_about_z,
)
from .physics import wrap_angle

FPS = 30
FRAME_DT = 1.0 / FPS
SCHEMA_VERSION = 1
SPEED_MAX = 4.0
TURN_RATE = 0.5 * math.pi  # rad/s, heading arcs
COMMAND_HORIZON = 1.0      # s; heading offsets are quoted per this horizon

# Per-leg phase offsets in leg order (LF, RF, LR, RR). The cycle duration
# shrinks with speed and is clamped so strides stay reachable.
GAIT_TABLE = {
    "stand": {"offsets": (0.0, 0.0, 0.0, 0.0), "duty": 1.0},
    "pace": {"offsets": (0.0, 0.5, 0.0, 0.5), "duty": 0.6},
    "trot": {"offsets": (0.0, 0.5, 0.5, 0.0), "duty": 0.55},
    "canter": {"offsets": (0.3, 0.6, 0.0, 0.3), "duty": 0.4},
}
CYCLE_COEF = 0.7
CYCLE_MIN = 0.35
CYCLE_MAX = 0.9
SWING_HEIGHT = 0.04


def gait_table_hash() -> str:
    payload = {
        "table": GAIT_TABLE,
        "cycle": [CYCLE_COEF, CYCLE_MIN, CYCLE_MAX],
        "swing_height": SWING_HEIGHT,
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class GaitSpec:
    name: str
    offsets: tuple[float, float, float, float]
    duty: float
    cycle_s: float
    swing_height: float
    stride: float  # speed * cycle duration


def cycle_duration(speed: float) -> float:
    t = CYCLE_COEF / math.sqrt(max(speed, 0.5))
    return min(max(t, CYCLE_MIN), CYCLE_MAX)


def gait_for_speed(speed: float) -> GaitSpec:
    """Gait band lookup: stand at 0, pace on (0,2), trot [2,3.5), canter [3.5,4]."""
    if not 0.0 <= speed <= SPEED_MAX:
        raise ValueError(f"speed {speed} outside [0, {SPEED_MAX}] m/s")
    if speed == 0.0:
        name = "stand"
    elif speed < 2.0:
        name = "pace"
    elif speed < 3.5:
        name = "trot"
    else:
        name = "canter"
    entry = GAIT_TABLE[name]
    cyc = cycle_duration(speed)
    return GaitSpec(name, entry["offsets"], entry["duty"], cyc,
                    SWING_HEIGHT, speed * cyc)


# ---------------------------------------------------------------------------
# two-link leg kinematics
# ---------------------------------------------------------------------------
# Angle convention: 0 = segment pointing straight down; positive rotates the
# segment toward +x (counter-clockwise). The knee-backward branch keeps the
# knee angle <= 0.

def leg_fk(hip, hip_angle, knee_angle, l1, l2):
    """Foot position for given joint angles (same frame as the hip)."""
    a1 = hip_angle
    a2 = hip_angle + knee_angle
    return (hip[0] + l1 * math.sin(a1) + l2 * math.sin(a2),
            hip[1] - l1 * math.cos(a1) - l2 * math.cos(a2))


def two_link_ik(hip, target, l1, l2):
    """(hip_angle, knee_angle) putting the foot at target; knee-backward branch."""
    px, py = target[0] - hip[0], target[1] - hip[1]
    r = math.hypot(px, py)
    lo, hi = abs(l1 - l2), l1 + l2
    if r > hi + 1e-9:
        raise ValueError(f"target out of reach by {r - hi:.6f} m")
    if r < lo - 1e-9:
        raise ValueError(f"target too close by {lo - r:.6f} m")
    cos_knee = (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    cos_knee = min(1.0, max(-1.0, cos_knee))
    knee = -math.acos(cos_knee)
    hip_angle = math.atan2(px, -py) - math.atan2(
        l2 * math.sin(knee), l1 + l2 * math.cos(knee))
    return hip_angle, knee


def nominal_pose(cfg: QuadrupedConfig) -> np.ndarray:
    """Standing joint angles: every foot directly below its hip."""
    drop = cfg.standing_height - cfg.foot_ground_y
    hip_a, knee_a = two_link_ik((0.0, 0.0), (0.0, -drop),
                                cfg.upper_len, cfg.lower_len)
    return np.array([hip_a, knee_a] * 4)


# ---------------------------------------------------------------------------
# clip synthesis
# ---------------------------------------------------------------------------

@dataclass
class ReferenceFrame(AgentState):
    t: float = 0.0


@dataclass
class ReferenceClip:
    frames: list
    kind: str  # "speed" | "heading"
    commands: list

    def __len__(self) -> int:
        return len(self.frames)


def piecewise(segments):
    """Step function from [(duration_s, value), ...]; holds the last value."""
    bounds = []
    acc = 0.0
    for dur, val in segments:
        if dur <= 0:
            raise ValueError("segment durations must be positive")
        acc += dur
        bounds.append((acc, float(val)))

    def fn(t: float) -> float:
        for end, val in bounds:
            if t <= end:
                return val
        return bounds[-1][1]

    return fn


class _LegTracker:
    """Sequential stance/swing state for one leg.

    Stance anchors the foot to the ground; swing follows a cycloidal arc to
    a touchdown point predicted at liftoff. Positions stay continuous across
    gait-table switches because mode changes re-anchor from the current
    foot position rather than the phase formula.
    """

    def __init__(self):
        self.mode = None
        self.anchor = 0.0
        self.swing_from = 0.0
        self.swing_target = 0.0

    def foot_x(self, phase, gait: GaitSpec, hip_x, speed):
        duty = gait.duty
        lead = 0.5 * speed * gait.cycle_s * duty
        if phase < duty:
            if self.mode != "stance":
                if self.mode == "swing":
                    self.anchor = self.swing_target
                else:  # first frame mid-stance
                    self.anchor = hip_x + lead - phase * speed * gait.cycle_s
                self.mode = "stance"
            return self.anchor, 0.0
        s = (phase - duty) / (1.0 - duty)
        if self.mode != "swing":
            if self.mode == "stance":
                self.swing_from = self.anchor
            else:  # first frame mid-swing
                self.swing_from = hip_x - speed * (phase - duty) * gait.cycle_s - lead
            time_to_td = (1.0 - phase) * gait.cycle_s
            self.swing_target = hip_x + speed * time_to_td + lead
            self.mode = "swing"
        x = self.swing_from + (self.swing_target - self.swing_from) * (
            s - math.sin(2.0 * math.pi * s) / (2.0 * math.pi))
        h = gait.swing_height * 0.5 * (1.0 - math.cos(2.0 * math.pi * s))
        return x, h


def _generate(cfg: QuadrupedConfig, speed_fn, yaw_rate_fn, duration: float,
              kind: str) -> ReferenceClip:
    n = int(round(duration * FPS))
    if n < 2:
        raise ValueError("clip must span at least two frames")
    h_torso = cfg.standing_height
    foot_y0 = cfg.foot_ground_y
    l1, l2 = cfg.upper_len, cfg.lower_len
    reach = (l1 + l2) * 0.995

    x_c = 0.0
    psi = 0.0
    com_h = np.zeros(2)
    phase_acc = 0.0
    legs = [_LegTracker() for _ in range(4)]
    frames: list[ReferenceFrame] = []
    masses = np.array([cfg.torso_mass]
                      + [cfg.upper_mass, cfg.lower_mass] * 4)
    total_mass = masses.sum()

    for i in range(n):
        t = (i + 1) * FRAME_DT
        speed = float(speed_fn(t))
        gait = gait_for_speed(speed)
        yaw_rate = float(yaw_rate_fn(t))
        x_c += speed * FRAME_DT
        psi += yaw_rate * FRAME_DT
        com_h = com_h + speed * FRAME_DT * heading_vector(psi)
        phase_acc += FRAME_DT / gait.cycle_s

        link_world = np.zeros((9, 3))
        link_angle = np.zeros(9)
        joint_pos = np.zeros(8)
        contacts = np.zeros(4)
        link_world[0] = (x_c, h_torso, 0.0)

        for e in range(4):
            hip_x = x_c + cfg.leg_hip_x(e)
            p = (phase_acc + gait.offsets[e]) % 1.0
            fx, lift = legs[e].foot_x(p, gait, hip_x, speed)
            fy = foot_y0 + lift
            contacts[e] = 1.0 if p < gait.duty else 0.0
            # reach leash: clamp the horizontal extent at extreme stance
            tx, ty = fx - hip_x, fy - h_torso
            max_tx = math.sqrt(max(reach * reach - ty * ty, 0.0))
            if abs(tx) > max_tx:
                tx = math.copysign(max_tx, tx)
                if legs[e].mode == "stance":
                    legs[e].anchor = hip_x + tx
            hip_a, knee_a = two_link_ik((0.0, 0.0), (tx, ty), l1, l2)
            joint_pos[2 * e] = hip_a
            joint_pos[2 * e + 1] = knee_a
            a1, a2 = hip_a, hip_a + knee_a
            hip_pt = np.array([hip_x, h_torso])
            upper_c = hip_pt + 0.5 * l1 * np.array([math.sin(a1), -math.cos(a1)])
            knee_pt = hip_pt + l1 * np.array([math.sin(a1), -math.cos(a1)])
            lower_c = knee_pt + 0.5 * l2 * np.array([math.sin(a2), -math.cos(a2)])
            link_world[1 + 2 * e, :2] = upper_c
            link_world[2 + 2 * e, :2] = lower_c
            link_angle[1 + 2 * e] = a1
            link_angle[2 + 2 * e] = a2

        root = link_world[0]
        # horizontal COM follows the commanded path (labels stay exact);
        # the height is the true mass-weighted value so a reset-observe
        # round trip reproduces every coordinate
        com_z = float(masses @ link_world[:, 1]) / total_mass
        frames.append(ReferenceFrame(
            root_pos=root.copy(),
            root_quat=quat_about_z(0.0),
            root_linvel=np.zeros(3),
            root_angvel=np.zeros(3),
            link_pos=link_world - root,
            link_quat=np.stack([quat_about_z(a) for a in link_angle]),
            link_linvel=np.zeros((9, 3)),
            link_angvel=np.zeros((9, 3)),
            joint_pos=joint_pos,
            joint_vel=np.zeros(8),
            contacts=contacts,
            heading=psi,
            com_pos=np.array([com_h[0], com_h[1], com_z]),
            com_vel=np.zeros(3),
            t=t,
        ))

    _fill_velocities(frames)
    clip = ReferenceClip(frames=frames, kind=kind, commands=[])
    clip.commands = [derive_high_level(clip, i) for i in range(n - 1)]
    clip.commands.append(clip.commands[-1])
    return clip


def _fill_velocities(frames: list[ReferenceFrame]) -> None:
    for i in range(len(frames) - 1):
        a, b = frames[i], frames[i + 1]
        a.root_linvel = (b.root_pos - a.root_pos) * FPS
        a.link_linvel = (b.link_pos - a.link_pos) * FPS
        da = np.array([
            wrap_angle(_qz(b.link_quat[j]) - _qz(a.link_quat[j]))
            for j in range(9)])
        a.link_angvel = np.zeros((9, 3))
        a.link_angvel[:, 2] = da * FPS
        a.root_angvel = a.link_angvel[0].copy()
        a.joint_vel = np.array([
            wrap_angle(b.joint_pos[j] - a.joint_pos[j]) for j in range(8)
        ]) * FPS
        a.com_vel = (b.com_pos - a.com_pos) * FPS
    if len(frames) >= 2:
        last, prev = frames[-1], frames[-2]
        for f in ("root_linvel", "link_linvel", "link_angvel", "root_angvel",
                  "joint_vel", "com_vel"):
            setattr(last, f, getattr(prev, f).copy())


def _qz(q) -> float:
    return 2.0 * math.atan2(q[3], q[0])


def synthesize_speed_clip(profile, duration: float,
                          cfg: QuadrupedConfig | None = None) -> ReferenceClip:
    """Straight-line clip following a piecewise speed profile in [0,4] m/s."""
    cfg = cfg or QuadrupedConfig()
    return _generate(cfg, profile, lambda t: 0.0, duration, "speed")


def synthesize_heading_clip(turns, duration: float,
                            cfg: QuadrupedConfig | None = None,
                            speed: float = 1.0,
                            turn_rate: float = TURN_RATE) -> ReferenceClip:
    """Pace clip at fixed speed whose heading follows constant-rate arcs.

    turns: [(angle_rad in [0, pi], direction)] with direction +1 = left
    (counter-clockwise), -1 = right. Straight gaps are sized adaptively so
    the schedule always fits the duration; turns past the end are cut off
    by the clip boundary.
    """
    cfg = cfg or QuadrupedConfig()
    spans = []
    turn_time = 0.0
    for angle, direction in turns:
        if not 0.0 <= angle <= math.pi:
            raise ValueError("turn angles must lie in [0, pi]")
        if direction not in (1, -1, 1.0, -1.0):
            raise ValueError("turn direction must be +1 (left) or -1 (right)")
        turn_time += angle / turn_rate
    gap = max((duration - turn_time) / (len(turns) + 1), 0.2) if turns else duration
    t0 = gap
    for angle, direction in turns:
        dur = angle / turn_rate
        spans.append((t0, t0 + dur, float(direction) * turn_rate))
        t0 += dur + gap

    def yaw_rate(t: float) -> float:
        for start, end, rate in spans:
            if start <= t < end:
                return rate
        return 0.0

    return _generate(cfg, lambda t: speed, yaw_rate, duration, "heading")


def derive_high_level(clip: ReferenceClip, i: int,
                      horizon: float = COMMAND_HORIZON) -> Command:
    """Command label from consecutive frames: speed and heading offset.

    The heading offset is the per-frame heading change extrapolated to the
    command horizon, matching how live commands quote a turn (a quarter turn
    per second at 1 m/s reads as (1, 0.5*pi)).
    """
    if i + 1 >= len(clip.frames):
        raise ValueError("need a successor frame to derive a command")
    a, b = clip.frames[i], clip.frames[i + 1]
    speed = float(np.linalg.norm(b.com_pos[:2] - a.com_pos[:2])) * FPS
    speed = min(SPEED_MAX, max(0.0, speed))
    dpsi = wrap_angle(b.heading - a.heading) * FPS * horizon
    dpsi = min(math.pi, max(-math.pi, dpsi))
    return Command(speed, dpsi)


def kinematic_residual(clip: ReferenceClip) -> float:
    """Max |finite-difference velocity - stored velocity| over the clip."""
    worst = 0.0
    for i in range(len(clip.frames) - 1):
        a, b = clip.frames[i], clip.frames[i + 1]
        worst = max(worst, float(np.abs(
            (b.root_pos - a.root_pos) * FPS - a.root_linvel).max()))
        worst = max(worst, float(np.abs(
            (b.link_pos - a.link_pos) * FPS - a.link_linvel).max()))
        worst = max(worst, float(np.abs(
            (b.com_pos - a.com_pos) * FPS - a.com_vel).max()))
        dj = np.array([wrap_angle(b.joint_pos[j] - a.joint_pos[j])
                       for j in range(8)]) * FPS
        worst = max(worst, float(np.abs(dj - a.joint_vel).max()))
    return worst


# ---------------------------------------------------------------------------
# persistence (JSON-Lines; manifest record first)
# ---------------------------------------------------------------------------

class ClipFormatError(ValueError):
    pass


def save_clip(clip: ReferenceClip, path: str) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "fps": FPS,
        "kind": clip.kind,
        "gait_table_hash": gait_table_hash(),
        "frames": len(clip.frames),
    }
    with open(path, "w") as f:
        f.write(json.dumps(manifest) + "\n")
        for frame, cmd in zip(clip.frames, clip.commands):
            rec = frame.to_record()
            rec["t"] = frame.t
            rec["command"] = [cmd.speed, cmd.heading_delta]
            f.write(json.dumps(rec, allow_nan=False) + "\n")


def load_clip(path: str) -> ReferenceClip:
    frames = []
    commands = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ClipFormatError(f"{path}:{lineno}: bad record: {e}") from e
            if lineno == 1:
                if "schema_version" not in rec:
                    raise ClipFormatError(f"{path}:1: missing manifest record")
                if rec["schema_version"] != SCHEMA_VERSION:
                    raise ClipFormatError(
                        f"schema version mismatch: expected {SCHEMA_VERSION}, "
                        f"found {rec.get('schema_version')}")
                if rec.get("fps") != FPS:
                    raise ClipFormatError(
                        f"frame rate mismatch: expected {FPS}, found {rec.get('fps')}")
                kind = rec.get("kind", "speed")
                declared = rec.get("frames")
                continue
            cmd = rec.pop("command")
            t = rec.pop("t")
            frame = ReferenceFrame(t=t, **{
                k: (float(v) if k == "heading" else np.asarray(v, dtype=np.float64))
                for k, v in rec.items()
            })
            frames.append(frame)
            commands.append(Command(cmd[0], cmd[1]))
    if not frames:
        raise ClipFormatError(f"{path}: no frame records")
    if declared is not None and declared != len(frames):
        raise ClipFormatError(
            f"{path}: manifest declares {declared} frames, found {len(frames)}")
    return ReferenceClip(frames=frames, kind=kind, commands=commands)


# ---------------------------------------------------------------------------
# default desk datasets
# ---------------------------------------------------------------------------

def default_speed_segments():
    """One minute covering all gait bands including both range endpoints."""
    return [
        (2.0, 0.0), (6.0, 0.5), (6.0, 1.0), (5.0, 1.5), (5.0, 1.9),
        (6.0, 2.2), (5.0, 2.6), (5.0, 3.0), (4.0, 3.3), (6.0, 3.6),
        (5.0, 3.9), (5.0, 4.0),
    ]


def default_heading_turns():
    half = math.pi / 2
    return [(half, 1), (half, -1), (math.pi, 1), (math.pi, -1),
            (half, -1), (half, 1)]


def make_speed_clip(duration: float = 60.0,
                    cfg: QuadrupedConfig | None = None) -> ReferenceClip:
    return synthesize_speed_clip(piecewise(default_speed_segments()),
                                 duration, cfg)


def make_heading_clip(duration: float = 60.0,
                      cfg: QuadrupedConfig | None = None) -> ReferenceClip:
    return synthesize_heading_clip(default_heading_turns(), duration, cfg)


def make_pace_clip(duration: float = 60.0, speed: float = 1.0,
                   cfg: QuadrupedConfig | None = None) -> ReferenceClip:
    """Single-gait clip used by the imitation smoke training."""
    return synthesize_speed_clip(lambda t: speed, duration, cfg)
