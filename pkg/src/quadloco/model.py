"""Quadruped geometry, the agent-state layout, and feature extraction.

The agent is a planar torso plus four two-segment legs (9 links, 8 revolute
joints). Poses keep the 3-D layout conventions (positions/velocities as
3-vectors with z = 0, rotations as quaternions about the out-of-plane axis)
so state records read the same whether they come from the simulator or the
reference-motion generator.

Link order: torso, then upper/lower per leg in leg order LF, RF, LR, RR.
Joint order: hip, knee per leg in the same leg order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .physics import wrap_angle

LEG_NAMES = ("left_front", "right_front", "left_rear", "right_rear")
N_LINKS = 9
N_JOINTS = 8
ACTION_DIM = 9  # 8 PD targets + 1 yaw rate
STATE_FEAT_DIM = 82
REF_FEAT_DIM = STATE_FEAT_DIM + 3  # + torso position/orientation offsets
YAW_RATE_LIMIT = 2.0


@dataclass
class QuadrupedConfig:
    torso_half_core: float = 0.2   # capsule core half-length; 0.6 m overall with caps
    torso_radius: float = 0.1
    torso_mass: float = 20.0
    upper_len: float = 0.25
    lower_len: float = 0.25
    leg_radius: float = 0.02
    upper_mass: float = 1.0
    lower_mass: float = 0.5
    hip_x: float = 0.2             # hip pivots sit at the torso core ends
    hip_limit: float = 1.2
    knee_lo: float = -2.4
    knee_hi: float = -0.1
    kp: float = 400.0
    kd: float = 10.0
    max_torque: float = 150.0
    friction: float = 0.8
    standing_height: float = 0.42  # torso/hip center height when standing

    def leg_hip_x(self, leg: int) -> float:
        return self.hip_x if leg < 2 else -self.hip_x

    @property
    def foot_ground_y(self) -> float:
        # foot tip center height when the foot touches flat ground
        return self.leg_radius

    @property
    def total_mass(self) -> float:
        return self.torso_mass + 4 * (self.upper_mass + self.lower_mass)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "QuadrupedConfig":
        return cls(**d)


@dataclass
class AgentState:
    """Pose, motion, contact, and heading snapshot of the agent.

    Link positions and linear velocities are relative to the torso origin
    (axis-aligned); the center of mass is kept in world coordinates, with
    its first two components on the horizontal plane traced out by the
    heading yaw.
    """

    root_pos: np.ndarray      # (3,) world
    root_quat: np.ndarray     # (4,) wxyz, rotation about z
    root_linvel: np.ndarray   # (3,) world
    root_angvel: np.ndarray   # (3,)
    link_pos: np.ndarray      # (9, 3) relative to torso origin; row 0 is zero
    link_quat: np.ndarray     # (9, 4)
    link_linvel: np.ndarray   # (9, 3) relative to torso velocity
    link_angvel: np.ndarray   # (9, 3)
    joint_pos: np.ndarray     # (8,)
    joint_vel: np.ndarray     # (8,)
    contacts: np.ndarray      # (4,) 0/1 per leg
    heading: float            # yaw psi (rad)
    com_pos: np.ndarray       # (3,) horizontal-plane x, y, then height
    com_vel: np.ndarray       # (3,)

    def copy(self):
        return type(self)(**{
            k: (v.copy() if isinstance(v, np.ndarray) else v)
            for k, v in self.__dict__.items()
        })

    def to_record(self) -> dict:
        rec = {}
        for k, v in self.__dict__.items():
            rec[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "AgentState":
        kw = {}
        for k in cls.__dataclass_fields__:
            v = rec[k]
            kw[k] = float(v) if k == "heading" else np.asarray(v, dtype=np.float64)
        return cls(**kw)


def quat_about_z(angle: float) -> np.ndarray:
    h = 0.5 * angle
    return np.array([math.cos(h), 0.0, 0.0, math.sin(h)])


def angle_of_quat(q) -> float:
    return 2.0 * math.atan2(q[3], q[0])


def quat_angle_diff(qa, qb) -> float:
    """Rotation angle of qa * qb^-1 wrapped to [0, pi] (planar case)."""
    return abs(wrap_angle(angle_of_quat(qa) - angle_of_quat(qb)))


@dataclass
class Command:
    """High-level directive: target speed (m/s) and heading offset (rad)."""

    speed: float
    heading_delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.speed, self.heading_delta])


def heading_vector(psi: float) -> np.ndarray:
    """Unit heading direction in the horizontal plane."""
    return np.array([math.cos(psi), -math.sin(psi)])


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def state_features(s: AgentState) -> np.ndarray:
    """Flatten an AgentState into the 82-dim network input (unscaled)."""
    angles = np.array([angle_of_quat(q) for q in s.link_quat])
    return np.concatenate([
        s.link_pos[1:, :2].reshape(-1),      # 16
        s.link_linvel[1:, :2].reshape(-1),   # 16
        np.cos(angles), np.sin(angles),      # 18
        s.link_angvel[:, 2],                 # 9
        [s.root_pos[1]],                     # 1
        s.root_linvel[:2],                   # 2
        s.joint_pos,                         # 8
        s.joint_vel,                         # 8
        s.contacts,                          # 4
    ])


def ref_features(frame: AgentState, s: AgentState) -> np.ndarray:
    """Target-frame features: the frame itself plus its offset from the agent."""
    da = wrap_angle(angle_of_quat(frame.root_quat) - angle_of_quat(s.root_quat))
    delta = np.array([frame.root_pos[0] - s.root_pos[0],
                      frame.root_pos[1] - s.root_pos[1],
                      da])
    return np.concatenate([state_features(frame), delta])


FEATURE_SCALE_FLOOR = 0.05
FEATURE_CLIP = 10.0


def feature_scales(frames) -> np.ndarray:
    """Per-feature max-abs over a reference dataset, floored at 0.05.

    Computed once per run from the loaded clip and then fixed; nets consume
    features divided by these scales and clipped to +-10. The floor matters:
    dimensions the reference never excites (torso pitch rate, vertical root
    velocity) would otherwise amplify live noise by orders of magnitude.
    """
    feats = np.stack([state_features(f) for f in frames])
    scales = np.abs(feats).max(axis=0)
    return np.maximum(scales, FEATURE_SCALE_FLOOR)


def scale_state_features(feat: np.ndarray, scales: np.ndarray) -> np.ndarray:
    return np.clip(feat / scales, -FEATURE_CLIP, FEATURE_CLIP)


def scale_ref_features(feat: np.ndarray, scales: np.ndarray) -> np.ndarray:
    out = feat.copy()
    out[:STATE_FEAT_DIM] /= scales
    return np.clip(out, -FEATURE_CLIP, FEATURE_CLIP)
