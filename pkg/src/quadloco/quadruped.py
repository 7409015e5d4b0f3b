"""The simulated agent: model construction, observation, action, episodes.

The quadruped runs in the sagittal plane; heading is a kinematic yaw degree
of freedom driven by the policy's yaw-rate channel and layered over the
planar simulation. Yaw never feeds torques: it only rotates the horizontal
path traced by the center of mass (and therefore the heading reward). This
is the artifact's largest deliberate simplification, and everything
downstream (command features, heading metrics) is built on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ACTION_DIM,
    AgentState,
    N_JOINTS,
    QuadrupedConfig,
    YAW_RATE_LIMIT,
    quat_about_z,
)
from .physics import Capsule, GROUND_ID, RevoluteJoint, World, wrap_angle
from .refmotion import nominal_pose

AGENT_GROUP = 1


@dataclass
class EpisodeConfig:
    max_steps: int = 300          # control steps; 10 s at 30 Hz
    height_fraction: float = 0.6  # terminate below this torso-height fraction
    pitch_limit: float = 1.0      # rad
    control_hz: int = 30
    substeps: int = 40

    def __post_init__(self):
        if self.control_hz * self.substeps != 1200:
            raise ValueError("control rate x substeps must equal 1200 Hz")


class EpisodeAborted(RuntimeError):
    pass


class QuadrupedEnv:
    def __init__(self, cfg: QuadrupedConfig | None = None,
                 episode: EpisodeConfig | None = None,
                 ground_friction: float = 0.8):
        self.cfg = cfg or QuadrupedConfig()
        self.episode = episode or EpisodeConfig()
        self.base_ground_friction = ground_friction
        self.nominal = nominal_pose(self.cfg)
        self._template = self._build_world()
        self.world = self._template.clone()
        self.agent_body_count = len(self.world.bodies)
        self.yaw = 0.0
        self.com_h = np.zeros(2)
        self._prev_com_x = self._sagittal_com()[0]
        self._last_contacts = np.ones(4)
        self.tick = 0

    # -- construction --------------------------------------------------------

    def _build_world(self) -> World:
        cfg = self.cfg
        w = World(ground_friction=self.base_ground_friction)
        h = cfg.standing_height
        torso_shape = Capsule(-cfg.torso_half_core, 0.0, cfg.torso_half_core,
                              0.0, cfg.torso_radius)
        self.torso = w.add_body(torso_shape, cfg.torso_mass, x=0.0, y=h,
                                friction=cfg.friction, group=AGENT_GROUP)
        self.link_ids = [self.torso]
        self.joint_ids = []
        self.foot_links = []
        half_up = cfg.upper_len / 2.0
        half_lo = cfg.lower_len / 2.0
        hip_a, knee_a = self.nominal[0], self.nominal[1]
        for leg in range(4):
            hx = cfg.leg_hip_x(leg)
            a1, a2 = hip_a, hip_a + knee_a
            hip_pt = (hx, h)
            up_c = (hip_pt[0] + half_up * math.sin(a1),
                    hip_pt[1] - half_up * math.cos(a1))
            knee_pt = (hip_pt[0] + cfg.upper_len * math.sin(a1),
                       hip_pt[1] - cfg.upper_len * math.cos(a1))
            lo_c = (knee_pt[0] + half_lo * math.sin(a2),
                    knee_pt[1] - half_lo * math.cos(a2))
            up = w.add_body(Capsule(0.0, half_up, 0.0, -half_up, cfg.leg_radius),
                            cfg.upper_mass, x=up_c[0], y=up_c[1], angle=a1,
                            friction=cfg.friction, group=AGENT_GROUP)
            lo = w.add_body(Capsule(0.0, half_lo, 0.0, -half_lo, cfg.leg_radius),
                            cfg.lower_mass, x=lo_c[0], y=lo_c[1], angle=a2,
                            friction=cfg.friction, group=AGENT_GROUP)
            self.joint_ids.append(w.add_joint(RevoluteJoint(
                self.torso, up, (hx, 0.0), (0.0, half_up),
                lo=-cfg.hip_limit, hi=cfg.hip_limit,
                kp=cfg.kp, kd=cfg.kd, max_torque=cfg.max_torque)))
            self.joint_ids.append(w.add_joint(RevoluteJoint(
                up, lo, (0.0, -half_up), (0.0, half_lo),
                lo=cfg.knee_lo, hi=cfg.knee_hi,
                kp=cfg.kp, kd=cfg.kd, max_torque=cfg.max_torque)))
            self.link_ids += [up, lo]
            self.foot_links.append(lo)
        self._masses = np.array([w.bodies[i].mass for i in self.link_ids])
        return w

    # -- state ----------------------------------------------------------------

    def _sagittal_com(self) -> tuple[float, float, float, float]:
        """Mass-weighted COM position and velocity in the sagittal plane."""
        m = self._masses
        xs = ys = vxs = vys = 0.0
        for mass, i in zip(m, self.link_ids):
            b = self.world.bodies[i]
            xs += mass * b.x
            ys += mass * b.y
            vxs += mass * b.vx
            vys += mass * b.vy
        tot = m.sum()
        return xs / tot, ys / tot, vxs / tot, vys / tot

    def observe(self) -> AgentState:
        w = self.world
        root = w.bodies[self.torso]
        n = len(self.link_ids)
        link_pos = np.zeros((n, 3))
        link_quat = np.zeros((n, 4))
        link_linvel = np.zeros((n, 3))
        link_angvel = np.zeros((n, 3))
        for row, i in enumerate(self.link_ids):
            b = w.bodies[i]
            link_pos[row, 0] = b.x - root.x
            link_pos[row, 1] = b.y - root.y
            link_quat[row] = quat_about_z(b.angle)
            link_linvel[row, 0] = b.vx - root.vx
            link_linvel[row, 1] = b.vy - root.vy
            link_angvel[row, 2] = b.w
        joint_pos = np.array([w.joint_angle(w.joints[j]) for j in self.joint_ids])
        joint_vel = np.array([w.joint_velocity(w.joints[j]) for j in self.joint_ids])
        cx, cy, cvx, cvy = self._sagittal_com()
        cpsi, spsi = math.cos(self.yaw), math.sin(self.yaw)
        return AgentState(
            root_pos=np.array([root.x, root.y, 0.0]),
            root_quat=quat_about_z(root.angle),
            root_linvel=np.array([root.vx, root.vy, 0.0]),
            root_angvel=np.array([0.0, 0.0, root.w]),
            link_pos=link_pos,
            link_quat=link_quat,
            link_linvel=link_linvel,
            link_angvel=link_angvel,
            joint_pos=joint_pos,
            joint_vel=joint_vel,
            contacts=self._last_contacts.copy(),
            heading=self.yaw,
            com_pos=np.array([self.com_h[0], self.com_h[1], cy]),
            com_vel=np.array([cvx * cpsi, -cvx * spsi, cvy]),
        )

    def _refresh_contacts(self) -> None:
        touching = {c.body for c in self.world.contacts if c.other == GROUND_ID}
        self._last_contacts = np.array(
            [1.0 if f in touching else 0.0 for f in self.foot_links])

    def nonfoot_ground_contact(self) -> bool:
        foot = set(self.foot_links)
        for c in self.world.contacts:
            if c.other == GROUND_ID and c.body < self.agent_body_count \
                    and c.body not in foot:
                return True
        return False

    # -- episode lifecycle -----------------------------------------------------

    def reset_from_reference(self, frame) -> AgentState:
        """Reference-state initialization: place the agent on a clip frame."""
        if frame.joint_pos.shape[0] != N_JOINTS:
            raise ValueError(
                f"frame has {frame.joint_pos.shape[0]} joints, expected {N_JOINTS}")
        self.world = self._template.clone()
        w = self.world
        rx, ry = frame.root_pos[0], frame.root_pos[1]
        rvx, rvy = frame.root_linvel[0], frame.root_linvel[1]
        for row, i in enumerate(self.link_ids):
            b = w.bodies[i]
            b.x = rx + frame.link_pos[row, 0]
            b.y = ry + frame.link_pos[row, 1]
            b.angle = 2.0 * math.atan2(frame.link_quat[row][3],
                                       frame.link_quat[row][0])
            b.vx = rvx + frame.link_linvel[row, 0]
            b.vy = rvy + frame.link_linvel[row, 1]
            b.w = frame.link_angvel[row, 2]
        self.yaw = float(frame.heading)
        self.com_h = np.array(frame.com_pos[:2], dtype=np.float64)
        self._prev_com_x = self._sagittal_com()[0]
        self._last_contacts = np.array(frame.contacts, dtype=np.float64)
        self.tick = 0
        return self.observe()

    def reset_standing(self) -> AgentState:
        self.world = self._template.clone()
        self.yaw = 0.0
        self.com_h = np.zeros(2)
        self._prev_com_x = self._sagittal_com()[0]
        self._last_contacts = np.ones(4)
        self.tick = 0
        return self.observe()

    def apply_action(self, action) -> None:
        """Latch PD targets for one control tick (40 substeps at 1200 Hz).

        The yaw channel integrates kinematically and exactly; it never
        produces torques.
        """
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (ACTION_DIM,):
            raise EpisodeAborted(f"action shape {action.shape} != ({ACTION_DIM},)")
        if not np.isfinite(action).all():
            raise EpisodeAborted("non-finite action")
        cfg = self.cfg
        targets = action[:N_JOINTS].copy()
        targets[0::2] = np.clip(targets[0::2], -cfg.hip_limit, cfg.hip_limit)
        targets[1::2] = np.clip(targets[1::2], cfg.knee_lo, cfg.knee_hi)
        yaw_rate = float(np.clip(action[8], -YAW_RATE_LIMIT, YAW_RATE_LIMIT))
        w = self.world
        target_list = targets.tolist()
        for _ in range(self.episode.substeps):
            w.step(w.pd_torques(target_list))
        self._refresh_contacts()
        self.yaw += yaw_rate / self.episode.control_hz
        com_x = self._sagittal_com()[0]
        dx = com_x - self._prev_com_x
        self._prev_com_x = com_x
        self.com_h += dx * np.array([math.cos(self.yaw), -math.sin(self.yaw)])
        self.tick += 1

    def step(self, action) -> tuple[AgentState, bool]:
        self.apply_action(action)
        state = self.observe()
        return state, self.check_termination(state)

    def check_termination(self, state: AgentState) -> bool:
        """Early termination: fallen torso, extreme pitch, non-foot contact."""
        cfg = self.cfg
        if state.root_pos[1] < self.episode.height_fraction * cfg.standing_height:
            return True
        pitch = 2.0 * math.atan2(state.root_quat[3], state.root_quat[0])
        if abs(wrap_angle(pitch)) > self.episode.pitch_limit:
            return True
        return bool(self._nonfoot_clearance(state) <= 0.0)

    def _nonfoot_clearance(self, state: AgentState) -> float:
        """Ground clearance of every intended-airborne surface point."""
        cfg = self.cfg
        ground = self.world.ground_y
        rx, ry = state.root_pos[0], state.root_pos[1]
        worst = math.inf
        # torso capsule endpoints
        ca, sa = math.cos(2 * math.atan2(state.root_quat[3], state.root_quat[0])), \
            math.sin(2 * math.atan2(state.root_quat[3], state.root_quat[0]))
        for ex in (-cfg.torso_half_core, cfg.torso_half_core):
            y = ry + sa * ex
            worst = min(worst, y - cfg.torso_radius - ground)
        for leg in range(4):
            up_row = 1 + 2 * leg
            lo_row = 2 + 2 * leg
            for row, half in ((up_row, cfg.upper_len / 2.0),
                              (lo_row, cfg.lower_len / 2.0)):
                y = ry + state.link_pos[row, 1]
                ang = 2.0 * math.atan2(state.link_quat[row][3],
                                       state.link_quat[row][0])
                top_y = y + half * math.cos(ang)
                worst = min(worst, top_y - cfg.leg_radius - ground)
                if row == up_row:
                    bot_y = y - half * math.cos(ang)
                    worst = min(worst, bot_y - cfg.leg_radius - ground)
        return worst

    # -- perturbations ----------------------------------------------------------

    def perturb(self, kind: str, rng: np.random.Generator) -> None:
        if kind == "slippery":
            self.world.set_ground_friction(0.1 * self.base_ground_friction)
            return
        if kind != "box_throw":
            raise ValueError(f"unknown perturbation kind {kind!r}")
        size = rng.uniform(0.1, 0.3)
        density = rng.uniform(50.0, 300.0)
        speed = rng.uniform(2.0, 6.0)
        side = 1.0 if rng.random() < 0.5 else -1.0
        rise = rng.uniform(0.0, 0.4)
        torso = self.world.bodies[self.torso]
        px = torso.x + side * 1.5
        py = torso.y + rise
        dx, dy = torso.x - px, torso.y - py
        norm = math.hypot(dx, dy)
        vel = (speed * dx / norm, speed * dy / norm)
        self.world.spawn_box(size, density, (px, py), vel,
                             friction=self.cfg.friction, group=0)
