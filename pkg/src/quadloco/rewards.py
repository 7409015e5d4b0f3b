"""Scalar reward terms: imitation tracking and high-level command tracking.

All terms map to [0, 1], equal 1 on a perfect match, and are pure functions
of their inputs. Joint-orientation differences use the relative-rotation
angle; the center-of-mass term compares horizontal components only (height
tracking is already covered through the pose term).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import AgentState, heading_vector
from .physics import wrap_angle


@dataclass(frozen=True)
class RewardWeights:
    pose: float = 0.65
    velocity: float = 0.1
    com: float = 0.1
    contact: float = 0.15
    lambda_contact: float = 5.0
    lambda_speed: float = 0.8


DEFAULT_WEIGHTS = RewardWeights()


def r_pose(state: AgentState, ref: AgentState) -> float:
    if state.joint_pos.shape != ref.joint_pos.shape:
        raise ValueError("joint counts differ")
    diffs = np.array([wrap_angle(a - b)
                      for a, b in zip(ref.joint_pos, state.joint_pos)])
    return math.exp(-2.0 * float(np.sum(diffs * diffs)))


def r_vel(state: AgentState, ref: AgentState) -> float:
    d = ref.joint_vel - state.joint_vel
    return math.exp(-0.1 * float(np.sum(d * d)))


def r_com(state: AgentState, ref: AgentState) -> float:
    d = ref.com_pos[:2] - state.com_pos[:2]
    return math.exp(-10.0 * float(np.sum(d * d)))


def r_contact(state: AgentState, ref: AgentState,
              lambda_contact: float = DEFAULT_WEIGHTS.lambda_contact) -> float:
    mismatches = float(np.sum(np.asarray(ref.contacts, dtype=bool)
                              ^ np.asarray(state.contacts, dtype=bool)))
    return math.exp(-(lambda_contact / 4.0) * mismatches)


def r_imitation(state: AgentState, ref: AgentState,
                weights: RewardWeights = DEFAULT_WEIGHTS) -> float:
    return (weights.pose * r_pose(state, ref)
            + weights.velocity * r_vel(state, ref)
            + weights.com * r_com(state, ref)
            + weights.contact * r_contact(state, ref, weights.lambda_contact))


def r_speed(target_speed: float, com_vel,
            lambda_speed: float = DEFAULT_WEIGHTS.lambda_speed) -> float:
    v = float(np.linalg.norm(np.asarray(com_vel)[:2]))
    return math.exp(-lambda_speed * (target_speed - v) ** 2)


def r_heading(target_heading: float, com_vel) -> float:
    """Normalized cosine similarity to the target direction; 0.5 when still."""
    v = np.asarray(com_vel)[:2]
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return 0.5
    u = heading_vector(target_heading)
    return (float(np.dot(u, v)) / norm + 1.0) * 0.5
