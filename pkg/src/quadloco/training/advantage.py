"""Generalized advantage estimation and lambda-return value targets.

Episodes bootstrap with 0 at termination and with V(s_T) at truncation.
Advantages are normalized once per iteration batch, not per episode.
"""

from __future__ import annotations

import numpy as np


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float,
        terminal: bool, bootstrap_value: float = 0.0) -> np.ndarray:
    """A_t = sum_l (gamma*lam)^l * delta_{t+l} over one episode."""
    n = len(rewards)
    adv = np.zeros(n)
    next_value = 0.0 if terminal else float(bootstrap_value)
    running = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv


def td_lambda_targets(rewards: np.ndarray, values: np.ndarray, gamma: float,
                      lam: float, terminal: bool,
                      bootstrap_value: float = 0.0) -> np.ndarray:
    """Lambda-returns G_t = r_t + gamma*[(1-lam)*V(s_{t+1}) + lam*G_{t+1}]."""
    n = len(rewards)
    targets = np.zeros(n)
    next_value = 0.0 if terminal else float(bootstrap_value)
    next_return = next_value
    for t in range(n - 1, -1, -1):
        targets[t] = rewards[t] + gamma * (
            (1.0 - lam) * next_value + lam * next_return)
        next_return = targets[t]
        next_value = values[t]
    return targets


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + eps)


def discounted_returns(rewards: np.ndarray, gamma: float, terminal: bool,
                       bootstrap_value: float = 0.0) -> np.ndarray:
    """Plain discounted-sum oracle (test reference for the lam=1 case)."""
    n = len(rewards)
    out = np.zeros(n)
    acc = 0.0 if terminal else float(bootstrap_value)
    for t in range(n - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out
