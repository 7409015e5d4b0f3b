"""Imitation stage: PPO against the tracking reward on one reference clip.

One policy per control objective; the checkpoint carries the low-level
gating, the primitives, the objective's value net, and the observation
normalizer (stored as a diagonal linear net so checkpoints stay
self-contained).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from ..model import STATE_FEAT_DIM, feature_scales
from ..nets import AdamState, DenseNet, Layer, save_checkpoint
from ..policy import CompositePolicy, build_gating, build_primitive, build_value
from ..quadruped import EpisodeConfig
from ..model import QuadrupedConfig
from ..refmotion import load_clip, nominal_pose
from ..training.advantage import gae, normalize_advantages, td_lambda_targets
from ..training.ppo import Batch, PPOUpdateConfig, ppo_update
from ..training.rollout import collect_rollouts, evaluate_policy


@dataclass
class StageConfig:
    gamma: float = 0.95
    lam: float = 0.95
    clip_eps: float = 0.2
    policy_lr: float = 1.5e-4
    value_lr: float = 1e-3
    epochs: int = 4
    minibatch: int = 256
    steps_per_iter: int = 4096
    iterations: int = 120
    workers: int = 8
    eval_every: int = 10
    eval_episodes: int = 20
    reg_weight: float = 0.0
    stop_at_reward: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def scales_to_net(scales: np.ndarray) -> DenseNet:
    """Observation normalizer as a frozen diagonal linear layer."""
    return DenseNet([Layer(np.diag(1.0 / scales), np.zeros(len(scales)),
                           "linear")])


def net_to_scales(net: DenseNet) -> np.ndarray:
    return 1.0 / np.diag(net.layers[0].w)


def prepare_batch(trajs, value_net: DenseNet, gamma: float, lam: float,
                  policy: CompositePolicy | None = None) -> Batch:
    """Values, GAE advantages, and lambda-return targets for one iteration.

    When the policy is given, old log-probs are recomputed through the same
    batched path the updater uses; the worker-side values can differ in the
    last bits (different BLAS reduction shapes), and the first-minibatch
    ratio must be exactly one.
    """
    advs, targets = [], []
    for traj in trajs:
        values = value_net.forward(traj.xg)[0][:, 0]
        boot = 0.0 if traj.terminal else float(
            value_net.forward(traj.last_xg)[0][0])
        advs.append(gae(traj.rewards, values, gamma, lam, traj.terminal, boot))
        targets.append(td_lambda_targets(traj.rewards, values, gamma, lam,
                                         traj.terminal, boot))
    xg = np.concatenate([t.xg for t in trajs])
    xp = np.concatenate([t.xp for t in trajs])
    actions = np.concatenate([t.actions for t in trajs])
    if policy is not None:
        old_logp, _ = policy.logp_batch(xg, xp, actions)
    else:
        old_logp = np.concatenate([t.logp for t in trajs])
    return Batch(
        xg=xg,
        xp=xp,
        actions=actions,
        old_logp=old_logp,
        advantages=normalize_advantages(np.concatenate(advs)),
        value_targets=np.concatenate(targets),
        xv=xg,
    )


def checkpoint_meta(stage: str, seed: int, k: int, iteration: int) -> dict:
    # created_at is a logical stamp: checkpoints must be bitwise
    # reproducible for a fixed seed, so no wall time in the file.
    return {"stage": stage, "seed": seed, "k": k,
            "created_at": f"iter-{iteration:04d}"}


def train_imitation(clip_path: str, out_dir: str, objective: str = "speed",
                    stage: StageConfig | None = None,
                    model_cfg: QuadrupedConfig | None = None,
                    episode: EpisodeConfig | None = None,
                    policy_hidden=(128, 128), primitive_hidden=(256, 256),
                    value_hidden=(128, 128), k: int = 8, seed: int = 0,
                    ground_friction: float = 0.8,
                    log_fn=None) -> dict:
    """Iterate collect -> GAE -> PPO on the tracking reward.

    Returns paths of the final and best-eval checkpoints plus the metrics
    log. The best checkpoint is the one with the highest deterministic
    evaluation reward seen so far (nondecreasing by construction).
    """
    stage = stage or StageConfig()
    model_cfg = model_cfg or QuadrupedConfig()
    episode = episode or EpisodeConfig()
    os.makedirs(out_dir, exist_ok=True)
    clip = load_clip(clip_path)
    scales = feature_scales(clip.frames)
    control_dim = 2 * (STATE_FEAT_DIM + 3)
    rng = np.random.default_rng(seed)
    primitive = build_primitive(STATE_FEAT_DIM, rng, hidden=primitive_hidden,
                                k=k, action_dim=9)
    # start every primitive mean at the nominal standing action: a zero
    # bias would pin the PD targets at the joint-limit clamp and the agent
    # never survives long enough to learn
    nominal_action = np.concatenate([nominal_pose(model_cfg), [0.0]])
    primitive.layers[-1].b[:] = np.tile(nominal_action, k)
    nets = {
        "gating_low": build_gating(STATE_FEAT_DIM, control_dim, rng,
                                   hidden=policy_hidden, k=k),
        "primitive": primitive,
        f"value_{objective}": build_value(STATE_FEAT_DIM + control_dim, rng,
                                          hidden=value_hidden),
        "obs_norm": scales_to_net(scales),
    }
    value_net = nets[f"value_{objective}"]
    policy = CompositePolicy(nets["gating_low"], nets["primitive"], k=k,
                             action_dim=9)
    opt_g = AdamState.for_net(policy.gating, stage.policy_lr)
    opt_p = AdamState.for_net(policy.primitive, stage.policy_lr)
    opt_v = AdamState.for_net(value_net, stage.value_lr)
    update_cfg = PPOUpdateConfig(clip_eps=stage.clip_eps, epochs=stage.epochs,
                                 minibatch=stage.minibatch)
    update_rng = np.random.default_rng(seed + 999_331)

    metrics_path = os.path.join(out_dir, f"imitate_{objective}_metrics.jsonl")
    final_path = os.path.join(out_dir, f"imitate_{objective}.json")
    best_path = os.path.join(out_dir, f"imitate_{objective}_best.json")
    best_reward = -np.inf
    t_start = time.time()
    with open(metrics_path, "w") as log:
        for it in range(stage.iterations):
            trajs = collect_rollouts(
                nets, "imitate", clip_path, model_cfg, episode, scales,
                stage.steps_per_iter, seed, stage.workers, it,
                ground_friction=ground_friction)
            if not trajs:
                raise RuntimeError("no rollouts collected")
            batch = prepare_batch(trajs, value_net, stage.gamma, stage.lam,
                                   policy)
            stats = ppo_update(policy, value_net, batch, update_cfg, opt_g,
                               opt_p, opt_v, update_rng)
            mean_r = float(np.mean(np.concatenate(
                [t.rewards for t in trajs])))
            row = {
                "iteration": it,
                "mean_reward": mean_r,
                "episodes": len(trajs),
                "steps": int(sum(len(t) for t in trajs)),
                "surrogate": stats["surrogate"],
                "value_loss": stats["value_loss"],
                "ratio_mean": stats["ratio_mean"],
                "wall_time_s": time.time() - t_start,
            }
            do_eval = ((it + 1) % stage.eval_every == 0
                       or it == stage.iterations - 1)
            if do_eval:
                eval_r = evaluate_policy(
                    nets, "imitate", clip_path, model_cfg, episode, scales,
                    stage.eval_episodes, seed,
                    ground_friction=ground_friction, workers=stage.workers)
                row["eval_reward"] = eval_r
                if eval_r > best_reward:
                    best_reward = eval_r
                    save_checkpoint(best_path,
                                    checkpoint_meta("imitation", seed, k, it),
                                    nets)
            log.write(json.dumps(row) + "\n")
            log.flush()
            if log_fn:
                log_fn(row)
            if (stage.stop_at_reward is not None
                    and best_reward >= stage.stop_at_reward):
                break
    save_checkpoint(final_path, checkpoint_meta("imitation", seed, k,
                                                stage.iterations), nets)
    if best_reward == -np.inf:
        save_checkpoint(best_path, checkpoint_meta("imitation", seed, k, 0),
                        nets)
    return {"final": final_path, "best": best_path, "metrics": metrics_path,
            "best_eval_reward": float(best_reward)}
