"""Fine-tuning stage: command-following PPO with frozen primitives.

Only the high-level gating net (and its value function) move; the
primitive parameters must be byte-identical before and after, and any
delta is a hard failure. When the gating net comes from the adversarial
adapter it also serves as the anchor of the parameter-space L1 regularizer
(weight 0.001 on top of the clip surrogate).
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

from ..model import QuadrupedConfig, STATE_FEAT_DIM
from ..nets import AdamState, load_checkpoint, nets_equal, save_checkpoint
from ..policy import CompositePolicy, build_gating, build_value
from ..quadruped import EpisodeConfig
from ..training.imitate import (
    StageConfig,
    checkpoint_meta,
    net_to_scales,
    prepare_batch,
)
from ..training.ppo import PPOUpdateConfig, l_reg, ppo_update
from ..training.rollout import CommandSchedule, collect_rollouts, evaluate_policy


class FrozenPrimitiveViolation(RuntimeError):
    pass


def finetune_high_level(imitation_ckpt: str, adapter_ckpt: str | None,
                        objective: str, clip_path: str, out_dir: str,
                        stage: StageConfig | None = None,
                        schedule: CommandSchedule | None = None,
                        model_cfg: QuadrupedConfig | None = None,
                        episode: EpisodeConfig | None = None,
                        seed: int = 0, ground_friction: float = 0.8,
                        log_fn=None) -> dict:
    """PPO over command-schedule rollouts, gating and value nets only.

    adapter_ckpt=None is the no-adapter ablation path: the high-level
    gating starts fresh and no regularization anchor exists.
    """
    if objective not in ("speed", "heading"):
        raise ValueError("objective must be 'speed' or 'heading'")
    stage = stage or StageConfig(gamma=0.99, reg_weight=0.001)
    schedule = schedule or CommandSchedule()
    model_cfg = model_cfg or QuadrupedConfig()
    episode = episode or EpisodeConfig()
    os.makedirs(out_dir, exist_ok=True)

    meta, base_nets = load_checkpoint(imitation_ckpt)
    primitive = base_nets["primitive"]
    primitive_before = primitive.copy()
    obs_norm = base_nets["obs_norm"]
    scales = net_to_scales(obs_norm)
    k = primitive.output_dim // 9
    rng = np.random.default_rng(seed + 17)
    if adapter_ckpt is not None:
        _, adapter_nets = load_checkpoint(adapter_ckpt)
        gating_high = adapter_nets["gating_high"]
        anchor = gating_high.copy()
    else:
        gating_high = build_gating(STATE_FEAT_DIM, 2, rng, k=k)
        anchor = None
    value_name = f"value_{objective}"
    value_net = build_value(STATE_FEAT_DIM + 2, rng)

    nets = {"gating_high": gating_high, "primitive": primitive,
            value_name: value_net, "obs_norm": obs_norm}
    if anchor is not None and l_reg(gating_high, anchor) != 0.0:
        raise RuntimeError("regularizer must be exactly zero at initialization")

    policy = CompositePolicy(gating_high, primitive, k=k, action_dim=9)
    opt_g = AdamState.for_net(gating_high, stage.policy_lr)
    opt_v = AdamState.for_net(value_net, stage.value_lr)
    update_cfg = PPOUpdateConfig(clip_eps=stage.clip_eps, epochs=stage.epochs,
                                 minibatch=stage.minibatch,
                                 reg_weight=stage.reg_weight)
    update_rng = np.random.default_rng(seed + 424_243)

    metrics_path = os.path.join(out_dir, f"finetune_{objective}_metrics.jsonl")
    final_path = os.path.join(out_dir, f"finetune_{objective}.json")
    best_path = os.path.join(out_dir, f"finetune_{objective}_best.json")
    init_path = os.path.join(out_dir, f"finetune_{objective}_init.json")
    save_checkpoint(init_path, checkpoint_meta("finetune", seed, k, 0), nets)
    best_reward = -np.inf
    t_start = time.time()
    with open(metrics_path, "w") as log:
        for it in range(stage.iterations):
            trajs = collect_rollouts(
                nets, "highlevel", clip_path, model_cfg, episode, scales,
                stage.steps_per_iter, seed, stage.workers, it,
                objective=objective, schedule=schedule,
                ground_friction=ground_friction)
            if not trajs:
                raise RuntimeError("no rollouts collected")
            batch = prepare_batch(trajs, value_net, stage.gamma, stage.lam,
                                   policy)
            stats = ppo_update(policy, value_net, batch, update_cfg, opt_g,
                               None, opt_v, update_rng, reg_anchor=anchor)
            if not nets_equal(primitive, primitive_before):
                raise FrozenPrimitiveViolation(
                    "primitive parameters changed during fine-tuning")
            mean_r = float(np.mean(np.concatenate(
                [t.rewards for t in trajs])))
            row = {
                "iteration": it,
                "mean_reward": mean_r,
                "episodes": len(trajs),
                "surrogate": stats["surrogate"],
                "value_loss": stats["value_loss"],
                "l_reg": stats["l_reg"],
                "wall_time_s": time.time() - t_start,
            }
            do_eval = ((it + 1) % stage.eval_every == 0
                       or it == stage.iterations - 1)
            if do_eval:
                eval_r = evaluate_policy(
                    nets, "highlevel", clip_path, model_cfg, episode, scales,
                    stage.eval_episodes, seed, objective=objective,
                    ground_friction=ground_friction, workers=stage.workers)
                row["eval_reward"] = eval_r
                if eval_r > best_reward:
                    best_reward = eval_r
                    save_checkpoint(
                        best_path, checkpoint_meta("finetune", seed, k, it),
                        nets)
            log.write(json.dumps(row) + "\n")
            log.flush()
            if log_fn:
                log_fn(row)
            if (stage.stop_at_reward is not None
                    and best_reward >= stage.stop_at_reward):
                break
    if not nets_equal(primitive, primitive_before):
        raise FrozenPrimitiveViolation(
            "primitive parameters changed during fine-tuning")
    save_checkpoint(final_path, checkpoint_meta("finetune", seed, k,
                                                stage.iterations), nets)
    if best_reward == -np.inf:
        save_checkpoint(best_path, checkpoint_meta("finetune", seed, k, 0),
                        nets)
    return {"final": final_path, "best": best_path, "init": init_path,
            "metrics": metrics_path, "best_eval_reward": float(best_reward)}
