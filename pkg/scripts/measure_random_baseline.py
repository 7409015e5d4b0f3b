#!/usr/bin/env python3
"""Measure the random-policy tracking baseline on a reference clip.

The imitation smoke threshold (random <= 0.2 mean per-step reward) is
enforced only after this pilot confirms it; run it whenever the model or
reward constants change.
"""

import argparse

import numpy as np

from quadloco import refmotion as rm
from quadloco.config import RunConfig
from quadloco.model import STATE_FEAT_DIM, feature_scales
from quadloco.policy import build_gating, build_primitive
from quadloco.training.rollout import evaluate_policy


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--episodes", type=int, default=20)
    parser.add_argument("--seeds", type=int, default=3)
    args = parser.parse_args()

    cfg = RunConfig().resolve()
    clip = rm.make_pace_clip(60.0, 1.0, cfg.model)
    path = "/tmp/baseline_pace.jsonl"
    rm.save_clip(clip, path)
    scales = feature_scales(clip.frames)
    control_dim = 2 * (STATE_FEAT_DIM + 3)
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        nets = {
            "gating_low": build_gating(STATE_FEAT_DIM, control_dim, rng,
                                       hidden=tuple(cfg.gating_hidden),
                                       k=cfg.k),
            "primitive": build_primitive(STATE_FEAT_DIM, rng,
                                         hidden=tuple(cfg.primitive_hidden),
                                         k=cfg.k, action_dim=9),
        }
        r = evaluate_policy(nets, "imitate", path, cfg.model, cfg.episode,
                            scales, args.episodes, seed=seed)
        print(f"seed {seed}: random-policy mean per-step reward {r:.4f}")


if __name__ == "__main__":
    main()
