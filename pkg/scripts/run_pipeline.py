#!/usr/bin/env python3
"""End-to-end desk pipeline: data -> imitation -> adapter -> fine-tune -> eval.

Defaults are sized to finish overnight on one core; pass --quick for a
shrunk functional pass (minutes, not a trained artifact). Every stage goes
through the same library entry points the CLI uses.
"""

import argparse
import json
import os
import time

from quadloco import refmotion as rm
from quadloco.adapter import train_adapter
from quadloco.config import RunConfig, write_resolved
from quadloco.nets import load_checkpoint, save_checkpoint
from quadloco.training.finetune import finetune_high_level
from quadloco.training.imitate import checkpoint_meta, net_to_scales, train_imitation
from quadloco.training.rollout import collect_adapter_dataset


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/pipeline")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true",
                        help="tiny budgets; checks plumbing, not quality")
    parser.add_argument("--objective", default="speed",
                        choices=["speed", "heading"])
    args = parser.parse_args()

    cfg = RunConfig(seed=args.seed).resolve()
    os.makedirs(args.out, exist_ok=True)
    write_resolved(cfg, args.out)
    t0 = time.time()

    clip_path = os.path.join(args.out, f"{args.objective}.jsonl")
    clip = (rm.make_pace_clip(60.0, 1.0, cfg.model)
            if args.objective == "speed"
            else rm.make_heading_clip(60.0, cfg.model))
    rm.save_clip(clip, clip_path)
    print(f"[pipeline] clip: {len(clip)} frames -> {clip_path}")

    stage = cfg.imitation
    stage.workers = cfg.workers
    if args.quick:
        stage.iterations = 3
        stage.steps_per_iter = 512
        stage.eval_every = 3
        stage.eval_episodes = 2
    else:
        stage.stop_at_reward = 0.5
    imit = train_imitation(
        clip_path, args.out, objective=args.objective, stage=stage,
        model_cfg=cfg.model, episode=cfg.episode, k=cfg.k, seed=cfg.seed,
        ground_friction=cfg.ground_friction,
        log_fn=lambda row: print(f"[imitate] {json.dumps(row)}"))
    print(f"[pipeline] imitation best eval {imit['best_eval_reward']:.3f}")

    _, nets = load_checkpoint(imit["best"])
    scales = net_to_scales(nets["obs_norm"])
    n_tuples = 5_000 if args.quick else cfg.adapter_samples
    dataset = collect_adapter_dataset(
        nets, clip_path, cfg.model, cfg.episode, scales, n_tuples,
        seed=cfg.seed, workers=cfg.workers,
        ground_friction=cfg.ground_friction)
    ds_path = os.path.join(args.out, "adapter_data.jsonl")
    dataset.save(ds_path)
    print(f"[pipeline] adapter dataset: {len(dataset)} tuples")

    gan_cfg = cfg.adapter
    if args.quick:
        gan_cfg.epochs = 3
    gen, _, gan_report = train_adapter(dataset, gan_cfg, seed=cfg.seed)
    adapter_ck = os.path.join(args.out, f"adapter_{args.objective}.json")
    save_checkpoint(adapter_ck,
                    checkpoint_meta("adapter", cfg.seed, cfg.k,
                                    gan_cfg.epochs),
                    {"gating_high": gen, "primitive": nets["primitive"],
                     "obs_norm": nets["obs_norm"]})
    print(f"[pipeline] adapter: heldout L1 {gan_report.heldout_l1:.4f}, "
          f"D accuracy {gan_report.d_accuracy:.3f}, "
          f"overlap {gan_report.pca_overlap:.3f}")

    ft_stage = cfg.finetune
    ft_stage.workers = cfg.workers
    if args.quick:
        ft_stage.iterations = 2
        ft_stage.steps_per_iter = 512
        ft_stage.eval_every = 2
        ft_stage.eval_episodes = 2
    tuned = finetune_high_level(
        imit["best"], adapter_ck, args.objective, clip_path, args.out,
        stage=ft_stage, schedule=cfg.schedule, model_cfg=cfg.model,
        episode=cfg.episode, seed=cfg.seed,
        ground_friction=cfg.ground_friction,
        log_fn=lambda row: print(f"[finetune] {json.dumps(row)}"))
    print(f"[pipeline] finetune best eval {tuned['best_eval_reward']:.3f}")
    print(f"[pipeline] done in {(time.time() - t0) / 60:.1f} min; "
          f"serve with: quadloco serve --checkpoint {tuned['best']}")


if __name__ == "__main__":
    main()
