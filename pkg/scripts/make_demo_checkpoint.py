#!/usr/bin/env python3
"""Assemble a standing demo checkpoint for `quadloco serve` and the viewer.

Zero-weight nets with the primitive bias pinned at the nominal pose: the
agent stands still and holds heading, which is enough to drive the live
protocol (commands echo, perturbations knock it around) without any
training. Not a substitute for the real pipeline.
"""

import argparse

import numpy as np

from quadloco.model import QuadrupedConfig, STATE_FEAT_DIM
from quadloco.nets import save_checkpoint
from quadloco.policy import build_gating, build_primitive
from quadloco.refmotion import nominal_pose
from quadloco.training.imitate import scales_to_net


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("out", help="checkpoint path to write")
    parser.add_argument("--k", type=int, default=8)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cfg = QuadrupedConfig()
    gating = build_gating(STATE_FEAT_DIM, 2, rng, k=args.k)
    gating.layers[-1].w[:] = 0.0
    primitive = build_primitive(STATE_FEAT_DIM, rng, k=args.k, action_dim=9)
    for layer in primitive.layers:
        layer.w[:] = 0.0
    primitive.layers[-1].b[:] = np.tile(
        np.concatenate([nominal_pose(cfg), [0.0]]), args.k)
    save_checkpoint(args.out,
                    {"stage": "demo", "seed": 0, "k": args.k,
                     "created_at": "demo"},
                    {"gating_high": gating, "primitive": primitive,
                     "obs_norm": scales_to_net(np.ones(STATE_FEAT_DIM))})
    print(f"wrote standing demo checkpoint to {args.out}")


if __name__ == "__main__":
    main()
