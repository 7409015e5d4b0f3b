"""Command-line entry points for the full pipeline.

Subcommands follow the training order: gen-data, train-imitate,
collect-adapter-data, train-adapter, finetune, evaluate, navigate, serve,
verify. Configuration comes from one JSON file (--config) with individual
flags overriding it; every run writes the resolved configuration next to
its outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import nav
from . import refmotion as rm
from .config import RunConfig, apply_env_overrides, write_resolved
from .evalsuite import (
    config_hash,
    emit_report,
    end_effector_iou,
    heading_deviation,
    pca_project,
    reference_arc,
    speed_mse,
)
from .nets import load_checkpoint
from .verify import fast_suites


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) \
        else RunConfig()
    apply_env_overrides(cfg)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = args.out or os.path.join(cfg.data_dir, f"{args.kind}.jsonl")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    duration = args.duration or cfg.clip_seconds
    if args.kind == "speed":
        clip = rm.make_speed_clip(duration, cfg.model)
    elif args.kind == "heading":
        clip = rm.make_heading_clip(duration, cfg.model)
    elif args.kind == "pace":
        clip = rm.make_pace_clip(duration, args.speed, cfg.model)
    else:
        print(f"unknown clip kind {args.kind!r}", file=sys.stderr)
        return 2
    rm.save_clip(clip, out)
    write_resolved(cfg, os.path.dirname(out) or ".")
    print(f"wrote {len(clip)} frames to {out}")
    return 0


def cmd_train_imitate(args) -> int:
    from .training.imitate import train_imitation

    cfg = _load_config(args)
    resolved = cfg.resolve()
    stage = resolved.imitation
    stage.workers = resolved.workers
    if args.iterations is not None:
        stage.iterations = args.iterations
    if args.stop_at_reward is not None:
        stage.stop_at_reward = args.stop_at_reward
    out_dir = args.out or resolved.checkpoint_dir
    os.makedirs(out_dir, exist_ok=True)
    write_resolved(cfg, out_dir)
    result = train_imitation(
        args.clip, out_dir, objective=args.objective, stage=stage,
        model_cfg=resolved.model, episode=resolved.episode,
        policy_hidden=tuple(resolved.gating_hidden),
        primitive_hidden=tuple(resolved.primitive_hidden),
        value_hidden=tuple(resolved.value_hidden), k=resolved.k,
        seed=resolved.seed, ground_friction=resolved.ground_friction,
        log_fn=lambda row: print(json.dumps(row)))
    print(json.dumps({"checkpoints": result}))
    return 0


def cmd_collect_adapter_data(args) -> int:
    from .training.imitate import net_to_scales
    from .training.rollout import collect_adapter_dataset

    cfg = _load_config(args)
    resolved = cfg.resolve()
    _, nets = load_checkpoint(args.checkpoint)
    scales = net_to_scales(nets["obs_norm"])
    count = args.count or resolved.adapter_samples
    dataset = collect_adapter_dataset(
        nets, args.clip, resolved.model, resolved.episode, scales, count,
        resolved.seed, workers=resolved.workers,
        ground_friction=resolved.ground_friction)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    dataset.save(args.out)
    write_resolved(cfg, os.path.dirname(args.out) or ".")
    print(f"wrote {len(dataset)} tuples to {args.out}")
    return 0


def cmd_train_adapter(args) -> int:
    from .adapter import AdapterDataset, train_adapter
    from .nets import save_checkpoint
    from .training.imitate import checkpoint_meta

    cfg = _load_config(args)
    resolved = cfg.resolve()
    gan_cfg = resolved.adapter
    if args.l1_only:
        gan_cfg.lambda_adv = 0.0
    dataset = AdapterDataset.load(args.dataset)
    gen, disc, report = train_adapter(dataset, gan_cfg, resolved.seed)
    os.makedirs(args.out, exist_ok=True)
    ck_path = os.path.join(args.out, f"adapter_{args.objective}.json")
    imitation_nets = {}
    if args.checkpoint:
        _, imitation_nets = load_checkpoint(args.checkpoint)
    nets = {"gating_high": gen, "discriminator": disc}
    for name in ("primitive", "obs_norm"):
        if name in imitation_nets:
            nets[name] = imitation_nets[name]
    save_checkpoint(ck_path, checkpoint_meta("adapter", resolved.seed,
                                             resolved.k, gan_cfg.epochs),
                    nets)
    report.save(os.path.join(args.out, f"adapter_{args.objective}_report.json"))
    write_resolved(cfg, args.out)
    print(json.dumps(report.to_dict() | {"checkpoint": ck_path}))
    return 0


def cmd_finetune(args) -> int:
    from .training.finetune import finetune_high_level

    cfg = _load_config(args)
    resolved = cfg.resolve()
    if args.adapter_ckpt is None and not args.no_adapter:
        print("finetune requires --adapter-ckpt (or pass --no-adapter for "
              "the ablation path)", file=sys.stderr)
        return 2
    stage = resolved.finetune
    stage.workers = resolved.workers
    if args.iterations is not None:
        stage.iterations = args.iterations
    out_dir = args.out or resolved.checkpoint_dir
    os.makedirs(out_dir, exist_ok=True)
    write_resolved(cfg, out_dir)
    result = finetune_high_level(
        args.imitation_ckpt, args.adapter_ckpt, args.objective, args.clip,
        out_dir, stage=stage, schedule=resolved.schedule,
        model_cfg=resolved.model, episode=resolved.episode,
        seed=resolved.seed, ground_friction=resolved.ground_friction,
        log_fn=lambda row: print(json.dumps(row)))
    print(json.dumps({"checkpoints": result}))
    return 0


def _record_gait_scripts(resolved):
    return {
        "pace": (1.0, [(5.0, 1.0, 0.0)]),
        "trot": (2.5, [(5.0, 2.5, 0.0)]),
        "canter": (3.7, [(5.0, 3.7, 0.0)]),
    }


def cmd_evaluate(args) -> int:
    from .training.imitate import net_to_scales
    from .training.rollout import HighLevelFeaturizer, record_scripted

    cfg = _load_config(args)
    resolved = cfg.resolve()
    meta, nets = load_checkpoint(args.checkpoint)
    scales = net_to_scales(nets["obs_norm"])
    out_dir = args.out or resolved.report_dir
    os.makedirs(out_dir, exist_ok=True)
    write_resolved(cfg, out_dir)
    n_rec = args.recordings

    report: dict = {
        "checkpoint": args.checkpoint,
        "checkpoint_stage": meta.get("stage"),
        "config_hash": config_hash(resolved.to_dict()),
        "checkpoint_hash": config_hash(meta),
    }
    tables = {}
    clouds = {}

    # speed tracking per gait + end-effector IoU vs the reference
    recordings = []
    iou_rows = [["gait", "leg", "iou"]]
    for gait, (speed, script) in _record_gait_scripts(resolved).items():
        ref_clip = rm.synthesize_speed_clip(lambda t: speed, 5.0,
                                            resolved.model)
        for i in range(n_rec):
            rec = record_scripted(
                nets, args.clip, resolved.model, resolved.episode, scales,
                script, seed=resolved.seed + i, objective="speed",
                start_frame=37 * i,
                ground_friction=resolved.ground_friction)
            rec.metadata.update({"gait": gait, "target_speed": speed})
            recordings.append(rec)
        iou = end_effector_iou(recordings[-1].states, ref_clip.frames,
                               resolved.model)
        for leg, val in iou.items():
            iou_rows.append([gait, leg, val])
    mse = speed_mse(recordings)
    report["speed_mse"] = {g: {"mean": m, "std": s} for g, (m, s) in mse.items()}
    tables["speed_mse"] = [["gait", "mean", "std"]] + [
        [g, m, s] for g, (m, s) in mse.items()]
    tables["end_effector_iou"] = iou_rows

    # heading maneuvers vs unicycle reference arcs
    heading_rows = [["turn", "direction", "angular_deg", "positional_m"]]
    for angle, label in ((math.pi / 2, "90"), (math.pi, "180")):
        for direction, dlabel in ((1.0, "L"), (-1.0, "R")):
            script = [(1.0, 1.0, 0.0), (4.0, 1.0, direction * angle)]
            rec = record_scripted(
                nets, args.clip, resolved.model, resolved.episode, scales,
                script, seed=resolved.seed, objective="heading",
                start_frame=11, ground_friction=resolved.ground_friction)
            ref_psi, ref_track = reference_arc(angle, direction, duration=5.0)
            ang, pos = heading_deviation(rec, ref_psi, ref_track)
            heading_rows.append([label, dlabel, ang, pos])
    tables["heading_deviation"] = heading_rows
    report["heading_deviation"] = [
        {"turn": r[0], "direction": r[1], "angular_deg": r[2],
         "positional_m": r[3]} for r in heading_rows[1:]]

    # influence-manifold export: gating outputs along the recordings
    policy_gating = nets["gating_high"]
    feat = HighLevelFeaturizer(scales)
    ws = []
    for rec in recordings[: 3 * n_rec]:
        for state, cmd in zip(rec.states, rec.commands):
            sf = feat.state_feat(state)
            xg = feat.xg(sf, cmd[0], cmd[1])
            w, _ = policy_gating.forward(xg)
            ws.append(w)
    pts, frac = pca_project(np.array(ws))
    clouds["influence_pca"] = pts
    report["influence_pca_explained"] = [float(f) for f in frac]

    files = emit_report(report, out_dir, clouds, tables)
    print(json.dumps({"written": files}))
    return 0


def cmd_navigate(args) -> int:
    cfg = _load_config(args)
    grid = nav.GridMap.load(args.map, cell_size=args.cell_size)
    start = grid.find(nav.START)[0]
    goals = grid.find(nav.GOAL) + grid.find(nav.ITEM)
    path = nav.astar(grid, start, goals[0])
    if path is None:
        print("no path to the goal", file=sys.stderr)
        return 1
    seq = nav.path_to_commands(path, args.speed, grid.cell_size)
    out = {
        "path": [list(c) for c in path],
        "commands": [{"duration": tc.duration,
                      "speed": tc.command.speed,
                      "heading_delta": tc.command.heading_delta}
                     for tc in seq],
    }
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as f:
            json.dump(out, f, indent=2)
        write_resolved(cfg, os.path.dirname(args.out) or ".")
        print(f"wrote {len(seq)} commands to {args.out}")
    else:
        print(json.dumps(out))
    return 0


def cmd_serve(args) -> int:
    import time as _time

    from .server import SimServer

    cfg = _load_config(args)
    resolved = cfg.resolve()
    server = SimServer(args.checkpoint, port=args.port, ws_port=args.ws_port,
                       seed=resolved.seed, model_cfg=resolved.model,
                       ground_friction=resolved.ground_friction)
    server.start()
    print(f"serving on tcp://127.0.0.1:{args.port} and "
          f"ws://127.0.0.1:{args.ws_port}")
    try:
        while True:
            _time.sleep(1.0)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_verify(args) -> int:
    failed = 0
    for suite, rows in fast_suites().items():
        for label, ok, detail in rows:
            print(f"[{'PASS' if ok else 'FAIL'}] {suite}: {label} ({detail})")
            failed += 0 if ok else 1
    print(f"verify: {'all suites passed' if failed == 0 else f'{failed} checks failed'}")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadloco",
        description="Desk-scale steerable quadruped: data, training, "
                    "evaluation, navigation, serving.")
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--workers", type=int, help="override worker count")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize reference clips")
    p.add_argument("--kind", required=True, choices=["speed", "heading", "pace"])
    p.add_argument("--out")
    p.add_argument("--duration", type=float)
    p.add_argument("--speed", type=float, default=1.0,
                   help="pace clip speed (kind=pace)")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-imitate", help="imitation stage (PPO)")
    p.add_argument("--clip", required=True)
    p.add_argument("--objective", default="speed",
                   choices=["speed", "heading"])
    p.add_argument("--out")
    p.add_argument("--iterations", type=int)
    p.add_argument("--stop-at-reward", type=float, dest="stop_at_reward")
    p.set_defaults(fn=cmd_train_imitate)

    p = sub.add_parser("collect-adapter-data",
                       help="record influence tuples from the trained "
                            "low-level policy")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.set_defaults(fn=cmd_collect_adapter_data)

    p = sub.add_parser("train-adapter", help="adversarial control adapter")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--objective", default="speed",
                   choices=["speed", "heading"])
    p.add_argument("--checkpoint",
                   help="imitation checkpoint whose primitive/normalizer "
                        "ride along into the adapter checkpoint")
    p.add_argument("--l1-only", action="store_true", dest="l1_only",
                   help="ablation: plain L1 regression (lambda_adv = 0)")
    p.set_defaults(fn=cmd_train_adapter)

    p = sub.add_parser("finetune", help="command-following fine-tuning")
    p.add_argument("--objective", required=True,
                   choices=["speed", "heading"])
    p.add_argument("--imitation-ckpt", required=True, dest="imitation_ckpt")
    p.add_argument("--adapter-ckpt", dest="adapter_ckpt")
    p.add_argument("--no-adapter", action="store_true", dest="no_adapter",
                   help="ablation: fresh high-level gating, no anchor")
    p.add_argument("--clip", required=True)
    p.add_argument("--out")
    p.add_argument("--iterations", type=int)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("evaluate", help="tracking metrics and manifold export")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip", required=True,
                   help="clip used for reference-state initialization")
    p.add_argument("--out")
    p.add_argument("--recordings", type=int, default=10)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("navigate", help="plan a maze path and translate it "
                                        "into commands")
    p.add_argument("--map", required=True)
    p.add_argument("--out")
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--cell-size", type=float, default=1.0, dest="cell_size")
    p.set_defaults(fn=cmd_navigate)

    p = sub.add_parser("serve", help="stream the live simulation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("QUADLOCO_PORT", 8765)))
    p.add_argument("--ws-port", type=int, dest="ws_port",
                   default=int(os.environ.get("QUADLOCO_WS_PORT", 8766)))
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("verify", help="run the oracle/invariant suites")
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (KeyError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
