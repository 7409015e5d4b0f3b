"""Rollout collection across worker processes.

Workers own their environments and a read-only policy snapshot; parameters
never change during collection. Episode seeds are derived from the run
seed and a global episode index (iteration, worker, local counter), so a
run is bitwise reproducible for a fixed seed and worker count. Episodes
that diverge are dropped and logged, never retried.
"""

from __future__ import annotations

import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..model import (
    FEATURE_CLIP,
    STATE_FEAT_DIM,
    scale_state_features,
    state_features,
)
from ..nets import DenseNet, net_from_dict, net_to_dict
from ..physics import SimulationDiverged, wrap_angle
from ..policy import CompositePolicy
from ..quadruped import EpisodeAborted, EpisodeConfig, QuadrupedEnv
from ..model import QuadrupedConfig
from ..refmotion import load_clip
from ..rewards import r_heading, r_imitation, r_speed
from ..evalsuite import Recording

CMD_NORM = np.array([4.0, math.pi])


@dataclass
class CommandSchedule:
    """Resampling of the live command during fine-tuning rollouts."""

    rate_hz: float = 4.0
    speed_offset: float = 0.25
    heading_offset: float = 0.15
    switch_prob: float = 0.10
    speed_lo: float = 0.0
    speed_hi: float = 4.0

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, d: dict) -> "CommandSchedule":
        return cls(**d)


@dataclass
class Trajectory:
    xg: np.ndarray        # gating/value inputs per step
    xp: np.ndarray        # primitive inputs per step
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    terminal: bool        # True: early termination; False: truncation
    last_xg: np.ndarray   # value bootstrap input at the final state
    commands: np.ndarray  # active (speed, heading_delta) per step
    episode_index: int = 0
    states: list | None = None  # kept only for recordings, not sent to workers

    def __len__(self) -> int:
        return len(self.actions)


class ImitationFeaturizer:
    """Assembles gating inputs (state + next-two-frame targets)."""

    def __init__(self, clip, scales: np.ndarray):
        self.clip = clip
        self.scales = scales
        self.frame_feats = np.stack([
            scale_state_features(state_features(f), scales)
            for f in clip.frames])

    def state_feat(self, state) -> np.ndarray:
        return scale_state_features(state_features(state), self.scales)

    def _ref_block(self, j: int, state) -> np.ndarray:
        f = self.clip.frames[j]
        da = wrap_angle(2.0 * math.atan2(f.root_quat[3], f.root_quat[0])
                        - 2.0 * math.atan2(state.root_quat[3], state.root_quat[0]))
        delta = np.clip([f.root_pos[0] - state.root_pos[0],
                         f.root_pos[1] - state.root_pos[1], da],
                        -FEATURE_CLIP, FEATURE_CLIP)
        return np.concatenate([self.frame_feats[j], delta])

    def xg(self, sf: np.ndarray, state, j: int) -> np.ndarray:
        return np.concatenate([sf, self._ref_block(j + 1, state),
                               self._ref_block(j + 2, state)])

    @property
    def control_dim(self) -> int:
        return 2 * (STATE_FEAT_DIM + 3)


class HighLevelFeaturizer:
    """Assembles gating inputs (state + normalized command)."""

    def __init__(self, scales: np.ndarray):
        self.scales = scales

    def state_feat(self, state) -> np.ndarray:
        return scale_state_features(state_features(state), self.scales)

    def xg(self, sf: np.ndarray, speed: float, heading_err: float) -> np.ndarray:
        return np.concatenate([sf, [speed, heading_err] / CMD_NORM])

    @property
    def control_dim(self) -> int:
        return 2


def run_imitation_episode(env: QuadrupedEnv, clip, feat: ImitationFeaturizer,
                          policy: CompositePolicy, rng: np.random.Generator,
                          max_steps: int, eval_mode: bool = False):
    n = len(clip.frames)
    horizon = min(max_steps, n - 4)
    j0 = int(rng.integers(0, n - 3 - horizon + 1))
    state = env.reset_from_reference(clip.frames[j0])
    sf = feat.state_feat(state)
    rows = {"xg": [], "xp": [], "a": [], "logp": [], "r": [], "cmd": []}
    terminal = False
    try:
        for t in range(horizon):
            j = j0 + t
            xg = feat.xg(sf, state, j)
            if eval_mode:
                a = policy.mean_action(xg, sf)
                logp = 0.0
            else:
                a, logp = policy.act(xg, sf, rng)
            state, done = env.step(a)
            cmd = clip.commands[j]
            rows["xg"].append(xg)
            rows["xp"].append(sf)
            rows["a"].append(a)
            rows["logp"].append(logp)
            rows["r"].append(r_imitation(state, clip.frames[j + 1]))
            rows["cmd"].append((cmd.speed, cmd.heading_delta))
            sf = feat.state_feat(state)
            if done:
                terminal = True
                break
    except (SimulationDiverged, EpisodeAborted) as e:
        print(f"episode dropped: {e}", file=sys.stderr)
        return None
    if not rows["a"]:
        return None
    j_last = j0 + len(rows["a"])
    last_xg = feat.xg(sf, state, min(j_last, n - 3))
    return Trajectory(
        xg=np.array(rows["xg"]), xp=np.array(rows["xp"]),
        actions=np.array(rows["a"]), logp=np.array(rows["logp"]),
        rewards=np.array(rows["r"]), terminal=terminal, last_xg=last_xg,
        commands=np.array(rows["cmd"]))


def run_highlevel_episode(env: QuadrupedEnv, clip, feat: HighLevelFeaturizer,
                          policy: CompositePolicy, rng: np.random.Generator,
                          max_steps: int, schedule: CommandSchedule,
                          objective: str, eval_mode: bool = False,
                          script=None, start_frame: int | None = None):
    """Command-following episode for fine-tuning or scripted evaluation.

    With a script (list of (duration_s, speed, heading_delta)) the schedule
    is ignored and commands follow the script; heading offsets are applied
    relative to the heading at the segment switch.
    """
    n = len(clip.frames)
    j0 = int(rng.integers(0, n - 3)) if start_frame is None else start_frame
    state = env.reset_from_reference(clip.frames[j0])
    sf = feat.state_feat(state)
    if script is not None:
        seg = 0
        seg_end = script[0][0]
        speed_cmd = script[0][1]
        theta_hat = state.heading + script[0][2]
    elif objective == "speed":
        speed_cmd = rng.uniform(schedule.speed_lo, schedule.speed_hi)
        theta_hat = state.heading
    else:
        speed_cmd = 1.0
        theta_hat = state.heading + rng.uniform(-math.pi, math.pi)
    next_resample = 1.0 / schedule.rate_hz
    rows = {"xg": [], "xp": [], "a": [], "logp": [], "r": [], "cmd": []}
    states = [state]
    terminal = False
    try:
        for t in range(max_steps):
            err = wrap_angle(theta_hat - state.heading)
            xg = feat.xg(sf, speed_cmd, err)
            if eval_mode:
                a = policy.mean_action(xg, sf)
                logp = 0.0
            else:
                a, logp = policy.act(xg, sf, rng)
            state, done = env.step(a)
            reward = (r_speed(speed_cmd, state.com_vel) if objective == "speed"
                      else r_heading(theta_hat, state.com_vel))
            rows["xg"].append(xg)
            rows["xp"].append(sf)
            rows["a"].append(a)
            rows["logp"].append(logp)
            rows["r"].append(reward)
            rows["cmd"].append((speed_cmd, err))
            states.append(state)
            sf = feat.state_feat(state)
            now = (t + 1) / env.episode.control_hz
            if script is not None:
                if now >= seg_end and seg + 1 < len(script):
                    seg += 1
                    seg_end += script[seg][0]
                    speed_cmd = script[seg][1]
                    theta_hat = state.heading + script[seg][2]
            elif now >= next_resample:
                next_resample += 1.0 / schedule.rate_hz
                if rng.random() < schedule.switch_prob:
                    if objective == "speed":
                        speed_cmd = rng.uniform(schedule.speed_lo,
                                                schedule.speed_hi)
                    else:
                        theta_hat = state.heading + rng.uniform(-math.pi,
                                                                math.pi)
                else:
                    if objective == "speed":
                        speed_cmd = float(np.clip(
                            speed_cmd + rng.uniform(-schedule.speed_offset,
                                                    schedule.speed_offset),
                            schedule.speed_lo, schedule.speed_hi))
                    else:
                        theta_hat += rng.uniform(-schedule.heading_offset,
                                                 schedule.heading_offset)
            if done:
                terminal = True
                break
    except (SimulationDiverged, EpisodeAborted) as e:
        print(f"episode dropped: {e}", file=sys.stderr)
        return None
    if not rows["a"]:
        return None
    err = wrap_angle(theta_hat - state.heading)
    return Trajectory(
        xg=np.array(rows["xg"]), xp=np.array(rows["xp"]),
        actions=np.array(rows["a"]), logp=np.array(rows["logp"]),
        rewards=np.array(rows["r"]), terminal=terminal,
        last_xg=feat.xg(sf, speed_cmd, err),
        commands=np.array(rows["cmd"]), states=states)


# ---------------------------------------------------------------------------
# worker plumbing
# ---------------------------------------------------------------------------
# Heavy shared state (clip, featurizer, policy nets) is staged in a
# module-level context by the parent right before the worker pool forks;
# children inherit it copy-on-write, so nothing large is pickled per task.

_PARENT_CTX: dict = {}


@lru_cache(maxsize=8)
def _cached_clip(path: str):
    return load_clip(path)


_FEAT_CACHE: dict = {}


def _cached_imitation_feat(clip_path: str, scales: np.ndarray):
    key = (clip_path, scales.tobytes())
    if key not in _FEAT_CACHE:
        _FEAT_CACHE[key] = ImitationFeaturizer(_cached_clip(clip_path),
                                               scales)
    return _FEAT_CACHE[key]


def nets_to_blob(nets: dict[str, DenseNet]) -> dict:
    return {name: net_to_dict(net) for name, net in nets.items()}


def nets_from_blob(blob: dict) -> dict[str, DenseNet]:
    return {name: net_from_dict(d) for name, d in blob.items()}


def _policy_from_nets(nets: dict[str, DenseNet], stage: str) -> CompositePolicy:
    gating = nets["gating_low" if stage == "imitate" else "gating_high"]
    primitive = nets["primitive"]
    k = gating.output_dim
    return CompositePolicy(gating, primitive, k=k,
                           action_dim=primitive.output_dim // k)


def _build_policy(blob: dict, stage: str) -> CompositePolicy:
    return _policy_from_nets(nets_from_blob(blob), stage)


def _worker_setup(args: dict):
    """Environment, policy, and featurizer for one worker task."""
    if args.get("use_ctx") and _PARENT_CTX:
        nets = _PARENT_CTX["nets"]
        clip = _PARENT_CTX["clip"]
        feat = _PARENT_CTX["feat"]
        scales = _PARENT_CTX["scales"]
    else:
        clip = _cached_clip(args["clip_path"])
        scales = np.asarray(args["scales"])
        nets = nets_from_blob(args["nets"])
        if args["stage"] == "imitate":
            feat = _cached_imitation_feat(args["clip_path"], scales)
        else:
            feat = HighLevelFeaturizer(scales)
    cfg = QuadrupedConfig.from_dict(args["cfg"])
    episode = EpisodeConfig(**args["episode"])
    env = QuadrupedEnv(cfg, episode, ground_friction=args["ground_friction"])
    policy = _policy_from_nets(nets, args["stage"])
    return env, clip, feat, policy, episode, scales


def collect_worker(args: dict) -> list[dict]:
    """Collect trajectories until the per-worker step quota is met."""
    env, clip, feat, policy, episode, _ = _worker_setup(args)
    schedule = (CommandSchedule.from_dict(args["schedule"])
                if args.get("schedule") else CommandSchedule())
    out = []
    steps = 0
    k = 0
    while steps < args["steps_target"]:
        ep_index = (args["iteration"] * 1_000_000
                    + args["worker_id"] * 10_000 + k)
        rng = np.random.default_rng(args["seed"] + ep_index)
        if args["stage"] == "imitate":
            traj = run_imitation_episode(env, clip, feat, policy, rng,
                                         episode.max_steps)
        else:
            traj = run_highlevel_episode(env, clip, feat, policy, rng,
                                         episode.max_steps, schedule,
                                         args["objective"])
        k += 1
        if traj is None:
            continue
        traj.episode_index = ep_index
        steps += len(traj)
        out.append({
            "xg": traj.xg, "xp": traj.xp, "actions": traj.actions,
            "logp": traj.logp, "rewards": traj.rewards,
            "terminal": traj.terminal, "last_xg": traj.last_xg,
            "commands": traj.commands, "episode_index": traj.episode_index,
        })
    return out


def _stage_ctx(nets, stage, clip_path, scales):
    """Fill the fork-inherited context in the parent process."""
    clip = _cached_clip(clip_path)
    if stage == "imitate":
        feat = _cached_imitation_feat(clip_path, np.asarray(scales))
    else:
        feat = HighLevelFeaturizer(np.asarray(scales))
    _PARENT_CTX.clear()
    _PARENT_CTX.update({"nets": nets, "clip": clip, "feat": feat,
                        "scales": np.asarray(scales)})


def collect_rollouts(nets: dict[str, DenseNet], stage: str, clip_path: str,
                     cfg: QuadrupedConfig, episode: EpisodeConfig,
                     scales: np.ndarray, n_steps: int, seed: int,
                     workers: int, iteration: int, objective: str = "speed",
                     schedule: CommandSchedule | None = None,
                     ground_friction: float = 0.8) -> list[Trajectory]:
    """Synchronous on-policy collection of ~n_steps control steps."""
    if n_steps == 0:
        return []
    _stage_ctx(nets, stage, clip_path, scales)
    base = {
        "clip_path": clip_path, "cfg": cfg.to_dict(),
        "episode": episode.__dict__.copy(), "use_ctx": True,
        "stage": stage, "objective": objective,
        "schedule": schedule.to_dict() if schedule else None,
        "seed": seed, "iteration": iteration,
        "ground_friction": ground_friction,
    }
    per_worker = max(1, n_steps // workers)
    tasks = []
    for w in range(workers):
        t = dict(base)
        t["worker_id"] = w
        t["steps_target"] = per_worker
        tasks.append(t)
    if workers == 1:
        results = [collect_worker(tasks[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(collect_worker, tasks))
    trajs = []
    for worker_out in results:
        for d in worker_out:
            trajs.append(Trajectory(**d))
    return trajs


def _eval_worker(args: dict) -> list[float]:
    env, clip, feat, policy, episode, _ = _worker_setup(args)
    out = []
    for e in args["episode_ids"]:
        rng = np.random.default_rng(args["seed"] + 7_000_000 + e)
        if args["stage"] == "imitate":
            traj = run_imitation_episode(env, clip, feat, policy, rng,
                                         episode.max_steps, eval_mode=True)
        else:
            traj = run_highlevel_episode(env, clip, feat, policy, rng,
                                         episode.max_steps, CommandSchedule(),
                                         args["objective"], eval_mode=True)
        out.append(float(traj.rewards.mean()) if traj is not None and len(traj)
                   else 0.0)
    return out


def evaluate_policy(nets: dict[str, DenseNet], stage: str, clip_path: str,
                    cfg: QuadrupedConfig, episode: EpisodeConfig,
                    scales: np.ndarray, n_episodes: int, seed: int,
                    objective: str = "speed", ground_friction: float = 0.8,
                    workers: int = 1) -> float:
    """Mean per-step reward over deterministic (mean-action) episodes."""
    _stage_ctx(nets, stage, clip_path, scales)
    base = {
        "clip_path": clip_path, "cfg": cfg.to_dict(),
        "episode": episode.__dict__.copy(), "use_ctx": True,
        "stage": stage, "objective": objective,
        "seed": seed, "ground_friction": ground_friction,
    }
    ids = list(range(n_episodes))
    if workers <= 1:
        base["episode_ids"] = ids
        rewards = _eval_worker(base)
    else:
        tasks = []
        for w in range(min(workers, n_episodes)):
            t = dict(base)
            t["episode_ids"] = ids[w::workers]
            tasks.append(t)
        with ProcessPoolExecutor(max_workers=len(tasks)) as pool:
            rewards = [r for chunk in pool.map(_eval_worker, tasks)
                       for r in chunk]
    return float(np.mean(rewards))


def record_scripted(nets: dict[str, DenseNet], clip_path: str,
                    cfg: QuadrupedConfig, episode: EpisodeConfig,
                    scales: np.ndarray, script, seed: int,
                    objective: str = "speed", start_frame: int = 0,
                    ground_friction: float = 0.8) -> Recording:
    """Deterministic scripted run of the high-level policy for metrics."""
    clip = _cached_clip(clip_path)
    env = QuadrupedEnv(cfg, episode, ground_friction=ground_friction)
    policy = _policy_from_nets(nets, "highlevel")
    feat = HighLevelFeaturizer(np.asarray(scales))
    total = int(sum(s[0] for s in script) * episode.control_hz)
    rng = np.random.default_rng(seed)
    traj = run_highlevel_episode(env, clip, feat, policy, rng, total,
                                 CommandSchedule(), objective,
                                 eval_mode=True, script=list(script),
                                 start_frame=start_frame)
    if traj is None:
        raise RuntimeError("scripted recording diverged")
    return Recording(states=traj.states[1:],
                     commands=[tuple(c) for c in traj.commands],
                     metadata={"objective": objective, "seed": seed,
                               "script": [list(s) for s in script]})


def collect_adapter_worker(args: dict) -> dict:
    """Roll the trained low-level policy and record influence tuples."""
    env, clip, feat, policy, episode, _ = _worker_setup(args)
    n = len(clip.frames)
    sfs, clows, chighs, ws = [], [], [], []
    k = 0
    while len(ws) < args["count"]:
        ep_index = args["worker_id"] * 10_000 + k
        rng = np.random.default_rng(args["seed"] + ep_index)
        horizon = min(episode.max_steps, n - 4)
        j0 = int(rng.integers(0, n - 3 - horizon + 1))
        state = env.reset_from_reference(clip.frames[j0])
        sf = feat.state_feat(state)
        k += 1
        try:
            for t in range(horizon):
                if len(ws) >= args["count"]:
                    break
                j = j0 + t
                xg = feat.xg(sf, state, j)
                w_real, _ = policy.gating.forward(xg)
                cmd = clip.commands[j]
                sfs.append(sf)
                clows.append(xg[len(sf):])
                chighs.append([cmd.speed, cmd.heading_delta])
                ws.append(w_real)
                a, _ = policy.act(xg, sf, rng)
                state, done = env.step(a)
                sf = feat.state_feat(state)
                if done:
                    break
        except (SimulationDiverged, EpisodeAborted) as e:
            print(f"adapter collection episode dropped: {e}", file=sys.stderr)
            continue
    return {"s": np.array(sfs), "c_low": np.array(clows),
            "c_high": np.array(chighs), "w": np.array(ws)}


def collect_adapter_dataset(nets: dict[str, DenseNet], clip_path: str,
                            cfg: QuadrupedConfig, episode: EpisodeConfig,
                            scales: np.ndarray, count: int, seed: int,
                            workers: int = 1, ground_friction: float = 0.8):
    from ..adapter import AdapterDataset

    if count < 1000:
        raise ValueError("adapter dataset needs at least 1000 tuples")
    _stage_ctx(nets, "imitate", clip_path, scales)
    base = {
        "clip_path": clip_path, "cfg": cfg.to_dict(),
        "episode": episode.__dict__.copy(), "use_ctx": True,
        "stage": "imitate", "seed": seed,
        "ground_friction": ground_friction,
    }
    per_worker = count // workers
    extra = count - per_worker * workers
    tasks = []
    for w in range(workers):
        t = dict(base)
        t["worker_id"] = w
        t["count"] = per_worker + (extra if w == 0 else 0)
        tasks.append(t)
    if workers == 1:
        results = [collect_adapter_worker(tasks[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(collect_adapter_worker, tasks))
    return AdapterDataset(
        state_feats=np.concatenate([r["s"] for r in results]),
        clow_feats=np.concatenate([r["c_low"] for r in results]),
        c_high=np.concatenate([r["c_high"] for r in results]),
        w_real=np.concatenate([r["w"] for r in results]),
    )
