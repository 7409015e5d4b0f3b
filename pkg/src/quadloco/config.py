"""Run configuration: constants, desk-scale overrides, and echoing.

Every training/eval entry point resolves one RunConfig and writes it next
to its outputs. The canonical full-scale constants (rates, weights,
learning rates, discounts, schedule parameters) are the dataclass
defaults; desk_overrides holds the throughput-motivated deviations
(bigger learning rates, finite iteration budgets) applied by resolve().
Reports embed both, so any artifact can be traced to the full effective
configuration and the constants it deviated from.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

from .adapter import GANConfig
from .model import QuadrupedConfig
from .quadruped import EpisodeConfig
from .training.imitate import StageConfig
from .training.rollout import CommandSchedule

REFERENCE_DEFAULTS = {
    "sim_hz": 1200,
    "control_hz": 30,
    "primitives_k": 8,
    "sigma2": 0.05,
    "reward_weights": {"pose": 0.65, "velocity": 0.1, "com": 0.1,
                       "contact": 0.15},
    "lambda_contact": 5.0,
    "lambda_speed": 0.8,
    "lambda_rec": 100.0,
    "lambda_adv": 1.0,
    "lr_policy_imitation": 2.5e-6,
    "lr_policy_finetune": 5e-5,
    "lr_value": 1e-2,
    "lr_gan": 2e-5,
    "gamma_imitation": 0.95,
    "gamma_finetune": 0.99,
    "gae_lambda": 0.95,
    "td_lambda": 0.95,
    "cmd_speed_offset": 0.25,
    "cmd_heading_offset": 0.15,
    "cmd_rate_hz": 4.0,
    "cmd_switch_prob": 0.10,
    "reg_weight": 0.001,
    "gan_epochs": 50,
    "speed_range": [0.0, 4.0],
    "heading_range": [-math.pi, math.pi],
    "clip_seconds_per_objective": 60.0,
    "adapter_samples_full": 1_000_000,
}

# Desk-scale deviations (dotted keys into RunConfig). The full-scale
# learning rates belong to multi-hundred-hour trainings; these are what
# converge within the smoke budgets.
DESK_OVERRIDES = {
    "imitation.policy_lr": 1.5e-4,
    "imitation.value_lr": 1e-3,
    "finetune.policy_lr": 1.5e-4,
    "finetune.value_lr": 1e-3,
}


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 8
    ground_friction: float = 0.8
    k: int = REFERENCE_DEFAULTS["primitives_k"]
    sigma2: float = REFERENCE_DEFAULTS["sigma2"]
    gating_hidden: list = field(default_factory=lambda: [128, 128])
    primitive_hidden: list = field(default_factory=lambda: [256, 256])
    value_hidden: list = field(default_factory=lambda: [128, 128])
    model: QuadrupedConfig = field(default_factory=QuadrupedConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    imitation: StageConfig = field(default_factory=lambda: StageConfig(
        gamma=REFERENCE_DEFAULTS["gamma_imitation"],
        lam=REFERENCE_DEFAULTS["gae_lambda"],
        policy_lr=REFERENCE_DEFAULTS["lr_policy_imitation"],
        value_lr=REFERENCE_DEFAULTS["lr_value"]))
    finetune: StageConfig = field(default_factory=lambda: StageConfig(
        gamma=REFERENCE_DEFAULTS["gamma_finetune"],
        lam=REFERENCE_DEFAULTS["td_lambda"],
        policy_lr=REFERENCE_DEFAULTS["lr_policy_finetune"],
        value_lr=REFERENCE_DEFAULTS["lr_value"],
        reg_weight=REFERENCE_DEFAULTS["reg_weight"],
        iterations=60))
    schedule: CommandSchedule = field(default_factory=CommandSchedule)
    adapter: GANConfig = field(default_factory=GANConfig)
    adapter_samples: int = 100_000
    clip_seconds: float = REFERENCE_DEFAULTS["clip_seconds_per_objective"]
    data_dir: str = "data"
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"
    desk_overrides: dict = field(default_factory=lambda: dict(DESK_OVERRIDES))

    def resolve(self) -> "RunConfig":
        """Apply desk_overrides (dotted keys) onto a copy."""
        out = RunConfig.from_dict(self.to_dict())
        for key, value in (self.desk_overrides or {}).items():
            obj = out
            parts = key.split(".")
            for part in parts[:-1]:
                if not hasattr(obj, part):
                    raise KeyError(f"desk override targets unknown key {key!r}")
                obj = getattr(obj, part)
            if not hasattr(obj, parts[-1]):
                raise KeyError(f"desk override targets unknown key {key!r}")
            setattr(obj, parts[-1], value)
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["reference_defaults"] = dict(REFERENCE_DEFAULTS)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d.pop("reference_defaults", None)
        known = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in known:
                raise KeyError(f"unknown config key {key!r}")
        nested = {
            "model": QuadrupedConfig,
            "episode": EpisodeConfig,
            "schedule": CommandSchedule,
            "adapter": GANConfig,
        }
        for name, typ in nested.items():
            if name in d and isinstance(d[name], dict):
                sub_known = {f.name for f in dataclasses.fields(typ)}
                for key in d[name]:
                    if key not in sub_known:
                        raise KeyError(f"unknown config key {name}.{key!r}")
                d[name] = typ(**d[name])
        for name in ("imitation", "finetune"):
            if name in d and isinstance(d[name], dict):
                sub_known = {f.name for f in dataclasses.fields(StageConfig)}
                for key in d[name]:
                    if key not in sub_known:
                        raise KeyError(f"unknown config key {name}.{key!r}")
                d[name] = StageConfig(**d[name])
        return cls(**d)

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def apply_env_overrides(cfg: RunConfig, environ=None) -> RunConfig:
    """QUADLOCO_DATA_DIR / _CHECKPOINT_DIR / _REPORT_DIR / _SEED / _WORKERS."""
    env = os.environ if environ is None else environ
    mapping = {
        "QUADLOCO_DATA_DIR": ("data_dir", str),
        "QUADLOCO_CHECKPOINT_DIR": ("checkpoint_dir", str),
        "QUADLOCO_REPORT_DIR": ("report_dir", str),
        "QUADLOCO_SEED": ("seed", int),
        "QUADLOCO_WORKERS": ("workers", int),
    }
    for var, (attr, typ) in mapping.items():
        if var in env:
            setattr(cfg, attr, typ(env[var]))
    return cfg


def write_resolved(cfg: RunConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "resolved_config.json")
    cfg.save(path)
    return path
