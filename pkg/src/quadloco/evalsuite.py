"""Measurement suite: command tracking, motion similarity, manifold export.

Speed tracking MSE per gait, angular/positional deviation of heading
maneuvers, end-effector occupancy IoU against the reference, and 2-D PCA
projection of sample clouds. All metrics are pure functions of their
inputs; file emission is separated into emit_report.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import QuadrupedConfig
from .physics import wrap_angle


@dataclass
class Recording:
    """30 Hz trajectory of agent states plus the commands that drove it."""

    states: list
    commands: list  # (speed, heading_delta) active per step
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.states:
            raise ValueError("recording must contain at least one state")

    def speeds(self) -> np.ndarray:
        return np.array([float(np.linalg.norm(s.com_vel[:2]))
                         for s in self.states])

    def headings(self) -> np.ndarray:
        return np.array([s.heading for s in self.states])

    def com_track(self) -> np.ndarray:
        return np.stack([s.com_pos[:2] for s in self.states])


def speed_mse(recordings: list[Recording]) -> dict:
    """Per-gait mean +- std of the per-recording mean squared speed error.

    Each recording carries metadata 'gait' and 'target_speed'. Gaits with
    fewer than one recording are omitted with a warning.
    """
    buckets: dict[str, list[float]] = {}
    for rec in recordings:
        gait = rec.metadata.get("gait", "unknown")
        target = float(rec.metadata["target_speed"])
        err = rec.speeds() - target
        buckets.setdefault(gait, []).append(float(np.mean(err * err)))
    out = {}
    for gait, vals in sorted(buckets.items()):
        if not vals:
            warnings.warn(f"no recordings for gait {gait}; omitted")
            continue
        arr = np.array(vals)
        out[gait] = (float(arr.mean()), float(arr.std()))
    return out


def reference_arc(turn_angle: float, direction: float, speed: float = 1.0,
                  turn_rate: float = 0.5 * math.pi, duration: float = 5.0,
                  fps: int = 30, lead: float = 1.0):
    """Unicycle reference for a single turn command: (headings, com track)."""
    n = int(round(duration * fps))
    dt = 1.0 / fps
    psi = 0.0
    pos = np.zeros(2)
    headings = np.zeros(n)
    track = np.zeros((n, 2))
    t_turn = abs(turn_angle) / turn_rate
    for i in range(n):
        t = (i + 1) * dt
        rate = direction * turn_rate if lead <= t < lead + t_turn else 0.0
        psi += rate * dt
        pos = pos + speed * dt * np.array([math.cos(psi), -math.sin(psi)])
        headings[i] = psi
        track[i] = pos
    return headings, track


def heading_deviation(recording: Recording, ref_headings: np.ndarray,
                      ref_track: np.ndarray) -> tuple[float, float]:
    """(mean |heading error| in degrees, mean planar COM distance in m).

    Headings are compared directly; COM tracks are translated to a common
    start first. A length mismatch is flagged and the shorter prefix
    compared.
    """
    n = min(len(recording.states), len(ref_headings))
    if n != len(ref_headings) or n != len(recording.states):
        warnings.warn("length mismatch; comparing common prefix")
    psi = recording.headings()[:n]
    track = recording.com_track()[:n]
    track = track - track[0]
    rt = ref_track[:n] - ref_track[0]
    ang = float(np.mean([abs(wrap_angle(a - b))
                         for a, b in zip(psi, ref_headings[:n])]))
    pos = float(np.mean(np.linalg.norm(track - rt, axis=1)))
    return math.degrees(ang), pos


def foot_points_torso_frame(states, cfg: QuadrupedConfig) -> np.ndarray:
    """Foot-tip positions relative to the torso, one (4, 2) row per state."""
    half = cfg.lower_len / 2.0
    out = np.zeros((len(states), 4, 2))
    for i, st in enumerate(states):
        for leg in range(4):
            row = 2 + 2 * leg
            ang = 2.0 * math.atan2(st.link_quat[row][3], st.link_quat[row][0])
            out[i, leg, 0] = st.link_pos[row, 0] + half * math.sin(ang)
            out[i, leg, 1] = st.link_pos[row, 1] - half * math.cos(ang)
    return out


def _occupancy(points: np.ndarray, cell: float) -> set:
    return {(int(math.floor(x / cell)), int(math.floor(y / cell)))
            for x, y in points}


def occupancy_iou(points_a: np.ndarray, points_b: np.ndarray,
                  cell: float = 0.02) -> float:
    a = _occupancy(points_a, cell)
    b = _occupancy(points_b, cell)
    union = a | b
    if not union:
        warnings.warn("empty occupancy; IoU reported as 0")
        return 0.0
    return len(a & b) / len(union)


def end_effector_iou(gen_states, ref_states, cfg: QuadrupedConfig,
                     cell: float = 0.02) -> dict:
    """Per-leg IoU of rasterized foot regions plus their average."""
    gen_pts = foot_points_torso_frame(gen_states, cfg)
    ref_pts = foot_points_torso_frame(ref_states, cfg)
    legs = ("left_front", "right_front", "left_rear", "right_rear")
    out = {}
    for i, leg in enumerate(legs):
        out[leg] = occupancy_iou(gen_pts[:, i, :], ref_pts[:, i, :], cell)
    out["average"] = float(np.mean([out[l] for l in legs]))
    return out


def pca_project(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the top-2 principal directions.

    Components are covariance eigenvectors in descending eigenvalue order
    with a deterministic sign (first nonzero entry positive). Returns
    (points (n, 2), explained-variance fractions (2,)). Rank-deficient
    input is still projected, with a warning.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 10 or x.shape[1] < 2:
        raise ValueError("need >= 10 samples with >= 2 features")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order]
    if evals[1] <= 1e-15 * max(evals[0], 1.0):
        warnings.warn("rank-deficient sample cloud")
    comps = evecs[:, :2].copy()
    for j in range(2):
        nz = np.nonzero(np.abs(comps[:, j]) > 1e-12)[0]
        if len(nz) and comps[nz[0], j] < 0:
            comps[:, j] = -comps[:, j]
    total = evals.sum()
    fractions = evals[:2] / total if total > 0 else np.zeros(2)
    return centered @ comps, fractions


def pca_occupancy_overlap(real: np.ndarray, fake: np.ndarray,
                          cell: float = 0.05) -> float:
    """IoU of the two clouds' occupancy in the real cloud's top-2 plane."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    mean = real.mean(axis=0)
    centered = real - mean
    cov = centered.T @ centered / (len(real) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    comps = evecs[:, order[:2]]
    return occupancy_iou((real - mean) @ comps, (fake - mean) @ comps, cell)


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def emit_report(report: dict, out_dir: str, point_clouds: dict | None = None,
                tables: dict | None = None) -> list[str]:
    """Write a JSON summary, one CSV per table, and point-cloud text files.

    Same inputs give byte-identical outputs; nothing is written if the
    directory cannot be created.
    """
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    try:
        with open(probe, "w") as f:
            f.write("ok")
        os.remove(probe)
    except OSError as e:
        raise OSError(f"output directory not writable: {out_dir}") from e
    written = []
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    written.append(summary_path)
    for name, rows in sorted((tables or {}).items()):
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            for row in rows:
                writer.writerow(row)
        written.append(path)
    for name, pts in sorted((point_clouds or {}).items()):
        path = os.path.join(out_dir, f"{name}.xy")
        with open(path, "w") as f:
            for x, y in np.asarray(pts):
                f.write(f"{x!r} {y!r}\n")
        written.append(path)
    return written
