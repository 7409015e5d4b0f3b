"""Adversarial control adapter.

Trains the high-level gating network as a generator: given (state, speed,
heading offset) it must produce primitive influences that (a) sit close to
the influences the trained low-level gating emitted in the same state
(L1 reconstruction, weight 100) and (b) fool a discriminator over influence
vectors (adversarial weight 1). With the adversarial weight at zero the
whole procedure collapses to plain L1 regression, which is also the
ablation path.

The generator uses the non-saturating -log D(fake) form; the discriminator
minimizes the negated original objective. Log arguments are clamped to
[1e-12, 1 - 1e-12] so both losses stay finite for any parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .nets import AdamState, DenseNet, adam_step, mlp

LOG_CLAMP = 1e-12


@dataclass
class GANConfig:
    lambda_rec: float = 100.0
    lambda_adv: float = 1.0
    lr: float = 2e-5
    epochs: int = 50
    batch_size: int = 256
    d_hidden: int = 64
    heldout_fraction: float = 0.1


@dataclass
class AdapterDataset:
    """(state features, low-level control features, command, real influence)."""

    state_feats: np.ndarray  # (n, ds) already scaled
    clow_feats: np.ndarray   # (n, dc)
    c_high: np.ndarray       # (n, 2) raw (speed, heading offset)
    w_real: np.ndarray       # (n, k)

    def __len__(self) -> int:
        return len(self.w_real)

    def split(self, heldout_fraction: float = 0.1):
        """Deterministic 90/10 split by record index."""
        n = len(self)
        step = max(int(round(1.0 / heldout_fraction)), 2)
        idx = np.arange(n)
        held = idx % step == 0
        return idx[~held], idx[held]

    def save(self, path: str) -> None:
        manifest = {"schema_version": 1, "records": len(self),
                    "k": self.w_real.shape[1]}
        with open(path, "w") as f:
            f.write(json.dumps(manifest) + "\n")
            for i in range(len(self)):
                f.write(json.dumps({
                    "s": self.state_feats[i].tolist(),
                    "c_low": self.clow_feats[i].tolist(),
                    "c_high": self.c_high[i].tolist(),
                    "w": self.w_real[i].tolist(),
                }) + "\n")

    @classmethod
    def load(cls, path: str) -> "AdapterDataset":
        s, cl, ch, w = [], [], [], []
        with open(path) as f:
            header = json.loads(f.readline())
            if header.get("schema_version") != 1:
                raise ValueError("unsupported adapter dataset schema")
            for line in f:
                rec = json.loads(line)
                s.append(rec["s"])
                cl.append(rec["c_low"])
                ch.append(rec["c_high"])
                w.append(rec["w"])
        return cls(np.array(s), np.array(cl), np.array(ch), np.array(w))


def build_discriminator(k: int, rng: np.random.Generator,
                        hidden: int = 64) -> DenseNet:
    """3 fully-connected layers, leaky-relu between them, sigmoid output."""
    return mlp(k, [hidden, hidden], 1, rng, hidden_act="leaky_relu",
               out_act="sigmoid")


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)


def d_loss(disc: DenseNet, w_real: np.ndarray, w_fake: np.ndarray):
    """-(E[log D(real)] + E[log(1 - D(fake))]) and gradients into D only."""
    if len(w_real) == 0 or len(w_fake) == 0:
        raise ValueError("empty discriminator batch")
    pr, cache_r = disc.forward(w_real, need_cache=True)
    pf, cache_f = disc.forward(w_fake, need_cache=True)
    pr_c, pf_c = _clamp(pr[:, 0]), _clamp(pf[:, 0])
    loss = -(float(np.mean(np.log(pr_c))) + float(np.mean(np.log(1.0 - pf_c))))
    # d/dp of -log(p)/n and -log(1-p)/n, zero where the clamp is active
    gr = np.where((pr[:, 0] > LOG_CLAMP) & (pr[:, 0] < 1 - LOG_CLAMP),
                  -1.0 / pr_c, 0.0) / len(pr_c)
    gf = np.where((pf[:, 0] > LOG_CLAMP) & (pf[:, 0] < 1 - LOG_CLAMP),
                  1.0 / (1.0 - pf_c), 0.0) / len(pf_c)
    grads_r, _ = disc.backward(cache_r, gr[:, None])
    grads_f, _ = disc.backward(cache_f, gf[:, None])
    grads = [(a + b, c + d) for (a, c), (b, d) in zip(grads_r, grads_f)]
    return loss, grads


def g_loss(gen: DenseNet, disc: DenseNet, x_gen: np.ndarray,
           w_real: np.ndarray, cfg: GANConfig):
    """lambda_adv * E[-log D(G(x))] + lambda_rec * E[mean |G(x) - w_real|].

    Gradients flow into the generator only; the discriminator acts as a
    fixed critic inside this loss.
    """
    if len(x_gen) == 0:
        raise ValueError("empty generator batch")
    n, k = w_real.shape
    w_fake, cache_g = gen.forward(x_gen, need_cache=True)
    rec = float(np.mean(np.abs(w_fake - w_real)))
    d_w = np.sign(w_fake - w_real) * (cfg.lambda_rec / (n * k))

    pf, cache_d = disc.forward(w_fake, need_cache=True)
    pf_c = _clamp(pf[:, 0])
    adv = -float(np.mean(np.log(pf_c)))
    if cfg.lambda_adv != 0.0:
        gp = np.where((pf[:, 0] > LOG_CLAMP) & (pf[:, 0] < 1 - LOG_CLAMP),
                      -1.0 / pf_c, 0.0) * (cfg.lambda_adv / n)
        _, dw_adv = disc.backward(cache_d, gp[:, None])
        d_w = d_w + dw_adv
    grads, _ = gen.backward(cache_g, d_w)
    loss = cfg.lambda_adv * adv + cfg.lambda_rec * rec
    return loss, grads, {"rec": rec, "adv": adv, "w_fake": w_fake}


@dataclass
class AdapterReport:
    heldout_l1: float
    d_accuracy: float
    pca_overlap: float
    lambda_rec: float
    lambda_adv: float
    epochs: int
    curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "heldout_l1": self.heldout_l1,
            "d_accuracy": self.d_accuracy,
            "pca_overlap": self.pca_overlap,
            "lambda_rec": self.lambda_rec,
            "lambda_adv": self.lambda_adv,
            "epochs": self.epochs,
            "curve": self.curve,
        }

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def gen_inputs(dataset: AdapterDataset) -> np.ndarray:
    """Generator inputs: scaled state features plus normalized command."""
    cmd = dataset.c_high / np.array([4.0, math.pi])
    return np.concatenate([dataset.state_feats, cmd], axis=1)


def train_adapter(dataset: AdapterDataset, cfg: GANConfig, seed: int,
                  gen: DenseNet | None = None,
                  rng_build=None) -> tuple[DenseNet, DenseNet, AdapterReport]:
    """Alternating D-step / G-step over minibatches for cfg.epochs.

    Returns (generator, discriminator, report). The generator, unless
    provided, is a fresh high-level gating net sized from the dataset.
    """
    from .evalsuite import pca_occupancy_overlap
    from .policy import build_gating

    rng = np.random.default_rng(seed)
    k = dataset.w_real.shape[1]
    x = gen_inputs(dataset)
    if gen is None:
        gen = build_gating(dataset.state_feats.shape[1], 2, rng, k=k)
    if gen.input_dim != x.shape[1]:
        raise ValueError("generator input does not match dataset features")
    disc = build_discriminator(k, rng, hidden=cfg.d_hidden)
    opt_g = AdamState.for_net(gen, cfg.lr)
    opt_d = AdamState.for_net(disc, cfg.lr)

    train_idx, held_idx = dataset.split(cfg.heldout_fraction)
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx)
        ep_d = ep_g = ep_rec = 0.0
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue
            w_real = dataset.w_real[idx]
            if cfg.lambda_adv != 0.0:
                w_fake_detached, _ = gen.forward(x[idx])
                dl, d_grads = d_loss(disc, w_real, w_fake_detached)
                adam_step(disc, d_grads, opt_d)
            else:
                dl = 0.0
            gl, g_grads, parts = g_loss(gen, disc, x[idx], w_real, cfg)
            if not all(np.isfinite(gw).all() and np.isfinite(gb).all()
                       for gw, gb in g_grads):
                raise RuntimeError(
                    f"non-finite adapter loss at epoch {epoch}, batch {batches}")
            adam_step(gen, g_grads, opt_g)
            ep_d += dl
            ep_g += gl
            ep_rec += parts["rec"]
            batches += 1
        curve.append({"epoch": epoch, "d_loss": ep_d / batches,
                      "g_loss": ep_g / batches, "rec_l1": ep_rec / batches})

    w_fake_held, _ = gen.forward(x[held_idx])
    w_real_held = dataset.w_real[held_idx]
    heldout_l1 = float(np.mean(np.abs(w_fake_held - w_real_held)))
    pr, _ = disc.forward(w_real_held)
    pf, _ = disc.forward(w_fake_held)
    d_accuracy = 0.5 * (float(np.mean(pr[:, 0] > 0.5))
                        + float(np.mean(pf[:, 0] <= 0.5)))
    # manifold overlap needs dense occupancy; measure it over the whole
    # dataset (a sparse held-out sample undercounts shared cells badly)
    w_fake_all, _ = gen.forward(x)
    overlap = pca_occupancy_overlap(dataset.w_real, w_fake_all, cell=0.05)
    report = AdapterReport(heldout_l1=heldout_l1, d_accuracy=d_accuracy,
                           pca_overlap=overlap, lambda_rec=cfg.lambda_rec,
                           lambda_adv=cfg.lambda_adv, epochs=cfg.epochs,
                           curve=curve)
    return gen, disc, report
