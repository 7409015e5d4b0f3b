"""PPO-clip surrogate, value regression, and the parameter-space regularizer.

The ratio uses the composite log-density (the distribution actions are
sampled from). No entropy bonus: the fixed primitive covariance already
forces exploration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nets import AdamState, DenseNet, adam_step
from ..policy import CompositePolicy


def l_reg(net: DenseNet, anchor: DenseNet) -> float:
    """Sum of absolute parameter differences over all layers."""
    if len(net.layers) != len(anchor.layers):
        raise ValueError("anchor does not match net layout")
    total = 0.0
    for l, a in zip(net.layers, anchor.layers):
        if l.w.shape != a.w.shape:
            raise ValueError("anchor does not match net layout")
        total += float(np.abs(l.w - a.w).sum()) + float(np.abs(l.b - a.b).sum())
    return total


def l_reg_grads(net: DenseNet, anchor: DenseNet):
    return [(np.sign(l.w - a.w), np.sign(l.b - a.b))
            for l, a in zip(net.layers, anchor.layers)]


def ppo_surrogate(policy: CompositePolicy, Xg, Xp, A, old_logp, adv,
                  clip_eps: float):
    """Clipped surrogate value and its gradients through both nets.

    Returns (surrogate, grads, ratio). The gradient flows only through
    samples where the unclipped term attains the min; at the others the
    clipped constant wins and the derivative is exactly zero.
    """
    logp, cache = policy.logp_batch(Xg, Xp, A)
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    surr = float(np.minimum(unclipped, clipped).mean())
    n = len(adv)
    dlogp = np.where(unclipped <= clipped, adv * ratio, 0.0) / n
    grads = policy.backward_logp(cache, dlogp)
    return surr, grads, ratio


def value_loss(net: DenseNet, X, targets):
    """0.5 * mean squared error and its gradients."""
    v, cache = net.forward(X, need_cache=True)
    diff = v[:, 0] - targets
    loss = 0.5 * float(np.mean(diff * diff))
    grads, _ = net.backward(cache, (diff / len(diff))[:, None])
    return loss, grads


def _neg(grads):
    return [(-gw, -gb) for gw, gb in grads]


def _add(acc, extra, scale=1.0):
    return [(gw + scale * ew, gb + scale * eb)
            for (gw, gb), (ew, eb) in zip(acc, extra)]


@dataclass
class PPOUpdateConfig:
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 256
    reg_weight: float = 0.0
    # stop the epoch loop once the batch KL passes this; the composite
    # variance is small, so unchecked epochs can walk the policy far even
    # inside the clip range
    kl_stop: float = 0.15


@dataclass
class Batch:
    xg: np.ndarray
    xp: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray
    xv: np.ndarray  # value-net inputs


def ppo_update(policy: CompositePolicy, value_net: DenseNet, batch: Batch,
               cfg: PPOUpdateConfig, opt_gating: AdamState,
               opt_primitive: AdamState | None, opt_value: AdamState,
               rng: np.random.Generator, reg_anchor: DenseNet | None = None):
    """Minibatch-epoch PPO step.

    opt_primitive=None freezes the primitive net (fine-tuning mode); the
    regularizer, when an anchor is given, pulls the gating net toward it in
    parameter space with weight cfg.reg_weight.
    """
    n = len(batch.actions)
    if n == 0:
        raise ValueError("empty batch")
    stats = {"surrogate": [], "value_loss": [], "ratio_mean": [], "l_reg": []}
    probe = slice(0, min(n, 1024))  # fixed KL probe subset
    stopped = False
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            surr, grads, ratio = ppo_surrogate(
                policy, batch.xg[idx], batch.xp[idx], batch.actions[idx],
                batch.old_logp[idx], batch.advantages[idx], cfg.clip_eps)
            g_grads = _neg(grads["gating"])  # minimize -surrogate
            if reg_anchor is not None and cfg.reg_weight != 0.0:
                reg_val = l_reg(policy.gating, reg_anchor)
                g_grads = _add(g_grads, l_reg_grads(policy.gating, reg_anchor),
                               cfg.reg_weight)
                stats["l_reg"].append(reg_val)
            adam_step(policy.gating, g_grads, opt_gating)
            if opt_primitive is not None:
                adam_step(policy.primitive, _neg(grads["primitive"]),
                          opt_primitive)
            vloss, v_grads = value_loss(value_net, batch.xv[idx],
                                        batch.value_targets[idx])
            adam_step(value_net, v_grads, opt_value)
            stats["surrogate"].append(surr)
            stats["value_loss"].append(vloss)
            stats["ratio_mean"].append(float(ratio.mean()))
            if cfg.kl_stop > 0:
                logp_now, _ = policy.logp_batch(batch.xg[probe],
                                                batch.xp[probe],
                                                batch.actions[probe])
                if float(np.mean(batch.old_logp[probe] - logp_now)) > cfg.kl_stop:
                    stopped = True
                    break
        if stopped:
            break
    out = {k: (float(np.mean(v)) if v else 0.0) for k, v in stats.items()}
    out["kl_stopped"] = stopped
    return out
