"""Compositional Gaussian policy.

A gating network maps (state features, control features) to k nonnegative
primitive influences; a primitive network maps state features to k action
means. The primitives share one fixed diagonal covariance, so their
weighted product normalizes in closed form:

    var_d  = 1 / sum_i(w_i / sigma_d^2)          = sigma_d^2 / sum_i(w_i)
    mean_d = var_d * sum_i(w_i * mu_id / sigma_d^2)

Gradients of the composite log-density with respect to both networks are
derived by hand and checked against finite differences; there is no
autodiff here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import DenseNet, mlp

K_PRIMITIVES = 8
SIGMA2 = 0.05          # fixed diagonal covariance of every primitive
W_SUM_FLOOR = 1e-6
SAMPLE_VAR_FLOOR = 1e-12


@dataclass
class CompositeGaussian:
    mean: np.ndarray  # (A,)
    var: np.ndarray   # (A,)


def gate(net: DenseNet, state_feat: np.ndarray, control_feat: np.ndarray) -> np.ndarray:
    """Primitive influences for one (state, control) pair.

    The net's softplus head keeps weights positive; the sum is floored at
    W_SUM_FLOOR (the correction is treated as constant for gradients, and
    is unreachable in practice since softplus never hits zero).
    """
    x = np.concatenate([state_feat, control_feat])
    w, _ = net.forward(x)
    s = w.sum()
    if s < W_SUM_FLOOR:
        w = w + (W_SUM_FLOOR - s) / w.shape[0]
    return w


def compose(w: np.ndarray, mus: np.ndarray, sigma2) -> CompositeGaussian:
    """Closed-form product of Gaussian primitives with shared diagonal cov.

    w: (k,) nonnegative influences; mus: (k, A) means; sigma2: scalar or (A,).
    """
    w = np.asarray(w, dtype=np.float64)
    mus = np.asarray(mus, dtype=np.float64)
    if np.any(w < 0.0):
        raise ValueError("influences must be nonnegative")
    s = float(w.sum())
    if s <= 0.0:
        raise ValueError("composition undefined: influence sum is zero")
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64),
                             (mus.shape[1],))
    mean = (w @ mus) / s
    var = sigma2 / s
    return CompositeGaussian(mean=mean, var=var)


def sample(cg: CompositeGaussian, rng: np.random.Generator) -> np.ndarray:
    var = np.maximum(cg.var, SAMPLE_VAR_FLOOR)
    return cg.mean + np.sqrt(var) * rng.standard_normal(cg.mean.shape[0])


def log_prob(cg: CompositeGaussian, a: np.ndarray):
    """Diagonal Gaussian log density with analytic partials.

    Returns (value, d/dmean, d/dvar), the pieces every surrounding loss
    chains through.
    """
    a = np.asarray(a, dtype=np.float64)
    diff = a - cg.mean
    val = -0.5 * float(np.sum(np.log(2.0 * math.pi * cg.var)
                              + diff * diff / cg.var))
    dmean = diff / cg.var
    dvar = -0.5 / cg.var + diff * diff / (2.0 * cg.var * cg.var)
    return val, dmean, dvar


class CompositePolicy:
    """Gating + primitive nets with batched log-prob gradients.

    The policy is feature-agnostic: callers assemble the gating input
    (state plus control features) and the primitive input (state features).
    Parameters are treated as immutable during rollouts; updates happen in
    an exclusive updater phase.
    """

    def __init__(self, gating: DenseNet, primitive: DenseNet,
                 k: int = K_PRIMITIVES, action_dim: int = 9,
                 sigma2: float = SIGMA2):
        if gating.output_dim != k:
            raise ValueError(f"gating outputs {gating.output_dim}, expected k={k}")
        if primitive.output_dim != k * action_dim:
            raise ValueError("primitive output must be k * action_dim")
        self.gating = gating
        self.primitive = primitive
        self.k = k
        self.action_dim = action_dim
        self.sigma2 = np.full(action_dim, float(sigma2))

    def distribution(self, x_g: np.ndarray, x_p: np.ndarray) -> CompositeGaussian:
        w, _ = self.gating.forward(x_g)
        s = w.sum()
        if s < W_SUM_FLOOR:
            w = w + (W_SUM_FLOOR - s) / self.k
        mus, _ = self.primitive.forward(x_p)
        return compose(w, mus.reshape(self.k, self.action_dim), self.sigma2)

    def act(self, x_g: np.ndarray, x_p: np.ndarray, rng: np.random.Generator):
        cg = self.distribution(x_g, x_p)
        a = sample(cg, rng)
        logp, _, _ = log_prob(cg, a)
        return a, logp

    def mean_action(self, x_g: np.ndarray, x_p: np.ndarray) -> np.ndarray:
        return self.distribution(x_g, x_p).mean

    # -- batched log-prob with gradients --------------------------------------

    def logp_batch(self, Xg: np.ndarray, Xp: np.ndarray, A: np.ndarray):
        """Composite log-density of actions A (n, |A|); returns (logp, cache)."""
        n = A.shape[0]
        w, gcache = self.gating.forward(Xg, need_cache=True)
        S = w.sum(axis=1)
        low = S < W_SUM_FLOOR
        if low.any():
            w = w + np.where(low, (W_SUM_FLOOR - S) / self.k, 0.0)[:, None]
            S = w.sum(axis=1)
        M, pcache = self.primitive.forward(Xp, need_cache=True)
        M = M.reshape(n, self.k, self.action_dim)
        mean = np.einsum("nk,nka->na", w, M) / S[:, None]
        var = self.sigma2[None, :] / S[:, None]
        diff = A - mean
        logp = -0.5 * np.sum(np.log(2.0 * math.pi * var) + diff * diff / var,
                             axis=1)
        cache = (gcache, pcache, w, S, M, mean, var, diff)
        return logp, cache

    def backward_logp(self, cache, dlogp: np.ndarray):
        """Parameter gradients of sum_n dlogp_n * logp_n."""
        gcache, pcache, w, S, M, mean, var, diff = cache
        dmean = dlogp[:, None] * diff / var
        dvar = dlogp[:, None] * (-0.5 / var + diff * diff / (2.0 * var * var))
        dS = (np.sum(dmean * (-mean), axis=1)
              + np.sum(dvar * (-var), axis=1)) / S
        dM = w[:, :, None] * dmean[:, None, :] / S[:, None, None]
        dw = (np.einsum("na,nka->nk", dmean, M) / S[:, None]) + dS[:, None]
        g_grads, _ = self.gating.backward(gcache, dw)
        p_grads, _ = self.primitive.backward(pcache, dM.reshape(dM.shape[0], -1))
        return {"gating": g_grads, "primitive": p_grads}


def build_gating(state_dim: int, control_dim: int, rng: np.random.Generator,
                 hidden=(128, 128), k: int = K_PRIMITIVES) -> DenseNet:
    return mlp(state_dim + control_dim, list(hidden), k, rng,
               hidden_act="relu", out_act="softplus")


def build_primitive(state_dim: int, rng: np.random.Generator,
                    hidden=(256, 256), k: int = K_PRIMITIVES,
                    action_dim: int = 9) -> DenseNet:
    return mlp(state_dim, list(hidden), k * action_dim, rng,
               hidden_act="relu", out_act="linear")


def build_value(input_dim: int, rng: np.random.Generator,
                hidden=(128, 128)) -> DenseNet:
    return mlp(input_dim, list(hidden), 1, rng, hidden_act="relu",
               out_act="linear")
