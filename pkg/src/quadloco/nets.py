"""Minimal dense-network engine with explicit forward/backward passes.

Everything downstream (gating networks, primitives, value functions, the
adapter discriminator) is built from `DenseNet`: an ordered list of affine
layers with fixed activation tags. Gradients are hand-derived and checked
against a central finite-difference oracle, so there is no framework
autodiff anywhere in the stack.

Tensors are plain float64 numpy arrays (row-major); a batch is a 2-D array
with one row per sample.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("linear", "relu", "leaky_relu", "tanh", "sigmoid", "softplus")

LEAKY_SLOPE = 0.01


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split form avoids overflow in exp for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def act_forward(z: np.ndarray, tag: str) -> np.ndarray:
    if tag == "linear":
        return z
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "leaky_relu":
        return np.where(z > 0.0, z, LEAKY_SLOPE * z)
    if tag == "tanh":
        return np.tanh(z)
    if tag == "sigmoid":
        return _sigmoid(z)
    if tag == "softplus":
        return softplus(z)
    raise ValueError(f"unknown activation tag {tag!r}")


def act_backward(grad_out: np.ndarray, z: np.ndarray, tag: str) -> np.ndarray:
    """Gradient through the activation, given pre-activation z."""
    if tag == "linear":
        return grad_out
    if tag == "relu":
        return grad_out * (z > 0.0)
    if tag == "leaky_relu":
        return grad_out * np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    if tag == "tanh":
        t = np.tanh(z)
        return grad_out * (1.0 - t * t)
    if tag == "sigmoid":
        s = _sigmoid(z)
        return grad_out * s * (1.0 - s)
    if tag == "softplus":
        return grad_out * _sigmoid(z)
    raise ValueError(f"unknown activation tag {tag!r}")


@dataclass
class Layer:
    w: np.ndarray  # (in_dim, out_dim)
    b: np.ndarray  # (out_dim,)
    act: str

    def __post_init__(self):
        if self.act not in ACTIVATIONS:
            raise ValueError(f"unknown activation tag {self.act!r}")
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.ndim != 1 or self.b.shape[0] != self.w.shape[1]:
            raise ValueError(f"layer shapes inconsistent: w{self.w.shape}, b{self.b.shape}")


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.w.shape[1] != nxt.w.shape[0]:
                raise ValueError(
                    f"layer dims do not chain: {prev.w.shape} -> {nxt.w.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].w.shape[1]

    def param_count(self) -> int:
        return sum(l.w.size + l.b.size for l in self.layers)

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.w.copy(), l.b.copy(), l.act) for l in self.layers])

    def forward(self, x: np.ndarray, need_cache: bool = False):
        """Evaluate the net on a sample (d,) or batch (n, d).

        Returns (output, cache); cache is None unless requested. The cache
        stores per-layer inputs and pre-activations, which is all backward()
        needs, so nothing is recomputed there.
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.input_dim:
            raise ValueError(
                f"input dim {h.shape[1]} does not match net input {self.input_dim}"
            )
        cache = [] if need_cache else None
        for layer in self.layers:
            z = h @ layer.w + layer.b
            if need_cache:
                cache.append((h, z))
            h = act_forward(z, layer.act)
        out = h[0] if squeeze else h
        return out, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Backpropagate grad_out through a cached forward pass.

        Returns (param_grads, input_grad) where param_grads is a list of
        (dW, db) congruent to the layers. grad_out may be (out_dim,) for a
        single sample or (n, out_dim) for a batch; summed over the batch.
        """
        if cache is None or len(cache) != len(self.layers):
            raise ValueError("cache does not match this net (run forward with need_cache=True)")
        g = np.asarray(grad_out, dtype=np.float64)
        squeeze = g.ndim == 1
        if squeeze:
            g = g[None, :]
        if g.shape != (cache[-1][1].shape[0], self.output_dim):
            raise ValueError(
                f"grad shape {g.shape} does not match cached batch "
                f"({cache[-1][1].shape[0]}, {self.output_dim})"
            )
        param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            h_in, z = cache[i]
            gz = act_backward(g, z, layer.act)
            param_grads[i] = (h_in.T @ gz, gz.sum(axis=0))
            g = gz @ layer.w.T
        return param_grads, (g[0] if squeeze else g)


def init_dense(dims: list[int], acts: list[str], rng: np.random.Generator) -> DenseNet:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    if len(acts) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for d_in, d_out, act in zip(dims, dims[1:], acts):
        bound = math.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-bound, bound, size=(d_in, d_out))
        layers.append(Layer(w, np.zeros(d_out), act))
    return DenseNet(layers)


def mlp(in_dim: int, hidden: list[int], out_dim: int, rng: np.random.Generator,
        hidden_act: str = "relu", out_act: str = "linear") -> DenseNet:
    dims = [in_dim, *hidden, out_dim]
    acts = [hidden_act] * len(hidden) + [out_act]
    return init_dense(dims, acts, rng)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)  # [(mW, mb)] congruent to layers
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseNet, lr: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        st = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        st.m = [(np.zeros_like(l.w), np.zeros_like(l.b)) for l in net.layers]
        st.v = [(np.zeros_like(l.w), np.zeros_like(l.b)) for l in net.layers]
        return st


def adam_step(net: DenseNet, grads, state: AdamState) -> None:
    """One in-place Adam update with bias correction.

    Rejects non-finite gradients, naming the offending layer, and leaves
    both the net and the state untouched in that case.
    """
    if len(grads) != len(net.layers):
        raise ValueError("gradient list does not match net layers")
    for i, ((gw, gb), layer) in enumerate(zip(grads, net.layers)):
        if gw.shape != layer.w.shape or gb.shape != layer.b.shape:
            raise ValueError(f"gradient shapes for layer {i} not congruent")
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            raise ValueError(f"non-finite gradient in layer {i}; update rejected")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, (gw, gb) in enumerate(grads):
        layer = net.layers[i]
        mw, mb = state.m[i]
        vw, vb = state.v[i]
        mw *= b1
        mw += (1.0 - b1) * gw
        mb *= b1
        mb += (1.0 - b1) * gb
        vw *= b2
        vw += (1.0 - b2) * gw * gw
        vb *= b2
        vb += (1.0 - b2) * gb * gb
        layer.w -= state.lr * (mw / c1) / (np.sqrt(vw / c2) + state.eps)
        layer.b -= state.lr * (mb / c1) / (np.sqrt(vb / c2) + state.eps)


# ---------------------------------------------------------------------------
# Finite-difference oracle (test path; deliberately slow and independent)
# ---------------------------------------------------------------------------

def finite_diff_grad(loss_fn, net: DenseNet, h: float = 1e-5,
                     order: int = 2):
    """Central-difference gradient of loss_fn(net) for every parameter.

    order=2 is the classic two-point stencil; order=4 uses the five-point
    stencil, which tolerates a larger h (useful when the loss has both
    tiny gradient entries and strongly curved regions).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")

    def derivative(setter, orig):
        if order == 2:
            setter(orig + h)
            lp = loss_fn(net)
            setter(orig - h)
            lm = loss_fn(net)
            setter(orig)
            return (lp - lm) / (2.0 * h)
        vals = []
        for step in (-2.0, -1.0, 1.0, 2.0):
            setter(orig + step * h)
            vals.append(loss_fn(net))
        setter(orig)
        m2, m1, p1, p2 = vals
        return (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h)

    grads = []
    for layer in net.layers:
        gw = np.zeros_like(layer.w)
        it = np.nditer(layer.w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = layer.w[idx]

            def set_w(v, idx=idx, layer=layer):
                layer.w[idx] = v

            gw[idx] = derivative(set_w, orig)
        gb = np.zeros_like(layer.b)
        for j in range(layer.b.shape[0]):
            orig = layer.b[j]

            def set_b(v, j=j, layer=layer):
                layer.b[j] = v

            gb[j] = derivative(set_b, orig)
        grads.append((gw, gb))
    return grads


def grad_errors(analytic, numeric, abs_floor: float = 1e-8) -> tuple[float, float]:
    """(max relative error, max absolute error on near-zero entries).

    Entries with |analytic| >= abs_floor contribute to the relative error;
    entries below the floor are compared absolutely, which keeps near-zero
    elements from blowing up the relative metric.
    """
    worst_rel = 0.0
    worst_abs = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            if not a.size:
                continue
            diff = np.abs(a - n)
            small = np.abs(a) < abs_floor
            if small.any():
                worst_abs = max(worst_abs, float(diff[small].max()))
            if (~small).any():
                rel = diff[~small] / np.abs(a[~small])
                worst_rel = max(worst_rel, float(rel.max()))
    return worst_rel, worst_abs


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
# One JSON document:
#   {"meta": {"stage":..., "seed":..., "k":..., "created_at":...},
#    "nets": {name: {"layers": [{"act": tag, "w_shape": [r, c],
#                                "w": [...], "b": [...]}, ...]}}}
# Arrays are plain JSON numbers; json round-trips every finite float64
# exactly (shortest-repr serialization), which the tests pin down.

def net_to_dict(net: DenseNet) -> dict:
    return {
        "layers": [
            {
                "act": l.act,
                "w_shape": [int(l.w.shape[0]), int(l.w.shape[1])],
                "w": l.w.reshape(-1).tolist(),
                "b": l.b.tolist(),
            }
            for l in net.layers
        ]
    }


def net_from_dict(d: dict) -> DenseNet:
    layers = []
    for ld in d["layers"]:
        r, c = ld["w_shape"]
        w = np.array(ld["w"], dtype=np.float64).reshape(r, c)
        b = np.array(ld["b"], dtype=np.float64)
        layers.append(Layer(w, b, ld["act"]))
    return DenseNet(layers)


def save_checkpoint(path: str, meta: dict, nets: dict[str, DenseNet]) -> None:
    for name, net in nets.items():
        for i, l in enumerate(net.layers):
            if not (np.isfinite(l.w).all() and np.isfinite(l.b).all()):
                raise ValueError(f"net {name!r} layer {i} has non-finite parameters")
    doc = {"meta": meta, "nets": {name: net_to_dict(net) for name, net in nets.items()}}
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(doc, f, allow_nan=False)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict, dict[str, DenseNet]]:
    with open(path) as f:
        doc = json.load(f)
    nets = {name: net_from_dict(d) for name, d in doc["nets"].items()}
    return doc["meta"], nets


def nets_equal(a: DenseNet, b: DenseNet) -> bool:
    """Bitwise parameter equality (used for frozen-net assertions)."""
    if len(a.layers) != len(b.layers):
        return False
    for la, lb in zip(a.layers, b.layers):
        if la.act != lb.act:
            return False
        if la.w.shape != lb.w.shape or not np.array_equal(la.w, lb.w):
            return False
        if not np.array_equal(la.b, lb.b):
            return False
    return True
