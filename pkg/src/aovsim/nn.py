"""Small dense networks with hand-written backprop and an Adam optimizer.

Inputs are row batches ``(batch, n_in)``; a 1-D input is treated as a batch of one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity", "tanh")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        # split by sign to stay finite for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class Cache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activations
    post: list[np.ndarray]  # activations
    squeeze: bool


class Mlp:
    def __init__(self, sizes: Sequence[int], hidden_act: str = "relu", out_act: str = "identity",
                 rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.acts = tuple([hidden_act] * (len(sizes) - 2) + [out_act])
        for a in self.acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            self.weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            self.biases.append(np.zeros(n_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x) -> tuple[np.ndarray, Cache]:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.sizes[0]}")
        cache = Cache([], [], [], squeeze)
        for w, b, act in zip(self.weights, self.biases, self.acts):
            cache.inputs.append(h)
            z = h @ w.T + b
            h = _act(act, z)
            cache.pre.append(z)
            cache.post.append(h)
        return (h[0] if squeeze else h), cache

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: Cache | None, grad_out) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` w.r.t. params (W, b interleaved) and the input."""
        if cache is None or not cache.inputs:
            raise ValueError("backward needs the cache from forward")
        g = np.asarray(grad_out, dtype=np.float64)
        if cache.squeeze:
            g = g[None, :]
        grads: list[np.ndarray] = []
        for k in reversed(range(len(self.weights))):
            dz = g * _act_grad(self.acts[k], cache.pre[k], cache.post[k])
            grads.append(dz.sum(axis=0))
            grads.append(dz.T @ cache.inputs[k])
            g = dz @ self.weights[k]
        grads.reverse()
        return grads, (g[0] if cache.squeeze else g)

    def copy(self) -> Mlp:
        other = Mlp.__new__(Mlp)
        other.sizes = self.sizes
        other.acts = self.acts
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        for dst, src in zip(self.params, params):
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch {src.shape} vs {dst.shape}")
            dst[...] = src

    def soft_update_from(self, source: Mlp, n: float) -> None:
        """``target <- n * source + (1 - n) * target`` in place."""
        if not 0 < n <= 1:
            raise ValueError(f"soft update rate must be in (0, 1], got {n}")
        for dst, src in zip(self.params, source.params):
            dst *= 1.0 - n
            dst += n * src


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """One bias-corrected update, descending ``grads`` in place."""
        if len(params) != len(grads):
            raise ValueError("params/grads length mismatch")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"shape mismatch {g.shape} vs {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def save_npz(path, **nets_and_opts) -> None:
    """Write networks/optimizers as flat arrays; shapes ride along in the npz header."""
    arrays = {}
    for name, obj in nets_and_opts.items():
        if isinstance(obj, Mlp):
            arrays[f"{name}/sizes"] = np.array(obj.sizes)
            arrays[f"{name}/acts"] = np.array(obj.acts)
            for k, p in enumerate(obj.params):
                arrays[f"{name}/p{k}"] = p
        elif isinstance(obj, Adam):
            arrays[f"{name}/t"] = np.array(obj.t)
            arrays[f"{name}/hyper"] = np.array([obj.lr, obj.beta1, obj.beta2, obj.eps])
            for k, (m, v) in enumerate(zip(obj.m, obj.v)):
                arrays[f"{name}/m{k}"] = m
                arrays[f"{name}/v{k}"] = v
        else:
            arrays[name] = np.asarray(obj)
    np.savez(path, **arrays)


def load_mlp(data, name: str) -> Mlp:
    sizes = [int(s) for s in data[f"{name}/sizes"]]
    acts = [str(a) for a in data[f"{name}/acts"]]
    net = Mlp(sizes, acts[0] if len(acts) > 1 else "relu", acts[-1])
    net.load_params([data[f"{name}/p{k}"] for k in range(2 * (len(sizes) - 1))])
    return net


def load_adam(data, name: str) -> Adam:
    lr, b1, b2, eps = (float(x) for x in data[f"{name}/hyper"])
    opt = Adam(lr, b1, b2, eps, t=int(data[f"{name}/t"]))
    k = 0
    while f"{name}/m{k}" in data:
        opt.m.append(np.array(data[f"{name}/m{k}"]))
        opt.v.append(np.array(data[f"{name}/v{k}"]))
        k += 1
    return opt
