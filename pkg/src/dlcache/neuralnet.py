"""Small feed-forward Q-network: two sigmoid hidden layers, linear outputs,
Huber loss and Adam.

Checkpoint format (``Network.save``): a numpy ``.npz`` archive with

* ``layer_sizes`` -- int64 array ``[n_in, h1, h2, n_out]``
* ``theta``       -- float64 flat parameter vector (layout in ``_kernels``)
* optionally ``adam_m``, ``adam_v`` (same shape as ``theta``), ``adam_step``
  and ``adam_hparams`` ``[lr, beta1, beta2, eps]``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K


class Network:
    def __init__(self, layer_sizes=(6, 32, 32, 2), seed: int | np.random.SeedSequence = 0):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) != 4 or min(sizes) < 1:
            raise ValueError("layer_sizes must be (n_in, h1, h2, n_out) with positive entries")
        self.sizes = sizes
        self.theta = np.zeros(K.param_count(sizes))
        rng = np.random.default_rng(seed)
        for W in self.params[0::2]:
            limit = math.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-limit, limit, size=W.shape)

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def params(self) -> list[np.ndarray]:
        """[W1, b1, W2, b2, W3, b3] as views into the flat parameter vector."""
        return K.unpack(self.theta, self.sizes)

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ValueError(f"expected input length {self.n_inputs}, got shape {x.shape}")
        out = K.forward(self.theta, X, self.sizes)
        return out[0] if single else out

    __call__ = forward

    def save(self, path: str | Path, adam: "AdamState | None" = None) -> None:
        arrays = {"layer_sizes": np.array(self.sizes, dtype=np.int64), "theta": self.theta}
        if adam is not None:
            arrays.update(
                adam_m=adam.m,
                adam_v=adam.v,
                adam_step=np.array(adam.step, dtype=np.int64),
                adam_hparams=np.array([adam.lr, adam.beta1, adam.beta2, adam.eps]),
            )
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> tuple["Network", "AdamState | None"]:
        with np.load(path) as z:
            net = cls(tuple(int(s) for s in z["layer_sizes"]))
            net.theta[...] = z["theta"]
            adam = None
            if "adam_m" in z:
                lr, b1, b2, eps = (float(x) for x in z["adam_hparams"])
                adam = AdamState(net.theta.shape[0], lr, b1, b2, eps)
                adam.m[...] = z["adam_m"]
                adam.v[...] = z["adam_v"]
                adam.step = int(z["adam_step"])
        return net, adam


@dataclass
class AdamState:
    n_params: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(init=False, repr=False)
    v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.m = np.zeros(self.n_params)
        self.v = np.zeros(self.n_params)

    @classmethod
    def for_network(cls, net: Network, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(net.theta.shape[0], lr, **kw)


def forward(net: Network, x) -> np.ndarray:
    return net.forward(x)


def huber(e, delta: float = 1.0):
    ae = np.abs(e)
    return np.where(ae <= delta, 0.5 * e * e, delta * (ae - 0.5 * delta))


def loss_and_grad(net: Network, X, T, mask, delta: float = 1.0) -> tuple[float, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return K.loss_grad(net.theta, X, np.asarray(T, dtype=np.float64),
                       np.asarray(mask, dtype=np.float64), net.sizes, delta)


def train_batch(net: Network, adam: AdamState, X, T, mask, delta: float = 1.0) -> float:
    """One Adam step on the mean Huber loss of the masked (taken-action) outputs."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if X.shape[1] != net.n_inputs:
        raise ValueError(f"expected input width {net.n_inputs}, got {X.shape[1]}")
    loss, grad = loss_and_grad(net, X, T, mask, delta)
    if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise FloatingPointError(
            f"non-finite loss {loss!r} (max |target|={np.max(np.abs(T)):.3g}, "
            f"max |theta|={np.max(np.abs(net.theta)):.3g})"
        )
    adam.step += 1
    K.adam(net.theta, grad, adam.m, adam.v, adam.step, adam.lr, adam.beta1, adam.beta2, adam.eps)
    return loss


def copy_parameters(src: Network, dst: Network) -> None:
    if src.sizes != dst.sizes:
        raise ValueError(f"shape mismatch: {src.sizes} vs {dst.sizes}")
    dst.theta[...] = src.theta
