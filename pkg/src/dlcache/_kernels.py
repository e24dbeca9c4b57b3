"""Hot numeric kernels for the 2-hidden-layer Q-network.

Every kernel exists twice: a numba ``@njit`` loop version and a pure numpy
version.  The numba path is used unless ``DLCACHE_DISABLE_JIT`` is set to a
truthy value or numba cannot be imported.  :func:`set_backend` switches at
runtime (tests and the benchmark use it).

Parameters of a network with layer sizes ``(n_in, h1, h2, n_out)`` are stored
in one flat float64 vector, laid out as ``W1, b1, W2, b2, W3, b3`` with the
weight matrices in row-major ``(fan_in, fan_out)`` order.
"""
from __future__ import annotations

import math
import os

import numpy as np

_DISABLED = os.environ.get("DLCACHE_DISABLE_JIT", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("disabled by DLCACHE_DISABLE_JIT")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"


def set_backend(name: str) -> None:
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend unavailable")
    BACKEND = name


def param_count(sizes) -> int:
    n_in, h1, h2, n_out = sizes
    return n_in * h1 + h1 + h1 * h2 + h2 + h2 * n_out + n_out


def unpack(theta: np.ndarray, sizes):
    """Views (W1, b1, W2, b2, W3, b3) into ``theta``."""
    n_in, h1, h2, n_out = sizes
    out = []
    o = 0
    for rows, cols in ((n_in, h1), (1, h1), (h1, h2), (1, h2), (h2, n_out), (1, n_out)):
        n = rows * cols
        block = theta[o:o + n]
        out.append(block if rows == 1 else block.reshape(rows, cols))
        o += n
    return out


# -- numpy reference path ---------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward_numpy(theta, X, sizes):
    W1, b1, W2, b2, W3, b3 = unpack(theta, sizes)
    a1 = _sigmoid(X @ W1 + b1)
    a2 = _sigmoid(a1 @ W2 + b2)
    return a2 @ W3 + b3


def loss_grad_numpy(theta, X, T, M, sizes, delta=1.0):
    """Mean masked Huber loss and its gradient w.r.t. ``theta``."""
    W1, b1, W2, b2, W3, b3 = unpack(theta, sizes)
    B = X.shape[0]
    a1 = _sigmoid(X @ W1 + b1)
    a2 = _sigmoid(a1 @ W2 + b2)
    out = a2 @ W3 + b3
    e = (out - T) * M
    ae = np.abs(e)
    quad = np.minimum(ae, delta)
    loss = float(np.sum(0.5 * quad * quad + delta * (ae - quad))) / B
    d_out = np.clip(e, -delta, delta) * M / B
    grad = np.empty_like(theta)
    gW1, gb1, gW2, gb2, gW3, gb3 = unpack(grad, sizes)
    gW3[...] = a2.T @ d_out
    gb3[...] = d_out.sum(axis=0)
    dz2 = (d_out @ W3.T) * a2 * (1.0 - a2)
    gW2[...] = a1.T @ dz2
    gb2[...] = dz2.sum(axis=0)
    dz1 = (dz2 @ W2.T) * a1 * (1.0 - a1)
    gW1[...] = X.T @ dz1
    gb1[...] = dz1.sum(axis=0)
    return loss, grad


def adam_numpy(theta, grad, m, v, step, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


# -- numba path -------------------------------------------------------------


@njit(cache=True)
def _nb_sigmoid_inplace(Z, b):
    for i in range(Z.shape[0]):
        for j in range(Z.shape[1]):
            z = Z[i, j] + b[j]
            if z >= 0.0:
                Z[i, j] = 1.0 / (1.0 + math.exp(-z))
            else:
                ez = math.exp(z)
                Z[i, j] = ez / (1.0 + ez)


@njit(cache=True)
def _nb_views(theta, n_in, h1, h2, n_out):
    o_b1 = n_in * h1
    o_w2 = o_b1 + h1
    o_b2 = o_w2 + h1 * h2
    o_w3 = o_b2 + h2
    o_b3 = o_w3 + h2 * n_out
    W1 = theta[:o_b1].reshape((n_in, h1))
    b1 = theta[o_b1:o_w2]
    W2 = theta[o_w2:o_b2].reshape((h1, h2))
    b2 = theta[o_b2:o_w3]
    W3 = theta[o_w3:o_b3].reshape((h2, n_out))
    b3 = theta[o_b3:o_b3 + n_out]
    return W1, b1, W2, b2, W3, b3


@njit(cache=True)
def _nb_forward(theta, X, n_in, h1, h2, n_out):
    W1, b1, W2, b2, W3, b3 = _nb_views(theta, n_in, h1, h2, n_out)
    A1 = np.dot(X, W1)
    _nb_sigmoid_inplace(A1, b1)
    A2 = np.dot(A1, W2)
    _nb_sigmoid_inplace(A2, b2)
    OUT = np.dot(A2, W3)
    for i in range(OUT.shape[0]):
        for j in range(n_out):
            OUT[i, j] += b3[j]
    return A1, A2, OUT


@njit(cache=True)
def _nb_loss_grad(theta, X, T, M, n_in, h1, h2, n_out, delta, grad):
    B = X.shape[0]
    W1, b1, W2, b2, W3, b3 = _nb_views(theta, n_in, h1, h2, n_out)
    A1, A2, OUT = _nb_forward(theta, X, n_in, h1, h2, n_out)
    loss = 0.0
    D = np.empty((B, n_out))
    for i in range(B):
        for a in range(n_out):
            e = (OUT[i, a] - T[i, a]) * M[i, a]
            ae = abs(e)
            if ae <= delta:
                loss += 0.5 * e * e
                D[i, a] = e * M[i, a] / B
            else:
                loss += delta * (ae - 0.5 * delta)
                D[i, a] = (delta if e > 0 else -delta) * M[i, a] / B
    gW1, gb1, gW2, gb2, gW3, gb3 = _nb_views(grad, n_in, h1, h2, n_out)
    gW3[:, :] = np.dot(A2.T, D)
    Z2 = np.dot(D, W3.T)
    Z1 = np.empty((B, h1))
    for a in range(n_out):
        s = 0.0
        for i in range(B):
            s += D[i, a]
        gb3[a] = s
    for i in range(B):
        for k in range(h2):
            Z2[i, k] *= A2[i, k] * (1.0 - A2[i, k])
    gW2[:, :] = np.dot(A1.T, Z2)
    for k in range(h2):
        s = 0.0
        for i in range(B):
            s += Z2[i, k]
        gb2[k] = s
    Z1[:, :] = np.dot(Z2, W2.T)
    for i in range(B):
        for j in range(h1):
            Z1[i, j] *= A1[i, j] * (1.0 - A1[i, j])
    gW1[:, :] = np.dot(X.T, Z1)
    for j in range(h1):
        s = 0.0
        for i in range(B):
            s += Z1[i, j]
        gb1[j] = s
    return loss / B


@njit(cache=True)
def _nb_adam(theta, grad, m, v, step, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for p in range(theta.shape[0]):
        g = grad[p]
        m[p] = beta1 * m[p] + (1.0 - beta1) * g
        v[p] = beta2 * v[p] + (1.0 - beta2) * g * g
        theta[p] -= lr * (m[p] / c1) / (math.sqrt(v[p] / c2) + eps)


def forward_numba(theta, X, sizes):
    n_in, h1, h2, n_out = sizes
    return _nb_forward(theta, np.ascontiguousarray(X, dtype=np.float64), n_in, h1, h2, n_out)[2]


def loss_grad_numba(theta, X, T, M, sizes, delta=1.0):
    n_in, h1, h2, n_out = sizes
    grad = np.empty_like(theta)
    loss = _nb_loss_grad(
        theta,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(T, dtype=np.float64),
        np.ascontiguousarray(M, dtype=np.float64),
        n_in, h1, h2, n_out, float(delta), grad,
    )
    return float(loss), grad


def adam_numba(theta, grad, m, v, step, lr, beta1, beta2, eps):
    _nb_adam(theta, grad, m, v, step, lr, beta1, beta2, eps)


# -- dispatch ----------------------------------------------------------------


def forward(theta, X, sizes):
    if BACKEND == "numba":
        return forward_numba(theta, X, sizes)
    return forward_numpy(theta, X, sizes)


def loss_grad(theta, X, T, M, sizes, delta=1.0):
    if BACKEND == "numba":
        return loss_grad_numba(theta, X, T, M, sizes, delta)
    return loss_grad_numpy(theta, X, T, M, sizes, delta)


def adam(theta, grad, m, v, step, lr, beta1, beta2, eps):
    if BACKEND == "numba":
        adam_numba(theta, grad, m, v, step, lr, beta1, beta2, eps)
    else:
        adam_numpy(theta, grad, m, v, step, lr, beta1, beta2, eps)
