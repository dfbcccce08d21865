"""Plain-numpy tanh multilayer perceptrons with hand-written gradients.

Everything runs in float64 so repeated runs under one seed reproduce
bit-for-bit. Parameters are lists of (W, b) pairs; helpers flatten them
to a single vector for the optimizer and for checkpoint files.
"""

import numpy as np


def init_mlp(sizes, rng, final_scale=1.0):
    """Weights for a tanh net with the given layer sizes.

    sizes includes input and output widths, e.g. (88, 64, 64, 6). Hidden
    weights use 1/sqrt(fan_in) scaling; the last layer is additionally
    scaled by final_scale (small values keep an untrained policy gentle).
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"need at least (in, out) positive layer sizes, got {sizes}")
    params = []
    last = len(sizes) - 2
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = 1.0 / np.sqrt(n_in)
        if i == last:
            scale *= final_scale
        params.append((rng.standard_normal((n_in, n_out)) * scale, np.zeros(n_out)))
    return params


def mlp_sizes(params):
    return tuple([params[0][0].shape[0]] + [w.shape[1] for w, _ in params])


def mlp_forward(params, x):
    """(B, n_in) -> ((B, n_out), activation cache for mlp_backward)."""
    h = np.asarray(x, dtype=np.float64)
    cache = [h]
    for w, b in params[:-1]:
        h = np.tanh(h @ w + b)
        cache.append(h)
    w, b = params[-1]
    return h @ w + b, cache


def mlp_backward(params, cache, dout):
    """Parameter gradients given d(loss)/d(output).

    cache comes from the matching mlp_forward call. Returns a list of
    (dW, db) aligned with params.
    """
    grads = [None] * len(params)
    grads[-1] = (cache[-1].T @ dout, dout.sum(axis=0))
    dh = dout @ params[-1][0].T
    for i in range(len(params) - 2, -1, -1):
        dpre = dh * (1.0 - cache[i + 1] ** 2)  # tanh'(z) = 1 - tanh(z)^2
        grads[i] = (cache[i].T @ dpre, dpre.sum(axis=0))
        dh = dpre @ params[i][0].T
    return grads


def flatten_params(params):
    return np.concatenate([a.ravel() for w_b in params for a in w_b])


def unflatten_params(flat, sizes):
    """Inverse of flatten_params for a net with the given layer sizes."""
    flat = np.asarray(flat, dtype=np.float64)
    params, k = [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = flat[k:k + n_in * n_out].reshape(n_in, n_out).copy()
        k += n_in * n_out
        b = flat[k:k + n_out].copy()
        k += n_out
        params.append((w, b))
    if k != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, layout needs {k}")
    return params


def clip_grad_norm(flat_grad, max_norm):
    norm = float(np.linalg.norm(flat_grad))
    if max_norm > 0 and norm > max_norm:
        return flat_grad * (max_norm / norm), norm
    return flat_grad, norm


class Adam:
    """Standard Adam on a flat parameter vector, bias-corrected."""

    def __init__(self, size, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, flat, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return flat - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
