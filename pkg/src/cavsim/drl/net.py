"""Plain-numpy MLP with ReLU hidden layers, manual backprop and Adam.

The networks here are small (a few hundred to a few ten-thousand weights), so
dense numpy is both the simplest and the fastest option at this scale.
Checkpoints use a self-describing little-endian binary format (magic VQN1).
"""

from __future__ import annotations

import struct

import numpy as np

CHECKPOINT_MAGIC = b"VQN1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class MlpNet:
    """Fully connected net: ReLU on hidden layers, identity on the output."""

    def __init__(self, sizes, rng=None):
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(s <= 0 for s in sizes):
            raise ValueError("layer sizes must be positive")
        self.sizes = sizes
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            # He initialization suits the ReLU hidden stack.
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out)))
            self.biases.append(np.zeros(n_out))
        self.adam_m = [np.zeros_like(p) for p in self._params()]
        self.adam_v = [np.zeros_like(p) for p in self._params()]
        self.step_count = 0

    def _params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @property
    def n_layers(self):
        return len(self.weights)

    def forward(self, x):
        """Q-values for a single observation vector."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.sizes[0]:
            raise ValueError(f"expected input of size {self.sizes[0]}, got {x.size}")
        return self.batch_forward(x[None, :])[0][0]

    def batch_forward(self, X, with_cache=False):
        """Forward pass over a batch; optionally returns layer activations."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected batch of size-{self.sizes[0]} rows")
        acts = [X]
        h = X
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        if with_cache:
            return h, acts
        return h, None

    def backward(self, acts, grad_out):
        """Gradients of a scalar loss given d(loss)/d(output) for the batch."""
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        delta = np.asarray(grad_out, dtype=float)
        for k in range(self.n_layers - 1, -1, -1):
            grads_w[k] = acts[k].T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (acts[k] > 0.0)
        return grads_w, grads_b

    def adam_update(self, grads_w, grads_b, lr):
        """Standard Adam step over all parameters."""
        self.step_count += 1
        t = self.step_count
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.append(gw)
            grads.append(gb)
        params = self._params()
        for p, g, m, v in zip(params, grads, self.adam_m, self.adam_v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            m_hat = m / (1.0 - ADAM_BETA1 ** t)
            v_hat = v / (1.0 - ADAM_BETA2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    def copy_from(self, other, rate=1.0):
        """Polyak update toward `other`; rate=1 is a hard copy."""
        for dst, src in zip(self._params(), other._params()):
            if rate >= 1.0:
                dst[...] = src
            else:
                dst *= 1.0 - rate
                dst += rate * src

    def clone(self):
        twin = MlpNet(self.sizes, rng=np.random.default_rng(0))
        twin.copy_from(self)
        twin.adam_m = [m.copy() for m in self.adam_m]
        twin.adam_v = [v.copy() for v in self.adam_v]
        twin.step_count = self.step_count
        return twin


def mlp_forward(net: MlpNet, x):
    return net.forward(x)


def save_checkpoint(net: MlpNet, path, with_adam=False):
    """Binary checkpoint: magic, layer count, per-layer dims, row-major
    float64 weights then biases, optional Adam state."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", net.n_layers))
        for w in net.weights:
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(struct.pack("<B", 1 if with_adam else 0))
        if with_adam:
            fh.write(struct.pack("<Q", net.step_count))
            for acc in net.adam_m + net.adam_v:
                fh.write(np.ascontiguousarray(acc, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("bad checkpoint magic")
    off = 4
    (n_layers,) = struct.unpack_from("<I", data, off)
    off += 4
    dims = []
    for _ in range(n_layers):
        dims.append(struct.unpack_from("<II", data, off))
        off += 8
    sizes = [dims[0][0]] + [d[1] for d in dims]
    for a, b in zip(dims[:-1], dims[1:]):
        if a[1] != b[0]:
            raise ValueError("checkpoint layer dimensions do not chain")
    net = MlpNet(sizes)
    for k, (n_in, n_out) in enumerate(dims):
        w = np.frombuffer(data, "<f8", n_in * n_out, off).reshape(n_in, n_out)
        off += 8 * n_in * n_out
        b = np.frombuffer(data, "<f8", n_out, off)
        off += 8 * n_out
        net.weights[k] = w.copy()
        net.biases[k] = b.copy()
    (has_adam,) = struct.unpack_from("<B", data, off)
    off += 1
    if has_adam:
        (net.step_count,) = struct.unpack_from("<Q", data, off)
        off += 8
        accs = []
        for p in net._params() * 2:
            acc = np.frombuffer(data, "<f8", p.size, off).reshape(p.shape)
            off += 8 * p.size
            accs.append(acc.copy())
        half = len(accs) // 2
        net.adam_m = accs[:half]
        net.adam_v = accs[half:]
    return net
