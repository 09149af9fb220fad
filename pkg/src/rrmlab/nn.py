"""Minimal fully-connected networks with manual backprop, Adam and file IO.

Everything is float64 numpy.  Networks are ReLU MLPs with a linear head;
gradients flow through a cache returned by ``forward``.  Checkpoints are a
small self-describing binary container so training runs on one machine
load bit-identically on another.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CKPT_MAGIC = b"NNCK"
CKPT_VERSION = 1
_KIND_MLP = 0
_KIND_ARRAY = 1


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return x - np.expand_dims(logsumexp(x, axis=axis), axis)


@dataclass
class Mlp:
    """ReLU MLP; ``weights[l]`` has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def create(cls, sizes, rng: np.random.Generator) -> "Mlp":
        """Glorot-uniform weights, zero biases."""
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x: np.ndarray):
        """Returns (output, cache); cache feeds :meth:`backward`."""
        x = np.asarray(x, dtype=np.float64)
        h = x
        inputs = []
        preacts = []
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            preacts.append(z)
            h = relu(z) if l < last else z
        return h, (inputs, preacts)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, dy: np.ndarray):
        """Gradients for ``params()`` order plus the input gradient."""
        inputs, preacts = cache
        grads: list[np.ndarray] = []
        dh = np.asarray(dy, dtype=np.float64)
        last = len(self.weights) - 1
        for l in range(last, -1, -1):
            dz = dh if l == last else dh * (preacts[l] > 0)
            grads.insert(0, dz.sum(axis=0))                # db
            grads.insert(0, inputs[l].T @ dz)              # dW
            dh = dz @ self.weights[l].T
        return grads, dh

    def copy(self) -> "Mlp":
        return Mlp(weights=[w.copy() for w in self.weights],
                   biases=[b.copy() for b in self.biases])


def soft_update(target: Mlp, online: Mlp, rho: float) -> None:
    """Polyak step in place: target <- (1 - rho) target + rho online."""
    for t, o in zip(target.params(), online.params()):
        t *= 1.0 - rho
        t += rho * o


@dataclass
class Adam:
    """Adam over a fixed list of parameter arrays, updated in place."""

    params: list[np.ndarray]
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# -- checkpoint container --------------------------------------------------


def _pack_u32(*vals) -> bytes:
    return struct.pack(f"<{len(vals)}I", *vals)


def _write_array(chunks: list[bytes], arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    chunks.append(_pack_u32(arr.ndim, *arr.shape))
    chunks.append(arr.astype("<f8").tobytes())


def save_checkpoint(path, entries: dict) -> None:
    """Write named Mlps and arrays to a portable little-endian container."""
    chunks: list[bytes] = [CKPT_MAGIC, _pack_u32(CKPT_VERSION, len(entries))]
    for name, obj in entries.items():
        encoded = name.encode("utf-8")
        chunks.append(_pack_u32(len(encoded)))
        chunks.append(encoded)
        if isinstance(obj, Mlp):
            chunks.append(struct.pack("<B", _KIND_MLP))
            chunks.append(_pack_u32(len(obj.weights)))
            for w in obj.weights:
                chunks.append(_pack_u32(w.shape[0], w.shape[1]))
            for w, b in zip(obj.weights, obj.biases):
                chunks.append(w.astype("<f8").tobytes())
                chunks.append(b.astype("<f8").tobytes())
        else:
            chunks.append(struct.pack("<B", _KIND_ARRAY))
            _write_array(chunks, np.asarray(obj))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise ValueError(f"truncated checkpoint {self.path}")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def u32(self, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else vals

    def u8(self) -> int:
        return self.take(1)[0]

    def f64(self, shape) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        flat = np.frombuffer(self.take(8 * n), dtype="<f8")
        return flat.reshape(shape).astype(np.float64)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _Reader(data, path)
    if rd.take(4) != CKPT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint file (bad magic)")
    version = rd.u32()
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version} in {path}")
    n_entries = rd.u32()
    entries: dict = {}
    for _ in range(n_entries):
        name = rd.take(rd.u32()).decode("utf-8")
        kind = rd.u8()
        if kind == _KIND_MLP:
            n_layers = rd.u32()
            shapes = [rd.u32(2) for _ in range(n_layers)]
            weights, biases = [], []
            for fan_in, fan_out in shapes:
                weights.append(rd.f64((fan_in, fan_out)))
                biases.append(rd.f64((fan_out,)))
            entries[name] = Mlp(weights=weights, biases=biases)
        elif kind == _KIND_ARRAY:
            ndim = rd.u32()
            shape = tuple(rd.u32(ndim)) if ndim > 1 else ((rd.u32(),) if ndim == 1 else ())
            entries[name] = rd.f64(shape)
        else:
            raise ValueError(f"unknown entry kind {kind} in {path}")
    if rd.off != len(data):
        raise ValueError(f"trailing bytes in checkpoint {path}")
    return entries
