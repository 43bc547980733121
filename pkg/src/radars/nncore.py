"""Small reverse-mode autodiff engine and quantized CNN building blocks.

Only what child networks and SuperNets need: conv2d ("same" padding),
fake quantization with a straight-through gradient, ReLU, global average
pooling, a dense head, softmax cross-entropy and the softmax mixture used by
the SuperNet.
"""

from __future__ import annotations

import json
import math
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GraphNotRecorded, MissingGrad, ShapeMismatch

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self):
        return tsum(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def parameter(values: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(np.array(values), requires_grad=True, name=name)


def _record(data: np.ndarray, parents: Sequence[Tensor], fn: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphNotRecorded("loss was not produced by a recorded graph")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# -- elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def power(a: Tensor, exponent: float) -> Tensor:
    return _record(
        a.data**exponent, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),)
    )


def tsum(a: Tensor) -> Tensor:
    return _record(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(x.data * mask, (x,), lambda g: (g * mask,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


# -- quantization ----------------------------------------------------------

@dataclass(frozen=True)
class QuantSpec:
    """Signed fixed point: one sign bit, ``int_bits`` integer and ``frac_bits`` fraction bits."""

    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.int_bits < 1 or self.frac_bits < 1:
            raise ValueError("int_bits and frac_bits must be >= 1")

    @property
    def low(self) -> float:
        return -(2.0**self.int_bits)

    @property
    def high(self) -> float:
        return 2.0**self.int_bits - 2.0**-self.frac_bits

    @property
    def step(self) -> float:
        return 2.0**-self.frac_bits


def quantize_values(x: np.ndarray, q: QuantSpec) -> np.ndarray:
    scale = 2.0**q.frac_bits
    # round half up, then clamp to the representable range
    return np.clip(np.floor(x * scale + 0.5) / scale, q.low, q.high).astype(x.dtype, copy=False)


def fake_quantize(x: Tensor, q: QuantSpec) -> Tensor:
    """Quantize on the forward pass; straight-through gradient inside the clamp range."""
    x = as_tensor(x)
    inside = (x.data >= q.low) & (x.data <= q.high)
    return _record(quantize_values(x.data, q), (x,), lambda g: (g * inside,))


# -- convolution / dense --------------------------------------------------

def conv_output_size(size: int, stride: int) -> int:
    return -(-size // stride)


def conv2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """"Same"-padded 2-D convolution, NCHW input, OIKK weights, odd K."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch("conv2d expects 4-d input and weights")
    B, C, H, W = x.shape
    O, CI, K, K2 = w.shape
    if CI != C or K != K2 or K % 2 == 0:
        raise ShapeMismatch(f"conv2d: input {x.shape} incompatible with weights {w.shape}")
    p = K // 2
    HO, WO = conv_output_size(H, stride), conv_output_size(W, stride)
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (K, K), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def grad_fn(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gwin = np.tensordot(g, w.data, axes=([1], [0]))  # B, HO, WO, C, K, K
        gxp = np.zeros_like(xp)
        for i in range(K):
            for j in range(K):
                gxp[:, :, i : i + stride * HO : stride, j : j + stride * WO : stride] += (
                    gwin[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        return gxp[:, :, p : p + H, p : p + W], gw

    return _record(np.ascontiguousarray(out), (x, w), grad_fn)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"dense: input {x.shape} incompatible with weights {w.shape}")
    return _record(
        x.data @ w.data + b.data,
        (x, w, b),
        lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0)),
    )


def global_avg_pool(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    n = H * W
    return _record(
        x.data.mean(axis=(2, 3)),
        (x,),
        lambda g: (np.broadcast_to(g[:, :, None, None] / n, x.shape).copy(),),
    )


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    B = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(B), labels].mean()

    def grad_fn(g):
        d = np.exp(logp)
        d[np.arange(B), labels] -= 1.0
        return (g * d / B,)

    return _record(np.asarray(loss, dtype=logits.data.dtype), (logits,), grad_fn)


def mixture(alpha: Tensor, outputs: Sequence[Tensor]) -> Tensor:
    """sum_c softmax(alpha)[c] * outputs[c]; differentiable in alpha and every output."""
    if alpha.shape != (len(outputs),):
        raise ShapeMismatch("one architecture weight per candidate output is required")
    shape = outputs[0].shape
    if any(o.shape != shape for o in outputs):
        raise ShapeMismatch("mixture candidates produce different shapes")
    w = softmax(alpha.data).astype(outputs[0].data.dtype)
    y = w[0] * outputs[0].data
    for wc, o in zip(w[1:], outputs[1:]):
        y = y + wc * o.data

    def grad_fn(g):
        inner = np.array([np.vdot(g, o.data) for o in outputs], dtype=np.float64)
        galpha = w * (inner - np.dot(w, inner))
        return (galpha.astype(alpha.data.dtype), *(wc * g for wc in w))

    return _record(y, (alpha, *outputs), grad_fn)


# -- layers and networks --------------------------------------------------

@dataclass
class ConvLayer:
    weights: Tensor
    quant: QuantSpec | None
    stride: int

    @property
    def kernel(self) -> int:
        return self.weights.shape[-1]

    def __call__(self, x: Tensor) -> Tensor:
        w = self.weights
        if self.quant is not None:
            x = fake_quantize(x, self.quant)
            w = fake_quantize(w, self.quant)
        return conv2d(x, w, self.stride)


def he_conv(rng: np.random.Generator, co: int, ci: int, k: int, dtype) -> np.ndarray:
    std = math.sqrt(2.0 / (ci * k * k))
    return (rng.standard_normal((co, ci, k, k)) * std).astype(dtype)


class Classifier:
    def __init__(self, rng: np.random.Generator, features: int, classes: int, dtype):
        std = math.sqrt(1.0 / features)
        self.weight = parameter((rng.standard_normal((features, classes)) * std).astype(dtype), "fc.w")
        self.bias = parameter(np.zeros(classes, dtype=dtype), "fc.b")

    def __call__(self, x: Tensor) -> Tensor:
        return dense(global_avg_pool(x), self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class ChildNetwork:
    """Stack of quantized convs with ReLU, global average pool and a dense head."""

    def __init__(self, layers: list[ConvLayer], head: Classifier):
        self.layers = layers
        self.head = head

    def forward(self, x) -> Tensor:
        h = as_tensor(x)
        for layer in self.layers:
            h = relu(layer(h))
        return self.head(h)

    __call__ = forward

    def loss(self, x, labels) -> Tensor:
        return softmax_cross_entropy(self.forward(x), labels)

    def parameters(self) -> list[Tensor]:
        return [l.weights for l in self.layers] + self.head.parameters()

    def weight_parameters(self) -> list[Tensor]:
        return self.parameters()

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def predict(self, x: np.ndarray, batch: int = 256) -> np.ndarray:
        out = []
        with no_grad():
            for i in range(0, len(x), batch):
                out.append(self.forward(x[i : i + batch]).data.argmax(axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def state(self) -> tuple[dict, dict[str, np.ndarray]]:
        header = {
            "kind": "child",
            "layers": [
                {"stride": l.stride, "quant": None if l.quant is None else [l.quant.int_bits, l.quant.frac_bits]}
                for l in self.layers
            ],
        }
        arrays = {f"conv{i}.w": l.weights.data for i, l in enumerate(self.layers)}
        arrays["fc.w"] = self.head.weight.data
        arrays["fc.b"] = self.head.bias.data
        return header, arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i, l in enumerate(self.layers):
            _assign(l.weights, arrays[f"conv{i}.w"])
        _assign(self.head.weight, arrays["fc.w"])
        _assign(self.head.bias, arrays["fc.b"])


def _assign(t: Tensor, values: np.ndarray) -> None:
    if t.shape != values.shape:
        raise ShapeMismatch(f"checkpoint array {values.shape} does not fit {t.shape}")
    t.data = values.astype(t.data.dtype)


def build_child_network(space, arch, seed: int = 0, dtype=np.float32) -> ChildNetwork:
    space.validate(arch)
    rng = np.random.default_rng(seed)
    layers = []
    for template, row in zip(space.layers, arch.choices):
        choice = space.resolve(row)
        w = parameter(he_conv(rng, template.out_channels, template.in_channels, choice.kernel, dtype))
        layers.append(ConvLayer(w, QuantSpec(choice.int_bits, choice.frac_bits), template.stride))
    head = Classifier(rng, space.layers[-1].out_channels, space.num_classes, dtype)
    return ChildNetwork(layers, head)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    params = list(params)
    for p in params:
        if p.grad is None:
            raise MissingGrad(f"parameter {p.name or p.shape} has no gradient")
    for p in params:
        p.data = p.data - np.asarray(lr, dtype=p.data.dtype) * p.grad.astype(p.data.dtype)
        p.grad = None


# -- checkpoints ------------------------------------------------------------

_MAGIC = b"RDN1"


def save_checkpoint(path: str | Path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``magic | u32 header length | JSON header | little-endian float32 blob``."""
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    head = json.dumps({**header, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + n].decode("utf-8"))
    blob = data[8 + n :]
    arrays = {}
    for e in header.pop("tensors"):
        chunk = blob[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(e["shape"]).copy()
    return header, arrays
