"""Minimal dense-tensor engine with reverse-mode gradients.

Tensors wrap contiguous numpy arrays (float32 by default; float64 is allowed
so the finite-difference oracle can run in double precision). Each operation
records a backward closure on its output node; ``Tensor.backward()`` walks the
graph in reverse topological order. The op set is exactly what the training
recipes need: 2-D convolution, fully-connected, ReLU, global average pooling,
temperature softmax (plus the elementwise/reduction glue to build losses).

Layout conventions are fixed globally: row-major storage, images are
batch x channels x height x width.
"""

from __future__ import annotations

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform; message carries both shapes."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (teacher forwards, evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype in (np.float32, np.float64):
        return np.ascontiguousarray(arr)
    return np.ascontiguousarray(arr, dtype=np.float32)


class Tensor:
    """A dense N-d array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def _accumulate(self, g, own=False):
        """Add ``g`` into the grad buffer; ``own=True`` donates a fresh array."""
        if self.grad is None:
            if own and g.dtype == self.data.dtype:
                self.grad = g
            else:
                self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode pass from a scalar root; accumulates into ``.grad``."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar root, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _make(data, parents, backward):
    """Build an op output; records the graph only when grads are live."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _wants(t: Tensor) -> bool:
    """True when a gradient must be produced for this operand."""
    return t.requires_grad or bool(t._parents)


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / reduction glue

def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if _wants(a):
            a._accumulate(_unbroadcast(g, a.data.shape))
        if _wants(b):
            b._accumulate(_unbroadcast(g, b.data.shape))
    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if _wants(a):
            a._accumulate(_unbroadcast(g, a.data.shape))
        if _wants(b):
            b._accumulate(-_unbroadcast(g, b.data.shape))
    return _make(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if _wants(a):
            a._accumulate(_unbroadcast(g * b.data, a.data.shape), own=True)
        if _wants(b):
            b._accumulate(_unbroadcast(g * a.data, b.data.shape), own=True)
    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    def backward(g):
        if _wants(a):
            a._accumulate(g * s, own=True)
    return _make(a.data * s, (a,), backward)


def add_const(a: Tensor, c: float) -> Tensor:
    def backward(g):
        if _wants(a):
            a._accumulate(g)
    return _make(a.data + c, (a,), backward)


def summed(a: Tensor) -> Tensor:
    def backward(g):
        if _wants(a):
            a._accumulate(np.broadcast_to(g, a.data.shape))
    return _make(a.data.sum(), (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g):
        if _wants(a):
            a._accumulate(np.broadcast_to(g / n, a.data.shape))
    return _make(a.data.mean(), (a,), backward)


def log(a: Tensor, floor: float = 1e-12) -> Tensor:
    """Natural log with a clamp at ``floor``; subgradient 0 below the clamp."""
    clipped = np.maximum(a.data, floor)

    def backward(g):
        if _wants(a):
            da = g / clipped
            da[a.data < floor] = 0.0
            a._accumulate(da, own=True)
    return _make(np.log(clipped), (a,), backward)


# ---------------------------------------------------------------------------
# network ops

def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is defined as 0 (strict > mask)
    mask = a.data > 0

    def backward(g):
        if _wants(a):
            a._accumulate(g * mask, own=True)
    return _make(a.data * mask, (a,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fully-connected layer: x (B,I) @ w (I,O) + b (O,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"linear: input {x.data.shape} incompatible with weight {w.data.shape}"
        )

    def backward(g):
        if _wants(x):
            x._accumulate(g @ w.data.T, own=True)
        if _wants(w):
            w._accumulate(x.data.T @ g, own=True)
        if _wants(b):
            b._accumulate(g.sum(axis=0), own=True)
    return _make(x.data @ w.data + b.data, (x, w, b), backward)


def _conv_out_hw(H, W, k, stride, pad):
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    return Ho, Wo


def _im2col_nhwc(xp, k, stride, Ho, Wo):
    """xp: padded input (B,Hp,Wp,C) -> columns (B*Ho*Wo, k*k*C)."""
    B = xp.shape[0]
    C = xp.shape[3]
    sB, sH, sW, sC = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(B, Ho, Wo, k, k, C),
        strides=(sB, stride * sH, stride * sW, sH, sW, sC))
    return np.ascontiguousarray(view).reshape(B * Ho * Wo, k * k * C)


def _col2im_nhwc(dcols, B, H, W, C, k, stride, pad, Ho, Wo):
    """Fold columns back; returns the input gradient in NHWC layout."""
    dxp = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=dcols.dtype)
    dcols = dcols.reshape(B, Ho, Wo, k, k, C)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                dcols[:, :, :, i, j]
    if pad:
        return dxp[:, pad:-pad, pad:-pad]
    return dxp


def conv2d_nhwc(x: Tensor, w: Tensor, b: Tensor, stride: int = 1,
                padding: int = 0) -> Tensor:
    """Channels-last convolution core: x (B,H,W,C), w (Co,C,k,k) -> (B,Ho,Wo,Co)."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d: input must be 4-d, got {x.data.shape}")
    B, H, W, C = x.data.shape
    Co, Cw, k, k2 = w.data.shape
    if Cw != C or k != k2:
        raise ShapeError(
            f"conv2d: weight {w.data.shape} incompatible with input {x.data.shape}"
        )
    Ho, Wo = _conv_out_hw(H, W, k, stride, padding)
    if Ho <= 0 or Wo <= 0:
        raise ShapeError(
            f"conv2d: output would be {Ho}x{Wo} for input {H}x{W}, k={k}, "
            f"stride={stride}, pad={padding}"
        )
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    cols = _im2col_nhwc(xp, k, stride, Ho, Wo)          # (B*Ho*Wo, k*k*C)
    wmat = np.ascontiguousarray(
        w.data.transpose(2, 3, 1, 0).reshape(k * k * C, Co))
    out = (cols @ wmat + b.data).reshape(B, Ho, Wo, Co)

    def backward(g):
        g2 = g.reshape(-1, Co)
        if _wants(w):
            dw = (cols.T @ g2).reshape(k, k, C, Co).transpose(3, 2, 0, 1)
            w._accumulate(np.ascontiguousarray(dw), own=True)
        if _wants(b):
            b._accumulate(g2.sum(axis=0))
        if _wants(x):
            dcols = g2 @ wmat.T
            x._accumulate(_col2im_nhwc(dcols, B, H, W, C, k, stride, padding, Ho, Wo), own=True)
    return _make(out, (x, w, b), backward)


def nchw_to_nhwc(x: Tensor) -> Tensor:
    def backward(g):
        if _wants(x):
            x._accumulate(np.ascontiguousarray(g.transpose(0, 3, 1, 2)), own=True)
    return _make(np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)), (x,), backward)


def nhwc_to_nchw(x: Tensor) -> Tensor:
    def backward(g):
        if _wants(x):
            x._accumulate(np.ascontiguousarray(g.transpose(0, 2, 3, 1)), own=True)
    return _make(np.ascontiguousarray(x.data.transpose(0, 3, 1, 2)), (x,), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution; x (B,C,H,W), w (Co,C,k,k), b (Co,). im2col + matmul."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d: input must be BxCxHxW, got {x.data.shape}")
    return nhwc_to_nchw(conv2d_nhwc(nchw_to_nhwc(x), w, b, stride, padding))


def gap(x: Tensor) -> Tensor:
    """Global average pooling: (B,C,H,W) -> (B,C)."""
    if x.data.ndim != 4:
        raise ShapeError(f"gap: input must be BxCxHxW, got {x.data.shape}")
    B, C, H, W = x.data.shape

    def backward(g):
        if _wants(x):
            x._accumulate(np.broadcast_to(g[:, :, None, None] / (H * W), x.data.shape))
    return _make(x.data.mean(axis=(2, 3)), (x,), backward)


def gap_nhwc(x: Tensor) -> Tensor:
    """Global average pooling over channels-last maps: (B,H,W,C) -> (B,C)."""
    if x.data.ndim != 4:
        raise ShapeError(f"gap: input must be 4-d, got {x.data.shape}")
    B, H, W, C = x.data.shape

    def backward(g):
        if _wants(x):
            x._accumulate(np.broadcast_to(g[:, None, None, :] / (H * W), x.data.shape))
    return _make(x.data.mean(axis=(1, 2)), (x,), backward)


def _softmax_raw(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_with_temperature(logits: Tensor, tau: float) -> Tensor:
    """Row softmax of logits / tau. Temperature never changes the row argmax."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    p = _softmax_raw(logits.data / tau)

    def backward(g):
        if _wants(logits):
            inner = (g * p).sum(axis=-1, keepdims=True)
            logits._accumulate((g - inner) * p / tau, own=True)
    return _make(p, (logits,), backward)


def log_softmax_with_temperature(logits: Tensor, tau: float) -> Tensor:
    """Numerically stable log softmax of logits / tau."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = logits.data / tau
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def backward(g):
        if _wants(logits):
            p = np.exp(out)
            logits._accumulate((g - g.sum(axis=-1, keepdims=True) * p) / tau, own=True)
    return _make(out, (logits,), backward)


def softmax(logits, tau: float = 1.0):
    """Temperature softmax on a plain array (no graph); convenience for eval."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    arr = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return _softmax_raw(arr / tau)
