"""Dense tensors with reverse-mode automatic differentiation.

numpy carries the array arithmetic; the differentiation rules, the graph
bookkeeping and the shape/finiteness contracts live here. Everything is
single-threaded-deterministic: the same seed and op sequence produce
bit-identical arrays.

Precision is a process-global switch (64-bit for gradient checks, 32-bit
for training runs); arrays are cast when a Tensor is created.

Broadcasting in elementwise ops is restricted to leading batch dimensions:
operands must have equal shapes, or one must be a scalar, or the smaller
shape must be a suffix of the larger. Anything richer goes through an
explicit broadcast_to.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GraphConsumedError, NonFiniteError, ShapeError

_DTYPE = np.float64
_GRAD_ENABLED = True


def set_precision(name: str) -> None:
    """Select the global float width: "f32" or "f64"."""
    global _DTYPE
    if name == "f32":
        _DTYPE = np.float32
    elif name == "f64":
        _DTYPE = np.float64
    else:
        raise ValueError(f"unknown precision {name!r} (use 'f32' or 'f64')")


def get_precision() -> str:
    return "f32" if _DTYPE == np.float32 else "f64"


def dtype() -> type:
    return _DTYPE


@contextlib.contextmanager
def precision(name: str):
    old = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(old)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; ops return plain leaf tensors."""
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An n-d array node. Leaf tensors hold data; op results also carry the
    saved closures needed to push gradients to their parents."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_freed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype != _DTYPE:
            arr = arr.astype(_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._freed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, grad={self.requires_grad})"

    # operator sugar; constants are wrapped as non-grad leaves
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, _as_tensor(1.0 / other))
        raise TypeError("Tensor division only by python scalars")

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DTYPE))


def _result(data: np.ndarray, op: str, parents: Sequence[Tensor], backward: Callable | None) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite result in op {op!r}")
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = needs
    out._op = op
    out._freed = False
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _acc_new(t: Tensor, g: np.ndarray) -> None:
    # caller guarantees g is freshly allocated and owned by nobody else
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


def _acc_alias(t: Tensor, g: np.ndarray) -> None:
    # g may alias another tensor's grad buffer; copy before taking ownership
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# elementwise with leading-dim broadcasting


def _check_leading_broadcast(op: str, sa: tuple, sb: tuple) -> None:
    if sa == sb:
        return
    la, lb = len(sa), len(sb)
    if int(np.prod(sb)) == 1 or int(np.prod(sa)) == 1:
        return
    small, big = (sb, sa) if lb <= la else (sa, sb)
    if big[len(big) - len(small):] == small:
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} are not leading-broadcast compatible")


def _reduce_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g over the leading axes that were broadcast, back to `shape`."""
    if g.shape == shape:
        return g.copy()
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    # remaining mismatch can only be a size-1 operand vs non-trivial g
    if g.shape != shape:
        g = g.sum().reshape(shape) if int(np.prod(shape)) == 1 else g.reshape(shape)
    return np.ascontiguousarray(g)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_leading_broadcast("add", a.shape, b.shape)
    data = a.data + b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            if g.shape == a.shape:
                _acc_alias(a, g)
            else:
                _acc_new(a, _reduce_to_shape(g, a.shape))
        if b.requires_grad:
            if g.shape == b.shape:
                _acc_alias(b, g)
            else:
                _acc_new(b, _reduce_to_shape(g, b.shape))

    return _result(data, "add", (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_leading_broadcast("sub", a.shape, b.shape)
    data = a.data - b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            if g.shape == a.shape:
                _acc_alias(a, g)
            else:
                _acc_new(a, _reduce_to_shape(g, a.shape))
        if b.requires_grad:
            if g.shape == b.shape:
                _acc_new(b, -g)
            else:
                _acc_new(b, -_reduce_to_shape(g, b.shape))

    return _result(data, "sub", (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_leading_broadcast("mul", a.shape, b.shape)
    data = a.data * b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            ga = g * b.data
            _acc_new(a, ga if ga.shape == a.shape else _reduce_to_shape(ga, a.shape))
        if b.requires_grad:
            gb = g * a.data
            _acc_new(b, gb if gb.shape == b.shape else _reduce_to_shape(gb, b.shape))

    return _result(data, "mul", (a, b), backward)


# ---------------------------------------------------------------------------
# matmul: 2-D/3-D combinations, folded to plain GEMMs where possible


def matmul(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape
    if a.ndim < 2 or b.ndim < 2 or a.ndim > 3 or b.ndim > 3:
        raise ShapeError(f"matmul: unsupported ranks {sa} @ {sb}")
    if sa[-1] != sb[-2]:
        raise ShapeError(f"matmul: inner dims differ, {sa} @ {sb}")
    if a.ndim == 3 and b.ndim == 3 and sa[0] != sb[0]:
        raise ShapeError(f"matmul: batch dims differ, {sa} @ {sb}")

    if a.ndim == 2 and b.ndim == 2:
        data = a.data @ b.data

        def backward(out):
            g = out.grad
            if a.requires_grad:
                _acc_new(a, g @ b.data.T)
            if b.requires_grad:
                _acc_new(b, a.data.T @ g)

    elif a.ndim == 3 and b.ndim == 2:
        B, n, m = sa
        data = (a.data.reshape(B * n, m) @ b.data).reshape(B, n, sb[1])

        def backward(out):
            g2 = out.grad.reshape(B * n, sb[1])
            if a.requires_grad:
                _acc_new(a, (g2 @ b.data.T).reshape(B, n, m))
            if b.requires_grad:
                _acc_new(b, a.data.reshape(B * n, m).T @ g2)

    elif a.ndim == 2 and b.ndim == 3:
        B, m, k = sb
        bt = np.ascontiguousarray(b.data.transpose(1, 0, 2)).reshape(m, B * k)
        out2 = a.data @ bt
        data = np.ascontiguousarray(out2.reshape(sa[0], B, k).transpose(1, 0, 2))

        def backward(out):
            g = out.grad  # (B, n, k)
            gt = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(sa[0], B * k)
            if a.requires_grad:
                _acc_new(a, gt @ bt.T)
            if b.requires_grad:
                db = a.data.T @ gt  # (m, B*k)
                _acc_new(b, np.ascontiguousarray(db.reshape(m, B, k).transpose(1, 0, 2)))

    else:  # 3-D @ 3-D, equal batch
        data = np.matmul(a.data, b.data)

        def backward(out):
            g = out.grad
            if a.requires_grad:
                _acc_new(a, np.matmul(g, b.data.transpose(0, 2, 1)))
            if b.requires_grad:
                _acc_new(b, np.matmul(a.data.transpose(0, 2, 1), g))

    return _result(data, "matmul", (a, b), backward)


# ---------------------------------------------------------------------------
# convolution, pooling, upsampling (NCHW)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation in channel-major layout: x (Cin,B,H,W),
    w (Cout,Cin,kh,kw) -> (Cout,B,Ho,Wo).

    Channel-major keeps every GEMM a single 2-D BLAS call with no layout
    transposes on either side of the pass; the whole network runs in this
    layout."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d input and kernel, got {x.shape} and {w.shape}")
    Cin, B, H, W = x.shape
    Cout, Cin_w, kh, kw = w.shape
    if Cin != Cin_w:
        raise ShapeError(f"conv2d: channel mismatch, input {x.shape} vs kernel {w.shape}")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d: kernel {w.shape} does not fit input {x.shape}")
    P = Ho * Wo

    if kh == 1 and kw == 1 and padding == 0 and stride == 1:
        # pure channel mixing: one GEMM, no im2col
        w2 = w.data.reshape(Cout, Cin)
        x2 = x.data.reshape(Cin, B * P)
        data = (w2 @ x2).reshape(Cout, B, Ho, Wo)

        def backward(out):
            g2 = out.grad.reshape(Cout, B * P)
            if w.requires_grad:
                _acc_new(w, (g2 @ x2.T).reshape(Cout, Cin, 1, 1))
            if x.requires_grad:
                _acc_new(x, (w2.T @ g2).reshape(Cin, B, H, W))

        return _result(data, "conv2d", (x, w), backward)

    if padding:
        xp = np.zeros((Cin, B, H + 2 * padding, W + 2 * padding), dtype=x.data.dtype)
        xp[:, :, padding:padding + H, padding:padding + W] = x.data
    else:
        xp = x.data
    cols = np.empty((Cin, kh, kw, B, P), dtype=x.data.dtype)
    hi, wi = Ho * stride, Wo * stride
    for ki in range(kh):
        for kj in range(kw):
            cols[:, ki, kj] = xp[:, :, ki:ki + hi:stride, kj:kj + wi:stride].reshape(Cin, B, P)
    c2 = cols.reshape(Cin * kh * kw, B * P)
    w2 = w.data.reshape(Cout, Cin * kh * kw)
    data = (w2 @ c2).reshape(Cout, B, Ho, Wo)

    def backward(out):
        g2 = out.grad.reshape(Cout, B * P)
        if w.requires_grad:
            _acc_new(w, (g2 @ c2.T).reshape(Cout, Cin, kh, kw))
        if x.requires_grad:
            dc = (w2.T @ g2).reshape(Cin, kh, kw, B, Ho, Wo)
            dxp = np.zeros_like(xp)
            for ki in range(kh):
                for kj in range(kw):
                    dxp[:, :, ki:ki + hi:stride, kj:kj + wi:stride] += dc[:, ki, kj]
            if padding:
                dxp = np.ascontiguousarray(dxp[:, :, padding:padding + H, padding:padding + W])
            _acc_new(x, dxp)

    return _result(data, "conv2d", (x, w), backward)


def avg_pool2x(x: Tensor) -> Tensor:
    """2x2 average pooling, NCHW; spatial dims must be even."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avg_pool2x: odd spatial dims in {x.shape}")
    data = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def backward(out):
        g = out.grad * 0.25
        up = np.broadcast_to(g[:, :, :, None, :, None], (B, C, H // 2, 2, W // 2, 2))
        _acc_new(x, np.ascontiguousarray(up).reshape(B, C, H, W))

    return _result(data, "avg_pool2x", (x,), backward)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling, NCHW."""
    B, C, H, W = x.shape
    rep = np.broadcast_to(x.data[:, :, :, None, :, None], (B, C, H, 2, W, 2))
    data = np.ascontiguousarray(rep).reshape(B, C, 2 * H, 2 * W)

    def backward(out):
        g = out.grad.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5))
        _acc_new(x, g)

    return _result(data, "upsample2x", (x,), backward)


# ---------------------------------------------------------------------------
# normalization and activations


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5, axis: int = -1) -> Tensor:
    """Normalize over one axis, then scale and shift along it."""
    axis = axis % x.ndim
    D = x.shape[axis]
    if gain.shape != (D,) or bias.shape != (D,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match feature dim {D}")
    bshape = [1] * x.ndim
    bshape[axis] = D
    gainb = gain.data.reshape(bshape)
    biasb = bias.data.reshape(bshape)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gainb + biasb

    def backward(out):
        g = out.grad
        red = tuple(i for i in range(x.ndim) if i != axis)
        if gain.requires_grad:
            _acc_new(gain, np.ascontiguousarray((g * xhat).sum(axis=red)))
        if bias.requires_grad:
            _acc_new(bias, np.ascontiguousarray(g.sum(axis=red)))
        if x.requires_grad:
            dxhat = g * gainb
            m1 = dxhat.mean(axis=axis, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=axis, keepdims=True)
            _acc_new(x, inv * (dxhat - m1 - xhat * m2))

    return _result(data, "layer_norm", (x, gain, bias), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(out):
        g = out.grad
        dot = (g * data).sum(axis=axis, keepdims=True)
        _acc_new(x, data * (g - dot))

    return _result(data, "softmax", (x,), backward)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """tanh-form GELU; the forward tanh is cached so backward is polynomial."""
    v = x.data
    u = _GELU_C * (v + _GELU_A * v * v * v)
    th = np.tanh(u)
    data = 0.5 * v * (1.0 + th)

    def backward(out):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * v * v)
        d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du
        _acc_new(x, out.grad * d)

    return _result(data, "gelu", (x,), backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements; returns a scalar tensor."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = diff.size
    data = np.asarray((diff * diff).sum() / n, dtype=a.data.dtype)

    def backward(out):
        g = out.grad * (2.0 / n)
        if a.requires_grad:
            _acc_new(a, g * diff)
        if b.requires_grad:
            _acc_new(b, -g * diff)

    return _result(data, "mse", (a, b), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean NLL of integer labels under softmax(logits); logits (N, K)."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-d, got {logits.shape}")
    labels = np.asarray(labels)
    N, K = logits.shape
    if labels.shape != (N,):
        raise ShapeError(f"cross_entropy: labels {labels.shape} do not match logits {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    se = e.sum(axis=1, keepdims=True)
    logp = z - np.log(se)
    data = np.asarray(-logp[np.arange(N), labels].mean(), dtype=logits.data.dtype)

    def backward(out):
        p = e / se
        p[np.arange(N), labels] -= 1.0
        _acc_new(logits, out.grad * p / N)

    return _result(data, "cross_entropy", (logits,), backward)


# ---------------------------------------------------------------------------
# reductions and reshaping


def _axis_tuple(axis, ndim) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axis_tuple(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(out):
        g = out.grad
        if not keepdims:
            shape = list(x.shape)
            for a in axes:
                shape[a] = 1
            g = g.reshape(shape)
        _acc_new(x, np.ascontiguousarray(np.broadcast_to(g, x.shape)))

    return _result(np.asarray(data), "sum", (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axis_tuple(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    data = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(out):
        g = out.grad / count
        if not keepdims:
            shape = list(x.shape)
            for a in axes:
                shape[a] = 1
            g = g.reshape(shape)
        _acc_new(x, np.ascontiguousarray(np.broadcast_to(g, x.shape)))

    return _result(np.asarray(data), "mean", (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def backward(out):
        _acc_alias(x, out.grad.reshape(x.shape))

    return _result(data, "reshape", (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    data = np.ascontiguousarray(x.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def backward(out):
        _acc_new(x, np.ascontiguousarray(out.grad.transpose(inv)))

    return _result(data, "transpose", (x,), backward)


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        data = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {shape}")

    def backward(out):
        g = out.grad
        extra = len(shape) - x.ndim
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        ones = tuple(i for i, d in enumerate(x.shape) if d == 1 and g.shape[i] != 1)
        if ones:
            g = g.sum(axis=ones, keepdims=True)
        _acc_new(x, np.ascontiguousarray(g))

    return _result(data, "broadcast_to", (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward(out):
        offset = 0
        for t, s in zip(tensors, sizes):
            if t.requires_grad:
                sl = [slice(None)] * out.grad.ndim
                sl[axis] = slice(offset, offset + s)
                _acc_alias(t, out.grad[tuple(sl)])
            offset += s

    return _result(data, "concat", tuple(tensors), backward)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """out[k] = x[idx[k]]; backward scatter-adds into the selected rows."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: index must be 1-d, got {idx.shape}")
    data = x.data[idx]

    def backward(out):
        g = np.zeros_like(x.data)
        np.add.at(g, idx, out.grad)
        _acc_new(x, g)

    return _result(data, "gather_rows", (x,), backward)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable grad-requiring leaf.

    Visits nodes in exact reverse topological order, then frees the saved
    graph; a second call on the same loss raises GraphConsumedError.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._freed:
        raise GraphConsumedError("backward: graph already consumed")
    if not loss.requires_grad:
        loss._freed = True
        return

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node)
        # free saved activations; grads on leaves survive
        if node._parents:
            node._parents = ()
            node._backward = None
            node.grad = None
            node._freed = True
    loss._freed = True


# ---------------------------------------------------------------------------
# parameters and gradient checking


class Parameter:
    """A named, trainable leaf. `frozen` overrides `trainable`: a frozen
    parameter never receives gradient and is never touched by an optimizer."""

    __slots__ = ("name", "trainable", "_frozen", "_leaf")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.trainable = trainable
        self._frozen = False
        self._leaf = Tensor(value, requires_grad=trainable)

    @property
    def value(self) -> np.ndarray:
        return self._leaf.data

    @value.setter
    def value(self, arr: np.ndarray) -> None:
        self._leaf.data = np.asarray(arr, dtype=self._leaf.data.dtype).reshape(self._leaf.data.shape)

    @property
    def grad(self) -> np.ndarray | None:
        return self._leaf.grad

    @property
    def frozen(self) -> bool:
        return self._frozen

    def set_frozen(self, flag: bool) -> None:
        self._frozen = bool(flag)
        self._leaf.requires_grad = self.trainable and not self._frozen

    @property
    def shape(self):
        return self._leaf.data.shape

    def tensor(self) -> Tensor:
        return self._leaf

    def zero_grad(self) -> None:
        self._leaf.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, frozen={self._frozen})"


def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, h: float = 1e-4) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |central|).

    f must be scalar-valued and smooth at `point`. Raises NonFiniteError if
    any difference evaluation is non-finite (primitive ops check their own
    outputs, so that surfaces naturally).
    """
    leaf = Tensor(point.data.copy(), requires_grad=True)
    out = f(leaf)
    backward(out)
    analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy()

    flat = leaf.data.reshape(-1)
    worst = 0.0
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(leaf).item()
            flat[i] = orig - h
            fm = f(leaf).item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteError("grad_check: non-finite difference evaluation")
            num = (fp - fm) / (2.0 * h)
            err = abs(analytic.reshape(-1)[i] - num) / max(1.0, abs(num))
            worst = max(worst, err)
    return worst
