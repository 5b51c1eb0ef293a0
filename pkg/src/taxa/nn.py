"""Network building blocks on top of the tensor core.

Modules own named Parameters; names are hierarchical dotted paths fixed at
construction ("cond.level3.layer1.attn.wq.weight"), unique within a model,
and double as checkpoint keys and RNG stream names, so re-building a module
with the same init seed reproduces its weights bit-exactly.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng as R
from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    """Base for parameterized blocks: registration, traversal, freezing."""

    def __init__(self, name: str):
        self.name = name
        self._params: list[Parameter] = []
        self._children: list[Module] = []

    def param(self, local: str, value: np.ndarray, trainable: bool = True) -> Parameter:
        p = Parameter(f"{self.name}.{local}", value, trainable=trainable)
        self._params.append(p)
        return p

    def child(self, module: "Module") -> "Module":
        self._children.append(module)
        return module

    def parameters(self) -> list[Parameter]:
        out = list(self._params)
        for c in self._children:
            out.extend(c.parameters())
        return out

    def named_parameters(self) -> dict[str, Parameter]:
        out = {}
        for p in self.parameters():
            if p.name in out:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            out[p.name] = p
        return out

    def set_frozen(self, flag: bool) -> None:
        for p in self.parameters():
            p.set_frozen(flag)

    @property
    def frozen(self) -> bool:
        ps = self.parameters()
        return bool(ps) and all(p.frozen for p in ps)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_hash_inputs(self) -> dict[str, bytes]:
        return {p.name: p.value.tobytes() for p in self.parameters()}


def _init_normal(seed: int, name: str, shape, std: float) -> np.ndarray:
    return R.normal(seed, f"init/{name}", shape) * std


class Linear(Module):
    def __init__(self, name: str, d_in: int, d_out: int, seed: int,
                 std: float = 0.02, zero: bool = False, bias: bool = True):
        super().__init__(name)
        w = np.zeros((d_out, d_in)) if zero else _init_normal(seed, f"{name}.weight", (d_out, d_in), std)
        self.weight = self.param("weight", w)
        self.bias = self.param("bias", np.zeros(d_out)) if bias else None
        self.d_in, self.d_out = d_in, d_out

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        x2 = T.reshape(x, (-1, self.d_in)) if x.ndim != 2 else x
        y = T.matmul(x2, T.transpose(self.weight.tensor(), (1, 0)))
        if self.bias is not None:
            y = y + self.bias.tensor()
        if x.ndim != 2:
            y = T.reshape(y, (*lead, self.d_out))
        return y


class LayerNorm(Module):
    def __init__(self, name: str, d: int):
        super().__init__(name)
        self.gain = self.param("gain", np.ones(d))
        self.bias = self.param("bias", np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain.tensor(), self.bias.tensor())


class ChannelNorm(Module):
    """LayerNorm over the channel axis of channel-major (C,B,H,W) maps."""

    def __init__(self, name: str, channels: int):
        super().__init__(name)
        self.gain = self.param("gain", np.ones(channels))
        self.bias = self.param("bias", np.zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain.tensor(), self.bias.tensor(), axis=0)


class Conv2d(Module):
    """Convolution over channel-major (C,B,H,W) activations."""

    def __init__(self, name: str, c_in: int, c_out: int, kernel: int, seed: int,
                 stride: int = 1, padding: int = 0, bias: bool = True, zero: bool = False):
        super().__init__(name)
        fan_in = c_in * kernel * kernel
        std = 1.0 / math.sqrt(fan_in)
        w = np.zeros((c_out, c_in, kernel, kernel)) if zero else \
            _init_normal(seed, f"{name}.weight", (c_out, c_in, kernel, kernel), std)
        self.weight = self.param("weight", w)
        self.bias = self.param("bias", np.zeros(c_out)) if bias else None
        self.stride, self.padding = stride, padding

    def __call__(self, x: Tensor) -> Tensor:
        y = T.conv2d(x, self.weight.tensor(), self.stride, self.padding)
        if self.bias is not None:
            b = T.reshape(self.bias.tensor(), (-1, 1, 1, 1))
            y = y + T.broadcast_to(b, y.shape)
        return y


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(B, L, d) -> (B*heads, L, d/heads)"""
    B, L, d = x.shape
    hd = d // heads
    x = T.reshape(x, (B, L, heads, hd))
    x = T.transpose(x, (0, 2, 1, 3))
    return T.reshape(x, (B * heads, L, hd))


def merge_heads(x: Tensor, heads: int) -> Tensor:
    """(B*heads, L, d/heads) -> (B, L, d)"""
    Bh, L, hd = x.shape
    B = Bh // heads
    x = T.reshape(x, (B, heads, L, hd))
    x = T.transpose(x, (0, 2, 1, 3))
    return T.reshape(x, (B, L, heads * hd))


class Attention(Module):
    """Multi-head attention; queries from `q_tokens`, keys/values from
    `kv_tokens` (pass the same tensor for self-attention).

    The output projection is zero-initialized when `zero_out` is set, so a
    fresh block contributes nothing until trained. Projections can carry
    low-rank adapters (see lora.attach_adapters); they are plain Linears here.
    """

    def __init__(self, name: str, d: int, heads: int, seed: int,
                 std: float = 0.02, zero_out: bool = False):
        super().__init__(name)
        if d % heads:
            raise ValueError(f"{name}: width {d} not divisible by heads {heads}")
        self.heads = heads
        self.scale = 1.0 / math.sqrt(d // heads)
        self.wq = self.child(Linear(f"{name}.wq", d, d, seed, std=std))
        self.wk = self.child(Linear(f"{name}.wk", d, d, seed, std=std))
        self.wv = self.child(Linear(f"{name}.wv", d, d, seed, std=std))
        self.wo = self.child(Linear(f"{name}.wo", d, d, seed, std=std, zero=zero_out))
        self._proj = {"q": self.wq, "k": self.wk, "v": self.wv, "o": self.wo}
        self.adapters: dict[str, object] = {}

    def _apply_proj(self, which: str, x: Tensor) -> Tensor:
        y = self._proj[which](x)
        ad = self.adapters.get(which)
        if ad is not None:
            y = y + ad.delta(x)
        return y

    def __call__(self, q_tokens: Tensor, kv_tokens: Tensor) -> Tensor:
        q = split_heads(self._apply_proj("q", q_tokens), self.heads)
        k = split_heads(self._apply_proj("k", kv_tokens), self.heads)
        v = split_heads(self._apply_proj("v", kv_tokens), self.heads)
        scores = T.matmul(q, T.transpose(k, (0, 2, 1))) * self.scale
        attn = T.softmax(scores, axis=-1)
        mixed = merge_heads(T.matmul(attn, v), self.heads)
        return self._apply_proj("o", mixed)


class TransformerLayer(Module):
    """Pre-LN transformer encoder layer: self-attention + feed-forward."""

    def __init__(self, name: str, d: int, heads: int, seed: int, std: float = 0.02, ff_mult: int = 4):
        super().__init__(name)
        self.ln1 = self.child(LayerNorm(f"{name}.ln1", d))
        self.attn = self.child(Attention(f"{name}.attn", d, heads, seed, std=std))
        self.ln2 = self.child(LayerNorm(f"{name}.ln2", d))
        self.ff1 = self.child(Linear(f"{name}.ff1", d, ff_mult * d, seed, std=std))
        self.ff2 = self.child(Linear(f"{name}.ff2", ff_mult * d, d, seed, std=std))

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h)
        x = x + self.ff2(T.gelu(self.ff1(self.ln2(x))))
        return x


def sinusoidal_embedding(t: np.ndarray, width: int, max_period: float) -> np.ndarray:
    """Classic sin/cos timestep features; t integer array (B,) -> (B, width)."""
    half = width // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)
