"""Noise schedule, forward corruption process, the conditional noise
predictor, and the training loss.

The denoiser is a small U-shaped conv net: two downsampling stages
(channels c1 -> c2), a bottleneck whose spatial tokens cross-attend to the
condition token sequence (the only place conditioning enters), and two
upsampling stages with skip connections. A sinusoidal timestep embedding
(width d, max period 10*T) is projected and added at each stage. All four
attention projections carry low-rank adapters.

Pixels are centered to [-1, 1] inside the training/sampling pipeline; the
forward_noise formula itself is exact and scale-agnostic.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from . import rng as R
from . import tensor as T
from .conditioning import ConditionStack
from .errors import NonFiniteError, ShapeError
from .lora import attach_adapters
from .nn import Attention, ChannelNorm, Conv2d, LayerNorm, Linear, Module, sinusoidal_embedding
from .tensor import Tensor


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear variance schedule; arrays are 1-indexed via t-1."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray  # sigma_t^2 = beta_t

    def config(self) -> dict:
        return {"T": self.T, "beta1": float(self.beta[0]), "betaT": float(self.beta[-1])}


def build_schedule(timesteps: int, beta1: float = 1e-4, betaT: float = 0.02) -> NoiseSchedule:
    if timesteps < 2:
        raise ValueError(f"schedule needs T >= 2, got {timesteps}")
    if not (0.0 < beta1 <= betaT < 1.0):
        raise ValueError(f"need 0 < beta1 <= betaT < 1, got {beta1}, {betaT}")
    beta = np.linspace(beta1, betaT, timesteps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(timesteps, beta, alpha, alpha_bar, np.sqrt(beta))


def forward_noise(x0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps; t scalar or (B,), 1-indexed."""
    if x0.shape != eps.shape:
        raise ShapeError(f"forward_noise: x0 {x0.shape} vs eps {eps.shape}")
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > schedule.T):
        raise ValueError(f"t outside [1, {schedule.T}]")
    ab = schedule.alpha_bar[t - 1]
    if t.ndim:  # per-element timestep for a batch
        ab = ab.reshape((-1,) + (1,) * (x0.ndim - 1))
    a = np.sqrt(ab).astype(x0.dtype)
    b = np.sqrt(1.0 - ab).astype(x0.dtype)
    return a * x0 + b * eps


@contextlib.contextmanager
def _layer(name: str):
    try:
        yield
    except NonFiniteError as e:
        raise NonFiniteError(f"layer {name!r}: {e}") from None


class DenoiserNet(Module):
    """Conditional noise predictor; output shape equals input shape."""

    def __init__(self, seed: int, channels=(32, 64), d: int = 64, heads: int = 4,
                 max_period: float = 2500.0, lora_rank: int = 4, lora_alpha: float = 1.0):
        super().__init__("net")
        c1, c2 = channels
        if c2 != d:
            raise ValueError(f"bottleneck channels {c2} must equal condition width {d}")
        self.d = d
        self.max_period = max_period
        half = max(4, c1 // 2)

        self.temb1 = self.child(Linear("net.temb.l1", d, d, seed))
        self.temb2 = self.child(Linear("net.temb.l2", d, d, seed))

        self.stem = self.child(Conv2d("net.d1.conv", 3, c1, 3, seed, padding=1))
        self.norm_d1 = self.child(ChannelNorm("net.d1.norm", c1))
        self.t_d1 = self.child(Linear("net.d1.temb", d, c1, seed))
        self.down1 = self.child(Conv2d("net.d1.down", c1, c1, 3, seed, stride=2, padding=1))

        self.conv_d2 = self.child(Conv2d("net.d2.conv", c1, c2, 3, seed, padding=1))
        self.norm_d2 = self.child(ChannelNorm("net.d2.norm", c2))
        self.t_d2 = self.child(Linear("net.d2.temb", d, c2, seed))
        self.down2 = self.child(Conv2d("net.d2.down", c2, c2, 3, seed, stride=2, padding=1))

        self.norm_mid = self.child(ChannelNorm("net.mid.norm", c2))
        self.t_mid = self.child(Linear("net.mid.temb", d, c2, seed))
        self.cond_norm = self.child(LayerNorm("net.mid.kvnorm", d))
        self.attn = self.child(Attention("net.mid.attn", d, heads, seed, zero_out=True))
        self.adapters = attach_adapters(self.attn, "mid_attn", d, seed,
                                        rank=lora_rank, alpha=lora_alpha)
        for ad in self.adapters:
            self.child(ad)
        self.conv_mid = self.child(Conv2d("net.mid.conv", c2, c2, 3, seed, padding=1))

        self.mix_u2 = self.child(Conv2d("net.u2.mix", c2 + c2, c1, 1, seed))
        self.conv_u2 = self.child(Conv2d("net.u2.conv", c1, c1, 3, seed, padding=1))
        self.norm_u2 = self.child(ChannelNorm("net.u2.norm", c1))
        self.t_u2 = self.child(Linear("net.u2.temb", d, c1, seed))

        self.mix_u1 = self.child(Conv2d("net.u1.mix", c1 + c1, half, 1, seed))
        self.conv_u1 = self.child(Conv2d("net.u1.conv", half, half, 3, seed, padding=1))
        self.norm_u1 = self.child(ChannelNorm("net.u1.norm", half))
        self.t_u1 = self.child(Linear("net.u1.temb", d, half, seed))
        self.head = self.child(Conv2d("net.head", half, 3, 3, seed, padding=1, zero=True))

    def backbone_parameters(self):
        """Everything except the low-rank adapters."""
        skip = {p.name for ad in self.adapters for p in ad.parameters()}
        return [p for p in self.parameters() if p.name not in skip]

    def _inject(self, h: Tensor, lin: Linear, tfeat: Tensor) -> Tensor:
        v = lin(tfeat)  # (B, C)
        B, C = v.shape
        v = T.reshape(v, (B, C, 1, 1))
        return h + T.broadcast_to(v, h.shape)

    def __call__(self, x: Tensor, t: np.ndarray, cond: Tensor) -> Tensor:
        B = x.shape[0]
        if cond.ndim == 2:
            cond = T.reshape(cond, (1, *cond.shape))
            cond = T.broadcast_to(cond, (B, *cond.data.shape[1:]))
        feats = sinusoidal_embedding(np.atleast_1d(t), self.d, self.max_period)
        with _layer("temb"):
            tfeat = T.gelu(self.temb2(T.gelu(self.temb1(Tensor(feats)))))

        with _layer("down1"):
            h = self.stem(x)
            h = T.gelu(self._inject(self.norm_d1(h), self.t_d1, tfeat))
            skip1 = h                     # (B, c1, H, W)
            h = self.down1(h)             # (B, c1, H/2, W/2)
        with _layer("down2"):
            h = self.conv_d2(h)
            h = T.gelu(self._inject(self.norm_d2(h), self.t_d2, tfeat))
            skip2 = h                     # (B, c2, H/2, W/2)
            h = self.down2(h)             # (B, c2, H/4, W/4)

        with _layer("bottleneck"):
            h = T.gelu(self._inject(self.norm_mid(h), self.t_mid, tfeat))
            Bc, C, Hq, Wq = h.shape
            tokens = T.reshape(T.transpose(h, (0, 2, 3, 1)), (Bc, Hq * Wq, C))
            kv = self.cond_norm(cond)
            tokens = tokens + self.attn(tokens, kv)
            h = T.transpose(T.reshape(tokens, (Bc, Hq, Wq, C)), (0, 3, 1, 2))
            h = T.gelu(self.conv_mid(h))

        with _layer("up2"):
            h = T.upsample2x(h)
            h = T.concat([h, skip2], axis=1)
            h = self.conv_u2(self.mix_u2(h))
            h = T.gelu(self._inject(self.norm_u2(h), self.t_u2, tfeat))
        with _layer("up1"):
            h = T.upsample2x(h)
            h = T.concat([h, skip1], axis=1)
            h = self.conv_u1(self.mix_u1(h))
            h = T.gelu(self._inject(self.norm_u1(h), self.t_u1, tfeat))
            out = self.head(h)
        return out


def predict_noise(net: DenoiserNet, x_t: np.ndarray, t, cond: Tensor) -> np.ndarray:
    """Sampling-path helper: numpy in, numpy out, no graph kept."""
    with T.no_grad():
        return net(Tensor(x_t), np.atleast_1d(t), cond).data


def center(images01: np.ndarray) -> np.ndarray:
    """[0,1] HWC images -> [-1,1] CHW model space."""
    x = np.asarray(images01, dtype=T.dtype())
    return np.ascontiguousarray(np.moveaxis(x, -1, 1)) * 2.0 - 1.0


def uncenter(x: np.ndarray) -> np.ndarray:
    """[-1,1] CHW model space -> [0,1] HWC, clamped."""
    return np.clip((np.moveaxis(x, 1, -1) + 1.0) / 2.0, 0.0, 1.0)


def training_loss(net: DenoiserNet, stack: ConditionStack, schedule: NoiseSchedule,
                  images01: np.ndarray, paths, level: int, *,
                  seed: int, tag: str, dropout_p: float = 0.0) -> Tensor:
    """Mean over the batch of ||eps - eps_hat(x_t, t, c^(level))||^2.

    t ~ U[1, T] and eps ~ N(0, I) per element, drawn from streams keyed by
    (seed, tag), so a given (seed, tag) pair always yields the same loss.
    """
    if len(paths) == 0:
        raise ValueError("training_loss: empty batch")
    x0 = center(images01)
    B = x0.shape[0]
    t = R.integers(seed, f"{tag}/t", 1, schedule.T + 1, (B,))
    eps = R.normal(seed, f"{tag}/eps", x0.shape, dtype=x0.dtype)
    x_t = forward_noise(x0, t, eps, schedule)
    drop = None
    if dropout_p > 0.0:
        drop = R.uniform(seed, f"{tag}/drop", (B,)) < dropout_p
    cond = stack.encode_batch(paths, level, drop_mask=drop)
    eps_hat = net(Tensor(x_t), t, cond)
    diff = eps_hat - Tensor(eps)
    per_element = T.tsum(diff * diff, axis=(1, 2, 3))
    return T.tmean(per_element)
