"""Low-rank adaptation of attention projections.

The adapted projection is W z + alpha * A B^T z with A (d_out, r) drawn
from N(0, 0.02^2) and B (d_in, r) zero, so a fresh adapter is a functional
no-op. Adapters are trained only during the first progressive stage and
stay frozen (bit-identical) through every later stage.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .nn import Attention, Module, _init_normal
from .tensor import Tensor

DEFAULT_RANK = 4
DEFAULT_ALPHA = 1.0


class LoraAdapter(Module):
    """One adapter per projection; parameter names are lora.<block>.<proj>.{A,B}."""

    def __init__(self, block: str, proj: str, d_in: int, d_out: int, seed: int,
                 rank: int = DEFAULT_RANK, alpha: float = DEFAULT_ALPHA):
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        super().__init__(f"lora.{block}.{proj}")
        self.rank = rank
        self.alpha = alpha
        self.target = f"{block}.{proj}"
        self.A = self.param("A", _init_normal(seed, f"{self.name}.A", (d_out, rank), 0.02))
        self.B = self.param("B", np.zeros((d_in, rank)))

    def delta(self, x: Tensor) -> Tensor:
        """alpha * (x @ B) @ A^T for row-major activations x (..., d_in)."""
        low = T.matmul(x, self.B.tensor())
        return T.matmul(low, T.transpose(self.A.tensor(), (1, 0))) * self.alpha

    def freeze(self) -> None:
        self.set_frozen(True)

    def update_matrix(self) -> np.ndarray:
        """The dense update alpha * A B^T (rank <= r by construction)."""
        return self.alpha * (self.A.value @ self.B.value.T)


def apply(adapter: LoraAdapter, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Column-vector form of the adapted projection: W z + alpha * A B^T z.

    z may be (d_in,) or (d_in, n); W is never modified.
    """
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if w.shape[1] != z.shape[0]:
        raise ShapeError(f"lora apply: W {w.shape} does not match z {z.shape}")
    if adapter.A.shape[0] != w.shape[0] or adapter.B.shape[0] != w.shape[1]:
        raise ShapeError(
            f"lora apply: adapter A {adapter.A.shape} / B {adapter.B.shape} "
            f"do not match W {w.shape}")
    return w @ z + adapter.alpha * (adapter.A.value @ (adapter.B.value.T @ z))


def attach_adapters(attn: Attention, block: str, d: int, seed: int,
                    rank: int = DEFAULT_RANK, alpha: float = DEFAULT_ALPHA) -> list[LoraAdapter]:
    """One adapter per q/k/v/output projection of an attention block."""
    adapters = []
    for proj in ("q", "k", "v", "o"):
        ad = LoraAdapter(block, proj, d, d, seed, rank=rank, alpha=alpha)
        attn.adapters[proj] = ad
        adapters.append(ad)
    return adapters
