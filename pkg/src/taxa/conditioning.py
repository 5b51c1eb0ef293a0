"""Conditioning signal c^(i): frozen base embedder, per-level trainable
refiner modules, output summation across trained levels, sequential
freezing.

The base embedder maps each token of a truncated taxon name to a fixed
random unit vector (seeded at init, immutable afterwards); a level module
is two transformer layers plus a zero-initialized output projection, so a
fresh module contributes exactly nothing. encode(path, i) sums module
outputs for levels 0..min(i, usable) in ascending order, where usable is
the deepest trained-or-active level; everything deeper stays inert.
"""

from __future__ import annotations

import re

import numpy as np

from . import rng as R
from . import tensor as T
from .errors import StageOrderError
from .nn import Linear, Module, TransformerLayer
from .taxonomy import TaxonPath
from .tensor import Tensor

_TOKEN_SPLIT = re.compile(r"[\s-]+")


class BaseEmbedder:
    """Deterministic token embeddings for truncated names; permanently frozen.

    Tokens are the "-"/whitespace-split pieces of the truncated name, each
    mapped through a seeded hash stream to a fixed unit-norm vector; short
    sequences are padded with a dedicated pad vector up to length L.
    """

    def __init__(self, seed: int, length: int = 8, width: int = 64):
        self.seed = seed
        self.length = length
        self.width = width
        self._tokens: dict[str, np.ndarray] = {}
        self._prefixes: dict[str, np.ndarray] = {}
        v = R.normal(seed, "embed/pad", (width,))
        self._pad = v / np.linalg.norm(v)

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._tokens.get(token)
        if vec is None:
            raw = R.normal(self.seed, f"embed/tok/{token}", (self.width,))
            vec = raw / np.linalg.norm(raw)
            self._tokens[token] = vec
        return vec

    def embed(self, truncated: str) -> np.ndarray:
        """(L, d) float64 embedding of one truncated name; cached."""
        out = self._prefixes.get(truncated)
        if out is None:
            toks = [t for t in _TOKEN_SPLIT.split(truncated) if t][: self.length]
            rows = [self.token_vector(t) for t in toks]
            rows.extend([self._pad] * (self.length - len(rows)))
            out = np.stack(rows)
            self._prefixes[truncated] = out
        return out

    def embed_path(self, path: TaxonPath, i: int) -> list[np.ndarray]:
        """Per-level embeddings E_0..E_i; E_j depends only on prefix(path, j)."""
        return [self.embed(path.prefix(j)) for j in range(i + 1)]


class LevelModule(Module):
    """Two transformer layers plus a zero-initialized output projection."""

    def __init__(self, level: int, d: int, heads: int, seed: int, length: int):
        super().__init__(f"cond.level{level}")
        self.level = level
        self.layer1 = self.child(TransformerLayer(f"{self.name}.layer1", d, heads, seed))
        self.layer2 = self.child(TransformerLayer(f"{self.name}.layer2", d, heads, seed))
        self.out_proj = self.child(Linear(f"{self.name}.out", d, d, seed, zero=True))

    def __call__(self, tokens: Tensor) -> Tensor:
        return self.out_proj(self.layer2(self.layer1(tokens)))


def null_condition(length: int, width: int) -> Tensor:
    """All-zeros condition token sequence (the additive identity)."""
    return Tensor(np.zeros((length, width)))


class ConditionStack:
    """Modules M_0..M_{depth-1} with a trained-through cursor and an active
    (currently-trainable) level set. Gradients only ever flow into the
    active modules; frozen module outputs are cached per truncated name."""

    def __init__(self, embedder: BaseEmbedder, depth: int, heads: int, seed: int):
        self.embedder = embedder
        self.depth = depth
        self.d = embedder.width
        self.length = embedder.length
        self.modules = [LevelModule(i, self.d, heads, seed, self.length) for i in range(depth)]
        self.trained_through = -1
        self.active_levels: set[int] = set()
        self._cache: dict[tuple[int, str], np.ndarray] = {}

    # ---- training-state management -----------------------------------

    def set_active(self, levels) -> None:
        levels = set(levels)
        for lvl in levels:
            if self.modules[lvl].frozen:
                raise StageOrderError(f"level {lvl} is frozen and cannot be activated")
        self.active_levels = levels
        self._cache.clear()

    def freeze_through(self, i: int) -> None:
        if i > self.trained_through + 1 and not all(
                lvl in self.active_levels or self.modules[lvl].frozen
                for lvl in range(self.trained_through + 1, i + 1)):
            raise StageOrderError(
                f"freeze_through({i}) out of order: trained_through={self.trained_through}")
        for lvl in range(i + 1):
            self.modules[lvl].set_frozen(True)
        self.trained_through = max(self.trained_through, i)
        self.active_levels -= set(range(i + 1))
        self._cache.clear()

    def clear_cache(self) -> None:
        self._cache.clear()

    @property
    def usable(self) -> int:
        active = max(self.active_levels) if self.active_levels else -1
        return max(self.trained_through, active)

    def parameters(self):
        out = []
        for m in self.modules:
            out.extend(m.parameters())
        return out

    # ---- encoding -----------------------------------------------------

    def _frozen_output(self, level: int, truncated: str) -> np.ndarray:
        key = (level, truncated)
        out = self._cache.get(key)
        if out is None:
            with T.no_grad():
                e = Tensor(self.embedder.embed(truncated)[None])
                out = self.modules[level](e).data[0]
            self._cache[key] = out
        return out

    def encode(self, path: TaxonPath, i: int) -> Tensor:
        """c^(i) for one path: token-wise sum of module outputs, ascending."""
        out = self.encode_batch([path], i)
        return T.reshape(out, (self.length, self.d))

    def encode_batch(self, paths, i: int, drop_mask: np.ndarray | None = None) -> Tensor:
        """c^(i) for a batch of paths -> Tensor (B, L, d).

        Per level, the batch is deduplicated to its unique truncated names;
        frozen levels come from the cache as constants, active levels run
        live so gradients reach exactly them. drop_mask rows (condition
        dropout) are zeroed, which reproduces null_condition exactly.
        """
        B = len(paths)
        k = min(i, self.usable)
        total: Tensor | None = None
        for j in range(k + 1):
            prefs = [p.prefix(j) for p in paths]
            uniq = sorted(set(prefs))
            index = {s: n for n, s in enumerate(uniq)}
            rows = np.array([index[s] for s in prefs], dtype=np.int64)
            mod = self.modules[j]
            live = (j in self.active_levels) and not mod.frozen
            if live:
                e = Tensor(np.stack([self.embedder.embed(s) for s in uniq]))
                contrib = T.gather_rows(mod(e), rows)
            else:
                stacked = np.stack([self._frozen_output(j, s) for s in uniq])
                contrib = Tensor(stacked[rows])
            total = contrib if total is None else total + contrib
        if total is None:
            total = Tensor(np.zeros((B, self.length, self.d)))
        if drop_mask is not None and drop_mask.any():
            keep = (~np.asarray(drop_mask, dtype=bool)).astype(total.data.dtype)
            total = total * T.broadcast_to(Tensor(keep[:, None, None]), total.shape)
        return total
