"""Character-wise text encoder.

A transcription is embedded character by character (symbol row + position
row), propagated through transformer encoder blocks, and mean-pooled into a
single vector. No padding is ever introduced: variable-length inputs are
grouped by length and each group is processed at its exact length.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .nn import Module, Parameter, Tensor, TransformerBlock


class TextEncoder(Module):
    def __init__(
        self,
        alphabet: str,
        dim: int = 128,
        max_len: int = 16,
        depth: int = 2,
        heads: int = 4,
        ffn_mult: int = 2,
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ):
        rng = rng or np.random.default_rng(0)
        self.alphabet = alphabet
        self.max_len = max_len
        self.dim = dim
        self._index = {ch: i for i, ch in enumerate(alphabet)}
        std = 1.0 / np.sqrt(dim)
        self.embed = Parameter(
            (rng.standard_normal((len(alphabet), dim)) * std).astype(dtype), name="text.embed", decay=False
        )
        self.pos = Parameter((rng.standard_normal((max_len, dim)) * std).astype(dtype), name="text.pos", decay=False)
        self.blocks = [TransformerBlock(dim, heads, rng, ffn_mult, dtype, name=f"text.block{i}") for i in range(depth)]

    def char_ids(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot encode an empty transcription")
        if len(text) > self.max_len:
            raise ValueError(f"transcription length {len(text)} exceeds maximum {self.max_len}")
        try:
            return np.array([self._index[c] for c in text], dtype=np.intp)
        except KeyError as e:
            raise ValueError(f"character {e.args[0]!r} not in alphabet") from None

    def encode_batch(self, texts: list[str]) -> Tensor:
        """Encode several transcriptions, [B, dim]; grouped by length internally."""
        ids = [self.char_ids(t) for t in texts]
        by_len: dict[int, list[int]] = {}
        for i, seq in enumerate(ids):
            by_len.setdefault(len(seq), []).append(i)
        chunks = []
        order = []
        for length in sorted(by_len):
            members = by_len[length]
            id_block = np.stack([ids[i] for i in members])  # [G, K]
            x = nn.add(nn.embedding(self.embed, id_block), nn.embedding(self.pos, np.arange(length)))
            for block in self.blocks:
                x = block(x)
            chunks.append(nn.mean(x, axis=1))  # [G, dim]
            order.extend(members)
        stacked = chunks[0] if len(chunks) == 1 else nn.concat(chunks, axis=0)
        inverse = np.argsort(np.array(order))
        if np.array_equal(inverse, np.arange(len(texts))):
            return stacked
        return nn.getitem(stacked, inverse)

    def encode(self, text: str) -> Tensor:
        """Single transcription -> [dim] vector."""
        return nn.reshape(self.encode_batch([text]), (self.dim,))
