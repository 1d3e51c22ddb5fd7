"""Image encoder: a strided conv stack plus a transformer over grid cells.

Produces a stride-8 feature grid laid out x-major, matching the activation
map convention where index (i, j) means (column, row). Fixed 2-D sinusoidal
position tables are injected into the attention query/key path only, so a
freshly initialized encoder maps a constant image to a constant grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import Conv2d, Module, Tensor, TransformerBlock, sinusoid_2d


@dataclass
class ImageFeatureMap:
    """Stride-s grid of feature vectors for one image, fmap indexed [x, y, c]."""

    fmap: Tensor
    stride: int
    source_size: tuple[int, int]  # (W, H)

    @property
    def grid_size(self) -> tuple[int, int]:
        return self.fmap.shape[0], self.fmap.shape[1]


class ImageEncoder(Module):
    def __init__(
        self,
        dim: int = 128,
        channels: tuple[int, ...] = (16, 32, 64),
        grid_blocks: int = 2,
        heads: int = 4,
        ffn_mult: int = 2,
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.dtype = dtype
        self.stride = 2 ** len(channels)
        self.convs = []
        prev = 1
        for i, c in enumerate(channels):
            # downsample first so the follow-up 3x3 runs at the reduced resolution
            self.convs.append(Conv2d(prev, c, rng, k=3, stride=2, dtype=dtype, name=f"img.conv{i}a"))
            self.convs.append(Conv2d(c, c, rng, k=3, stride=1, dtype=dtype, name=f"img.conv{i}b"))
            prev = c
        self.lift = Conv2d(prev, dim, rng, k=1, stride=1, pad=0, dtype=dtype, name="img.lift")
        self.blocks = [
            TransformerBlock(dim, heads, rng, ffn_mult, dtype, name=f"img.block{i}") for i in range(grid_blocks)
        ]
        self._pos_cache: dict[tuple[int, int], np.ndarray] = {}

    def _pos_table(self, gw: int, gh: int) -> np.ndarray:
        key = (gw, gh)
        if key not in self._pos_cache:
            # conv output is row-major [y, x]; build the table to match, cells flattened y-major
            table = sinusoid_2d(gw, gh, self.dim).transpose(1, 0, 2).reshape(gh * gw, self.dim)
            self._pos_cache[key] = table.astype(self.dtype)
        return self._pos_cache[key]

    def encode_batch(self, images: np.ndarray) -> Tensor:
        """[N, H, W] pixel array -> [N, w, h, dim] feature grids (x-major)."""
        images = np.asarray(images)
        if images.ndim == 2:
            images = images[None]
        n, h, w = images.shape
        if h < self.stride or w < self.stride:
            raise ValueError(f"image {w}x{h} is smaller than one stride cell ({self.stride})")
        x = nn.as_tensor(images.astype(self.dtype, copy=False).reshape(n, h, w, 1))
        for conv in self.convs:
            x = nn.relu(conv(x))
        x = self.lift(x)  # [N, gh, gw, dim]
        _, gh, gw, _ = x.shape
        x = nn.reshape(x, (n, gh * gw, self.dim))
        pos = self._pos_table(gw, gh)
        for block in self.blocks:
            x = block(x, pos=pos)
        x = nn.reshape(x, (n, gh, gw, self.dim))
        return nn.transpose(x, (0, 2, 1, 3))  # -> [N, w, h, dim], x-major

    def encode(self, image: np.ndarray) -> ImageFeatureMap:
        """Single [H, W] image -> ImageFeatureMap with shape (ceil(W/s), ceil(H/s), dim)."""
        image = np.asarray(image)
        h, w = image.shape
        grid = self.encode_batch(image[None])
        fmap = nn.reshape(grid, grid.shape[1:])
        return ImageFeatureMap(fmap=fmap, stride=self.stride, source_size=(w, h))
