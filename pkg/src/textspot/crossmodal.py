"""Cross-modality attention: activation maps, feature aggregation, anchors.

For a transcription/image pair, per-cell logits are the cosine similarity of
the projected text vector and projected cell features divided by a fixed
attention temperature; softmax over all cells yields the activation map. The
map then weights value-projected cell features into one aggregated vector.
Together these form a single-query cross-attention over the image grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .imgenc import ImageFeatureMap
from .nn import Module, Parameter, Tensor


@dataclass
class ActivationMap:
    """Softmax-normalized spatial distribution, indexed [x, y]."""

    M: Tensor
    image_id: str = ""
    text: str = ""

    @property
    def grid_size(self) -> tuple[int, int]:
        return self.M.shape


@dataclass
class AnchorPoint:
    x: float
    y: float
    score: float


class ProjectionHeads(Module):
    """Learned projections for query/key/value plus the attention temperature."""

    def __init__(self, dim: int = 128, proj_dim: int = 64, attn_temp: float = 0.1, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        if attn_temp <= 0:
            raise ValueError("attention temperature must be positive")
        std_p = 1.0 / np.sqrt(dim)
        self.w_text = Parameter((rng.standard_normal((dim, proj_dim)) * std_p).astype(dtype), name="heads.w_text")
        self.w_img = Parameter((rng.standard_normal((dim, proj_dim)) * std_p).astype(dtype), name="heads.w_img")
        self.w_val = Parameter((rng.standard_normal((dim, dim)) * std_p).astype(dtype), name="heads.w_val")
        self.attn_temp = attn_temp


def attention_grid(text_encodings: Tensor, cell_features: Tensor, heads: ProjectionHeads):
    """Pairwise maps and aggregates for every (image, transcription) pair.

    text_encodings: [T, C]; cell_features: [N, wh, C].
    Returns (maps [N, T, wh], aggregates [N, T, C], similarities [N, T]) where
    similarities[n, t] = Cosine(aggregate(n, t), text_encodings[t]).
    """
    q = nn.l2_normalize(nn.matmul(text_encodings, heads.w_text), axis=-1)  # [T, Cp]
    k = nn.l2_normalize(nn.matmul(cell_features, heads.w_img), axis=-1)  # [N, wh, Cp]
    logits = nn.mul(nn.matmul(k, nn.transpose(q, (1, 0))), 1.0 / heads.attn_temp)  # [N, wh, T]
    maps = nn.softmax_axis(nn.transpose(logits, (0, 2, 1)), axis=-1)  # [N, T, wh]
    values = nn.matmul(cell_features, heads.w_val)  # [N, wh, C]
    aggregates = nn.matmul(maps, values)  # [N, T, C]
    sims = nn.cosine_similarity(aggregates, nn.reshape(text_encodings, (1,) + text_encodings.shape), axis=-1)
    return maps, aggregates, sims


def activation_map(f_text: Tensor, f_img: ImageFeatureMap, heads: ProjectionHeads, image_id="", text="") -> ActivationMap:
    """Cross-attention distribution of one transcription over one image grid."""
    if f_text.shape[-1] != f_img.fmap.shape[-1]:
        raise ValueError("text and image feature widths disagree")
    w, h, c = f_img.fmap.shape
    cells = nn.reshape(f_img.fmap, (1, w * h, c))
    maps, _, _ = attention_grid(nn.reshape(f_text, (1, c)), cells, heads)
    return ActivationMap(M=nn.reshape(maps, (w, h)), image_id=image_id, text=text)


def aggregate(amap: ActivationMap, f_img: ImageFeatureMap, heads: ProjectionHeads) -> Tensor:
    """Activation-weighted sum of value-projected cell features, [C]."""
    w, h, c = f_img.fmap.shape
    if amap.M.shape != (w, h):
        raise ValueError(f"activation map {amap.M.shape} does not match grid {(w, h)}")
    values = nn.matmul(nn.reshape(f_img.fmap, (w * h, c)), heads.w_val)
    return nn.matmul(nn.reshape(amap.M, (w * h,)), values)


def extract_anchor(amap: ActivationMap, stride: int, source_size: tuple[int, int]) -> AnchorPoint:
    """Peak cell -> pixel coordinates via the (i + 0.5) * stride convention.

    Ties break to the smallest row-major index of the [w, h] map.
    """
    m = amap.M.data if isinstance(amap.M, Tensor) else np.asarray(amap.M)
    w, h = m.shape
    flat = int(np.argmax(m))
    i, j = divmod(flat, h)
    img_w, img_h = source_size
    x = min(max((i + 0.5) * stride, 0.0), img_w - 1.0)
    y = min(max((j + 0.5) * stride, 0.0), img_h - 1.0)
    return AnchorPoint(x=float(x), y=float(y), score=float(m[i, j]))


def map_to_u8(amap: ActivationMap) -> np.ndarray:
    """Linear rescale of the map to 0..255 for PGM heatmap export, [h, w] raster."""
    m = amap.M.data if isinstance(amap.M, Tensor) else np.asarray(amap.M)
    lo, hi = float(m.min()), float(m.max())
    if hi > lo:
        scaled = (m - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(m)
    return np.round(scaled).astype(np.uint8).T  # PGM rows are y
