"""Batch construction, negative mining, and the contrastive objectives.

Every term in both losses uses a pair-specific aggregate: the similarity grid
S[j, t] = Cosine(aggregate(image_j, text_t), encoding(text_t)) is computed for
all (image, text) pairs in the batch; the text-to-image loss reads columns of
the [N, N] block and the image-to-text loss reads full rows. Collision
masking removes denominator terms whose transcription also occurs in the
image of that term (accidental positives), never the positive term itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .corpus import Corpus
from .crossmodal import ProjectionHeads, attention_grid
from .imgenc import ImageEncoder
from .nn import Tensor
from .textenc import TextEncoder


@dataclass
class ContrastiveConfig:
    tau: float = 0.07
    batch_size: int = 8
    n_aug: int = 64
    collision_mask: bool = True
    hard_mining: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("contrastive temperature must be positive")
        if self.batch_size < 1 or self.n_aug < 0:
            raise ValueError("batch_size must be >= 1 and n_aug >= 0")


@dataclass
class ContrastiveBatch:
    """One positive transcription per image plus shared augmented negatives."""

    image_ids: list[str]
    image_texts: list[tuple[str, ...]]  # full transcription inventory per image
    pos_texts: list[str]
    neg_texts: list[str]
    images: np.ndarray | None = field(default=None, repr=False)  # [N, H, W]
    features: Tensor | None = field(default=None, repr=False)  # [N, wh, C]
    encodings: Tensor | None = field(default=None, repr=False)  # [N + N_aug, C]

    @property
    def n(self) -> int:
        return len(self.image_ids)

    @property
    def n_aug(self) -> int:
        return len(self.neg_texts)

    @property
    def all_texts(self) -> list[str]:
        return list(self.pos_texts) + list(self.neg_texts)


def sample_batch(corpus: Corpus, rng: np.random.Generator, config: ContrastiveConfig) -> ContrastiveBatch:
    """Draw N distinct images, one positive per image, and pool negatives.

    Under collision masking the negative pool excludes every text present in
    any batch image; if that exhausts the pool the negative count shrinks for
    this batch instead of failing.
    """
    if len(corpus.samples) < config.batch_size:
        raise ValueError(f"corpus has {len(corpus.samples)} images; batch needs {config.batch_size}")
    picks = rng.choice(len(corpus.samples), size=config.batch_size, replace=False)
    samples = [corpus.samples[int(i)] for i in picks]
    pos = [s.texts[int(rng.integers(len(s.texts)))] for s in samples]
    pool = corpus.text_pool
    if config.collision_mask:
        batch_words = {t for s in samples for t in s.texts}
        available = [t for t in pool if t not in batch_words]
    else:
        available = [t for t in pool]
    take = min(config.n_aug, len(available))
    negs = [str(t) for t in rng.choice(available, size=take, replace=False)] if take else []
    return ContrastiveBatch(
        image_ids=[s.id for s in samples],
        image_texts=[tuple(s.texts) for s in samples],
        pos_texts=pos,
        neg_texts=negs,
        images=np.stack([s.image for s in samples]),
    )


def mine_hard_negatives(
    batch: ContrastiveBatch,
    heads: ProjectionHeads,
    image_encoder: ImageEncoder,
    text_encoder: TextEncoder,
    corpus: Corpus,
    rng: np.random.Generator,
    config: ContrastiveConfig,
) -> ContrastiveBatch:
    """Replace random negatives with the pool texts most similar to the batch images."""
    pool = corpus.text_pool
    if config.collision_mask:
        batch_words = {t for texts in batch.image_texts for t in texts}
        pool = [t for t in pool if t not in batch_words]
    if len(pool) <= config.n_aug:
        return replace(batch, neg_texts=[str(t) for t in pool])
    cand = [str(t) for t in rng.choice(pool, size=min(len(pool), 4 * config.n_aug), replace=False)]
    feats = image_encoder.encode_batch(batch.images)
    n, w, h, c = feats.shape
    cells = Tensor(feats.data.reshape(n, w * h, c))  # scoring pass carries no gradient
    enc = Tensor(text_encoder.encode_batch(cand).data)
    _, _, sims = attention_grid(enc, cells, heads)
    best = sims.data.max(axis=0)
    order = np.argsort(-best, kind="stable")[: config.n_aug]
    return replace(batch, neg_texts=[cand[int(i)] for i in sorted(order)])


def encode_batch(batch: ContrastiveBatch, image_encoder: ImageEncoder, text_encoder: TextEncoder) -> ContrastiveBatch:
    """Fill in image cell features and per-text encodings (deduplicated)."""
    if batch.images is None:
        raise ValueError("batch carries no images to encode")
    feats = image_encoder.encode_batch(batch.images)  # [N, w, h, C]
    n, w, h, c = feats.shape
    features = nn.reshape(feats, (n, w * h, c))
    texts = batch.all_texts
    unique = sorted(set(texts))
    enc_unique = text_encoder.encode_batch(unique)
    index = {t: i for i, t in enumerate(unique)}
    rows = np.array([index[t] for t in texts], dtype=np.intp)
    encodings = nn.getitem(enc_unique, rows)
    return replace(batch, features=features, encodings=encodings)


# ------------------------------------------------------------------ losses


def _require_encoded(batch: ContrastiveBatch):
    if batch.features is None or batch.encodings is None:
        raise ValueError("batch must be encoded before computing losses")


def similarity_grid(batch: ContrastiveBatch, heads: ProjectionHeads) -> Tensor:
    """S[j, t] = Cosine(aggregate(I_j, T_t), F_{T_t}) for all pairs, [N, N+N_aug]."""
    _require_encoded(batch)
    _, _, sims = attention_grid(batch.encodings, batch.features, heads)
    return sims


def _collision_masks(batch: ContrastiveBatch) -> tuple[np.ndarray, np.ndarray]:
    """Additive -inf masks: t2i over [N, N] (rows=images), i2t over [N, N+N_aug]."""
    n = batch.n
    texts = batch.all_texts
    i2t = np.zeros((n, len(texts)))
    for i in range(n):
        inventory = set(batch.image_texts[i])
        for t, text in enumerate(texts):
            if t != i and text in inventory:
                i2t[i, t] = -np.inf
    t2i = np.zeros((n, n))
    for j in range(n):
        inventory = set(batch.image_texts[j])
        for i in range(n):
            if j != i and batch.pos_texts[i] in inventory:
                t2i[j, i] = -np.inf
    return t2i, i2t


def _loss_vectors(batch: ContrastiveBatch, heads: ProjectionHeads, config: ContrastiveConfig):
    """Per-index t2i and i2t losses, each a [N] tensor."""
    sims = similarity_grid(batch, heads)
    n = batch.n
    t2i_mask, i2t_mask = _collision_masks(batch)
    if not config.collision_mask:
        t2i_mask = np.zeros_like(t2i_mask)
        i2t_mask = np.zeros_like(i2t_mask)
    diag = np.arange(n)
    z_all = nn.mul(sims, 1.0 / config.tau)  # [N, N + N_aug]
    pos = nn.getitem(z_all, (diag, diag))  # [N]

    z_t2i = nn.add(nn.getitem(z_all, (slice(None), slice(0, n))), nn.as_tensor(t2i_mask))
    t2i = nn.add(nn.logsumexp(z_t2i, axis=0), nn.mul(pos, -1.0))

    z_i2t = nn.add(z_all, nn.as_tensor(i2t_mask))
    i2t = nn.add(nn.logsumexp(z_i2t, axis=1), nn.mul(pos, -1.0))
    return t2i, i2t


def t2i_loss(i: int, batch: ContrastiveBatch, heads: ProjectionHeads, config: ContrastiveConfig) -> Tensor:
    """Contrast transcription i against all batch images (Eq. with image denominator)."""
    t2i, _ = _loss_vectors(batch, heads, config)
    return nn.getitem(t2i, i)


def i2t_loss(i: int, batch: ContrastiveBatch, heads: ProjectionHeads, config: ContrastiveConfig) -> Tensor:
    """Contrast image i against batch transcriptions plus augmented negatives."""
    _, i2t = _loss_vectors(batch, heads, config)
    return nn.getitem(i2t, i)


def cm_loss(batch: ContrastiveBatch, heads: ProjectionHeads, config: ContrastiveConfig) -> Tensor:
    """Average of both constructions over the batch: (1/2N) * sum_i (t2i_i + i2t_i)."""
    t2i, i2t = _loss_vectors(batch, heads, config)
    return nn.mul(nn.add(nn.sum_(t2i), nn.sum_(i2t)), 1.0 / (2.0 * batch.n))
