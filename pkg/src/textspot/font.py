"""Built-in bitmap glyph face for synthetic scene rendering.

Each glyph is drawn as 7x5 ink inside a 6x8 (w x h) cell; the spare row and
column keep neighbouring characters separated, and make every rendered word
box at least 8 px tall at unit scale (so a stride-8 feature grid always has a
cell center inside the box).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CELL_W = 6
CELL_H = 8

_GLYPHS = {
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".####", "#....", "#....", "#....", "#....", "#....", ".####"),
    "D": ("####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".####", "#....", "#....", "#.###", "#...#", "#...#", ".###."),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
}

DEFAULT_ALPHABET = "".join(sorted(_GLYPHS))


@dataclass
class GlyphFont:
    """Ordered alphabet with one binary raster per symbol."""

    alphabet: str
    bitmaps: dict[str, np.ndarray] = field(repr=False)
    cell_w: int = CELL_W
    cell_h: int = CELL_H

    def __post_init__(self):
        for ch in self.alphabet:
            if ch not in self.bitmaps:
                raise ValueError(f"font is missing a bitmap for {ch!r}")
            bm = self.bitmaps[ch]
            if bm.shape != (self.cell_h, self.cell_w):
                raise ValueError(f"bitmap for {ch!r} has shape {bm.shape}, expected {(self.cell_h, self.cell_w)}")
            if not bm.any():
                raise ValueError(f"bitmap for {ch!r} is empty")

    def index(self, ch: str) -> int:
        i = self.alphabet.find(ch)
        if i < 0:
            raise KeyError(f"character {ch!r} not in alphabet")
        return i

    def word_ink_width(self, length: int, scale: int = 1) -> int:
        """Pixel width of a rendered word, trailing spacer column trimmed."""
        return (self.cell_w * length - 1) * scale

    def word_height(self, scale: int = 1) -> int:
        return self.cell_h * scale

    def render_word(self, text: str, scale: int = 1) -> np.ndarray:
        """Binary raster of ``text`` at integer ``scale``, [h, w] in {0, 1}."""
        if not text:
            raise ValueError("cannot render an empty word")
        h = self.cell_h
        w = self.cell_w * len(text) - 1
        canvas = np.zeros((h, w), dtype=np.float64)
        for k, ch in enumerate(text):
            canvas[:, k * self.cell_w : k * self.cell_w + self.cell_w - 1] = self.bitmaps[ch][:, : self.cell_w - 1]
        if scale != 1:
            canvas = np.kron(canvas, np.ones((scale, scale)))
        return canvas


def default_font(alphabet: str = DEFAULT_ALPHABET) -> GlyphFont:
    bitmaps = {}
    for ch in alphabet:
        rows = _GLYPHS[ch]
        bm = np.zeros((CELL_H, CELL_W), dtype=np.float64)
        for r, row in enumerate(rows):
            for c, mark in enumerate(row):
                if mark == "#":
                    bm[r, c] = 1.0
        bitmaps[ch] = bm
    return GlyphFont(alphabet=alphabet, bitmaps=bitmaps)
