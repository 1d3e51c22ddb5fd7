"""Synthetic scene-text corpus generation and persistence.

Scenes are grayscale images with known word geometry. Geometry (boxes,
centers) is recorded for evaluation and for baseline comparisons only; the
weakly supervised stage trains from (image, transcription) pairs alone.

On disk a corpus is one ``manifest.json`` plus one binary PGM (P5) per scene.
Pixel values are quantized to the 255-level grid at render time so the PGM
round trip is exact.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .font import GlyphFont, default_font, DEFAULT_ALPHABET
from .parallel import parallel_map

MANIFEST_SCHEMA = 1
_PLACE_TRIES = 40
_SCENE_TRIES = 25
_MIN_GAP = 2  # pixels kept clear between instance boxes and from borders


@dataclass
class SceneConfig:
    """Knobs for one rendered scene and for pool construction."""

    width: int = 256
    height: int = 64
    words_min: int = 1
    words_max: int = 3
    len_min: int = 3
    len_max: int = 8
    scale_min: int = 1
    scale_max: int = 2
    noise: float = 0.05
    pool_size: int = 200
    alphabet: str = DEFAULT_ALPHABET

    def validate(self):
        if self.words_min < 1 or self.words_max < self.words_min:
            raise ValueError("word count range is invalid")
        if self.len_min < 1 or self.len_max < self.len_min:
            raise ValueError("word length range is invalid")
        if self.scale_min < 1 or self.scale_max < self.scale_min:
            raise ValueError("scale range is invalid")
        if not (0 <= self.noise < 1):
            raise ValueError("noise level must be in [0, 1)")


@dataclass
class Instance:
    text: str
    center: tuple[float, float]
    box: tuple[int, int, int, int]  # x0, y0, x1, y1; real-coordinate bounds

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.box
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass
class SceneSample:
    id: str
    image: np.ndarray = field(repr=False)  # [H, W] floats on the 1/255 grid
    instances: list[Instance] = field(default_factory=list)

    @property
    def texts(self) -> list[str]:
        return [ins.text for ins in self.instances]


@dataclass
class Corpus:
    seed: int
    config: SceneConfig
    word_pool: list[str]
    samples: list[SceneSample]

    @property
    def id(self) -> str:
        key = json.dumps({"seed": self.seed, "config": asdict(self.config), "n": len(self.samples)}, sort_keys=True)
        return hashlib.sha256(key.encode()).hexdigest()[:12]

    @property
    def text_pool(self) -> list[str]:
        """Negative-sampling pool: the generation word pool when known, else realized texts."""
        if self.word_pool:
            return self.word_pool
        seen = sorted({t for s in self.samples for t in s.texts})
        return seen

    def sample_by_id(self, sample_id: str) -> SceneSample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(f"unknown sample id {sample_id!r}")


def make_word_pool(config: SceneConfig, rng: np.random.Generator) -> list[str]:
    """Draw ``pool_size`` distinct words over the alphabet."""
    letters = list(config.alphabet)
    pool: list[str] = []
    seen = set()
    guard = 0
    while len(pool) < config.pool_size:
        length = int(rng.integers(config.len_min, config.len_max + 1))
        word = "".join(rng.choice(letters, size=length))
        if word not in seen:
            seen.add(word)
            pool.append(word)
        guard += 1
        if guard > config.pool_size * 50:
            raise RuntimeError("could not build a distinct word pool; alphabet too small for pool_size")
    return pool


def _boxes_clash(box, others, gap=_MIN_GAP):
    x0, y0, x1, y1 = box
    for ox0, oy0, ox1, oy1 in others:
        if x0 - gap <= ox1 and ox0 - gap <= x1 and y0 - gap <= oy1 and oy0 - gap <= y1:
            return True
    return False


def render_scene(
    config: SceneConfig,
    rng: np.random.Generator,
    pool: list[str],
    font: GlyphFont | None = None,
    sample_id: str = "scene",
) -> SceneSample:
    """Rasterize one scene: random non-overlapping words plus additive noise.

    Words are drawn without replacement from ``pool``; each is placed at a
    uniform feasible position with a uniform integer scale. Instances record
    the exact box and center. Raises if placement stays infeasible after
    bounded retries.
    """
    config.validate()
    font = font or default_font(config.alphabet)
    n_words = int(rng.integers(config.words_min, config.words_max + 1))
    if n_words > len(pool):
        raise ValueError(f"scene needs {n_words} distinct words but pool has {len(pool)}")

    for _ in range(_SCENE_TRIES):
        words = [str(w) for w in rng.choice(pool, size=n_words, replace=False)]
        image = np.zeros((config.height, config.width), dtype=np.float64)
        placed: list[tuple[int, int, int, int]] = []
        instances: list[Instance] = []
        ok = True
        for word in words:
            scale = int(rng.integers(config.scale_min, config.scale_max + 1))
            w_box = font.word_ink_width(len(word), scale)
            h_box = font.word_height(scale)
            x_hi = config.width - _MIN_GAP - w_box
            y_hi = config.height - _MIN_GAP - h_box
            if x_hi < _MIN_GAP or y_hi < _MIN_GAP:
                ok = False
                break
            spot = None
            for _ in range(_PLACE_TRIES):
                x0 = int(rng.integers(_MIN_GAP, x_hi + 1))
                y0 = int(rng.integers(_MIN_GAP, y_hi + 1))
                box = (x0, y0, x0 + w_box, y0 + h_box)
                if not _boxes_clash(box, placed):
                    spot = box
                    break
            if spot is None:
                ok = False
                break
            x0, y0, x1, y1 = spot
            ink = font.render_word(word, scale)
            region = image[y0 : y0 + ink.shape[0], x0 : x0 + ink.shape[1]]
            np.maximum(region, ink, out=region)
            placed.append(spot)
            instances.append(Instance(text=word, center=((x0 + x1) / 2.0, (y0 + y1) / 2.0), box=spot))
        if ok:
            if config.noise > 0:
                image = image + rng.normal(0.0, config.noise, size=image.shape)
            image = np.clip(image, 0.0, 1.0)
            image = np.round(image * 255.0) / 255.0
            return SceneSample(id=sample_id, image=image, instances=instances)
    raise RuntimeError(f"could not place {n_words} words after {_SCENE_TRIES} attempts; config: {config}")


# ------------------------------------------------------------------ PGM I/O


def write_pgm(path: str, image: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255) from floats in [0, 1]."""
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM file")
    fields: list[bytes] = []
    i = 2
    while len(fields) < 3:
        while i < len(blob) and blob[i : i + 1].isspace():
            i += 1
        if blob[i : i + 1] == b"#":  # comment line
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(blob) and not blob[i : i + 1].isspace():
            i += 1
        fields.append(blob[start:i])
    i += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    raster = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=i)
    if raster.size != w * h:
        raise ValueError(f"{path}: truncated raster")
    return raster.reshape(h, w).astype(np.float64) / 255.0


# ------------------------------------------------------------------ corpus I/O


def generate_corpus(config: SceneConfig, seed: int, count: int, out_dir: str | None = None) -> Corpus:
    """Render ``count`` scenes from derived per-sample seeds; optionally persist."""
    config.validate()
    font = default_font(config.alphabet)
    root = np.random.SeedSequence(seed)
    pool_key, *sample_keys = root.spawn(count + 1)
    pool = make_word_pool(config, np.random.default_rng(pool_key))

    def render_one(item):
        idx, key = item
        rng = np.random.default_rng(key)
        return render_scene(config, rng, pool, font, sample_id=f"scene-{idx:06d}")

    samples = parallel_map(render_one, list(enumerate(sample_keys)))
    corpus = Corpus(seed=seed, config=config, word_pool=pool, samples=samples)
    if out_dir is not None:
        save_corpus(corpus, out_dir)
    return corpus


def save_corpus(corpus: Corpus, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for s in corpus.samples:
        image_path = f"{s.id}.pgm"
        write_pgm(os.path.join(out_dir, image_path), s.image)
        entries.append(
            {
                "id": s.id,
                "image_path": image_path,
                "width": int(s.image.shape[1]),
                "height": int(s.image.shape[0]),
                "instances": [
                    {
                        "text": ins.text,
                        "center": [float(ins.center[0]), float(ins.center[1])],
                        "box": [int(v) for v in ins.box],
                    }
                    for ins in s.instances
                ],
            }
        )
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "id": corpus.id,
        "seed": corpus.seed,
        "config": asdict(corpus.config),
        "word_pool": corpus.word_pool,
        "samples": entries,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return path


def load_corpus(path: str) -> Corpus:
    """Read a manifest directory (or manifest.json path); verifies referenced files."""
    if os.path.isdir(path):
        manifest_path = os.path.join(path, "manifest.json")
    else:
        manifest_path = path
    base = os.path.dirname(manifest_path)
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"corpus manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise ValueError(f"corrupt corpus manifest {manifest_path}: {e}") from None
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"unsupported manifest schema in {manifest_path}")
    config = SceneConfig(**manifest["config"])
    samples = []
    ids = set()
    for entry in manifest["samples"]:
        sid = entry["id"]
        if sid in ids:
            raise ValueError(f"duplicate sample id {sid!r} in manifest")
        ids.add(sid)
        img_path = os.path.join(base, entry["image_path"])
        if not os.path.exists(img_path):
            raise FileNotFoundError(f"manifest references missing image file: {img_path}")
        image = read_pgm(img_path)
        if image.shape != (entry["height"], entry["width"]):
            raise ValueError(f"{img_path}: size mismatch with manifest")
        instances = [
            Instance(
                text=i["text"],
                center=(float(i["center"][0]), float(i["center"][1])),
                box=tuple(int(v) for v in i["box"]),
            )
            for i in entry["instances"]
        ]
        samples.append(SceneSample(id=sid, image=image, instances=instances))
    return Corpus(seed=manifest["seed"], config=config, word_pool=list(manifest["word_pool"]), samples=samples)
