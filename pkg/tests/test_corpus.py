import json
import os

import numpy as np
import pytest

from textspot.corpus import (
    SceneConfig,
    generate_corpus,
    load_corpus,
    make_word_pool,
    read_pgm,
    render_scene,
    save_corpus,
    write_pgm,
)
from textspot.font import default_font


def small_config(**kw):
    base = dict(width=128, height=48, words_min=1, words_max=2, len_min=3, len_max=5, pool_size=30)
    base.update(kw)
    return SceneConfig(**base)


def test_render_same_seed_is_byte_identical():
    cfg = small_config()
    pool = make_word_pool(cfg, np.random.default_rng(7))
    a = render_scene(cfg, np.random.default_rng(42), pool)
    b = render_scene(cfg, np.random.default_rng(42), pool)
    assert a.image.tobytes() == b.image.tobytes()
    assert [i.text for i in a.instances] == [i.text for i in b.instances]
    assert [i.box for i in a.instances] == [i.box for i in b.instances]


def test_render_forced_word_count():
    cfg = small_config(words_min=2, words_max=2)
    pool = make_word_pool(cfg, np.random.default_rng(7))
    sample = render_scene(cfg, np.random.default_rng(0), pool)
    assert len(sample.instances) == 2


def test_render_noiseless_ink_is_exactly_one():
    cfg = small_config(noise=0.0, scale_min=1, scale_max=1)
    font = default_font(cfg.alphabet)
    pool = make_word_pool(cfg, np.random.default_rng(7))
    sample = render_scene(cfg, np.random.default_rng(3), pool, font)
    for ins in sample.instances:
        x0, y0, x1, y1 = ins.box
        ink = font.render_word(ins.text, 1)
        region = sample.image[y0 : y0 + ink.shape[0], x0 : x0 + ink.shape[1]]
        np.testing.assert_array_equal(region[ink > 0], np.ones((ink > 0).sum()))
        # background inside the scene stays zero
        assert sample.image.max() == 1.0


def test_render_infeasible_placement_raises():
    cfg = small_config(width=40, height=12, words_min=3, words_max=3, len_min=5, len_max=5)
    pool = make_word_pool(cfg, np.random.default_rng(7))
    with pytest.raises(RuntimeError, match="config"):
        render_scene(cfg, np.random.default_rng(0), pool)


def test_boxes_disjoint_and_inside_image():
    cfg = small_config(words_min=2, words_max=3, noise=0.02)
    pool = make_word_pool(cfg, np.random.default_rng(1))
    for seed in range(25):
        s = render_scene(cfg, np.random.default_rng(seed), pool)
        for ins in s.instances:
            x0, y0, x1, y1 = ins.box
            assert 0 <= x0 < x1 <= cfg.width
            assert 0 <= y0 < y1 <= cfg.height
        boxes = [i.box for i in s.instances]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                ax0, ay0, ax1, ay1 = boxes[i]
                bx0, by0, bx1, by1 = boxes[j]
                ix = max(0, min(ax1, bx1) - max(ax0, bx0))
                iy = max(0, min(ay1, by1) - max(ay0, by0))
                assert ix * iy == 0, "instance boxes overlap"


def test_pool_words_are_drawable():
    cfg = small_config()
    pool = make_word_pool(cfg, np.random.default_rng(5))
    assert len(pool) == cfg.pool_size
    assert len(set(pool)) == len(pool)
    for w in pool:
        assert cfg.len_min <= len(w) <= cfg.len_max
        assert all(c in cfg.alphabet for c in w)


def test_pgm_round_trip(tmp_path):
    img = np.round(np.random.default_rng(0).random((17, 23)) * 255.0) / 255.0
    path = os.path.join(tmp_path, "x.pgm")
    write_pgm(path, img)
    back = read_pgm(path)
    np.testing.assert_array_equal(back, img)


def test_corpus_round_trip(tmp_path):
    cfg = small_config()
    corpus = generate_corpus(cfg, seed=11, count=20, out_dir=str(tmp_path))
    loaded = load_corpus(str(tmp_path))
    assert len(loaded.samples) == 20
    assert loaded.id == corpus.id
    for a, b in zip(corpus.samples, loaded.samples):
        assert a.id == b.id
        np.testing.assert_array_equal(a.image, b.image)
        assert [i.box for i in a.instances] == [i.box for i in b.instances]
        assert [i.text for i in a.instances] == [i.text for i in b.instances]
        assert [i.center for i in a.instances] == [i.center for i in b.instances]


def test_corpus_same_seed_same_manifest(tmp_path):
    cfg = small_config()
    d1, d2 = tmp_path / "a", tmp_path / "b"
    generate_corpus(cfg, seed=9, count=10, out_dir=str(d1))
    generate_corpus(cfg, seed=9, count=10, out_dir=str(d2))
    assert (d1 / "manifest.json").read_bytes() == (d2 / "manifest.json").read_bytes()


def test_corpus_dangling_image_ref(tmp_path):
    cfg = small_config()
    generate_corpus(cfg, seed=3, count=3, out_dir=str(tmp_path))
    os.remove(tmp_path / "scene-000001.pgm")
    with pytest.raises(FileNotFoundError, match="scene-000001.pgm"):
        load_corpus(str(tmp_path))


def test_corpus_corrupt_manifest(tmp_path):
    cfg = small_config()
    generate_corpus(cfg, seed=3, count=2, out_dir=str(tmp_path))
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(ValueError, match="manifest"):
        load_corpus(str(tmp_path))


def test_text_pool_prefers_generation_pool(tmp_path):
    cfg = small_config()
    corpus = generate_corpus(cfg, seed=2, count=4)
    assert corpus.text_pool == corpus.word_pool
    corpus.word_pool = []
    realized = {t for s in corpus.samples for t in s.texts}
    assert set(corpus.text_pool) == realized
