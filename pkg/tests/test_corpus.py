import json

import numpy as np
import pytest

from textsr import corpus
from textsr.corpus import (
    CorpusConfig,
    GrammarConfig,
    bicubic_downscale,
    build_dataset,
    caption_for,
    gaussian_kernel,
    generate_scene,
    load_batch,
    load_manifest,
    lowpass_filter,
    manifest_checksum,
    parse_caption,
)
from textsr.errors import ConfigurationError, ShapeError


# --- independent oracles -----------------------------------------------------


def oracle_cubic(t, a=-0.5):
    t = abs(float(t))
    if t <= 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return 0.0


def oracle_bicubic_downscale(image, factor):
    """Direct per-pixel convolution, nested loops, clamped edges, renormalized."""
    c, h, w = image.shape
    oh, ow = h // factor, w // factor
    out = np.zeros((c, oh, ow), dtype=np.float64)
    support = 2 * factor
    for oy in range(oh):
        cy = (oy + 0.5) * factor - 0.5
        for ox in range(ow):
            cx = (ox + 0.5) * factor - 0.5
            for ch in range(c):
                acc = 0.0
                wsum = 0.0
                for ty in range(int(np.floor(cy)) - support + 1, int(np.floor(cy)) + support + 1):
                    wy = oracle_cubic((cy - ty) / factor) / factor
                    if wy == 0.0:
                        continue
                    sy = min(max(ty, 0), h - 1)
                    for tx in range(int(np.floor(cx)) - support + 1, int(np.floor(cx)) + support + 1):
                        wx = oracle_cubic((cx - tx) / factor) / factor
                        if wx == 0.0:
                            continue
                        sx = min(max(tx, 0), w - 1)
                        acc += wy * wx * image[ch, sy, sx]
                        wsum += wy * wx
                out[ch, oy, ox] = acc / wsum
    return np.clip(out, 0.0, 1.0)


# --- scene generation ---------------------------------------------------------


def test_scene_deterministic_in_seed():
    a = generate_scene(7)
    b = generate_scene(7)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.object_mask, b.object_mask)
    assert a.caption == b.caption
    assert a.attributes == b.attributes


def test_scene_invariants_hold():
    for seed in range(25):
        scene = generate_scene(seed)
        assert scene.image.shape == (3, 64, 64)
        assert scene.image.min() >= 0.0 and scene.image.max() <= 1.0
        assert set(np.unique(scene.object_mask)) <= {0, 1}
        frac = scene.object_mask.mean()
        assert 0.02 <= frac <= 0.60


def test_mask_fraction_bounds_brute_force():
    # brute-force over 1000 seeds
    for seed in range(1000):
        frac = generate_scene(seed).object_mask.mean()
        assert 0.02 <= frac <= 0.60, f"seed {seed}: fraction {frac}"


def test_caption_roundtrip():
    for seed in range(40):
        scene = generate_scene(seed)
        parsed = parse_caption(scene.captions[1])
        for key in ("size", "object_color", "shape", "background_color", "position"):
            assert parsed[key] == scene.attributes[key]
        parsed_short = parse_caption(scene.caption)
        assert parsed_short["position"] is None
        assert parsed_short["object_color"] == scene.attributes["object_color"]


def test_restricted_color_grammar():
    grammar = GrammarConfig(colors={"red": 0.0, "blue": 240.0})
    seen = set()
    for seed in range(60):
        scene = generate_scene(seed, grammar)
        color = scene.attributes["object_color"]
        assert color in ("red", "blue")
        assert f" {color} " in scene.caption
        seen.add(color)
    assert seen == {"red", "blue"}


def test_empty_grammar_rejected():
    with pytest.raises(ConfigurationError):
        generate_scene(0, GrammarConfig(shapes=()))


def test_caption_mentions_required_attributes():
    scene = generate_scene(11)
    attrs = scene.attributes
    for word in (attrs["object_color"], attrs["shape"], attrs["background_color"]):
        assert word in scene.caption.split()


def test_default_grammar_size():
    g = GrammarConfig()
    assert len(g.shapes) >= 4
    assert len(g.colors) >= 6
    assert len(g.sizes) >= 2


# --- degradation --------------------------------------------------------------


def test_bicubic_constant_preserved():
    image = np.full((3, 64, 64), 0.5, dtype=np.float32)
    out = bicubic_downscale(image, 8)
    assert out.shape == (3, 8, 8)
    assert np.allclose(out, 0.5, atol=1e-6)


def test_bicubic_factor_one_rejected_by_default():
    image = np.full((3, 16, 16), 0.25, dtype=np.float32)
    with pytest.raises(ConfigurationError):
        bicubic_downscale(image, 1)
    out = bicubic_downscale(image, 1, allow_identity=True)
    assert np.array_equal(out, image)


def test_bicubic_matches_direct_convolution_oracle():
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    ramp = np.stack([xx, yy, 0.5 * (xx + yy)]).astype(np.float64)
    ours = bicubic_downscale(ramp.astype(np.float32), 8)
    reference = oracle_bicubic_downscale(ramp, 8)
    assert np.max(np.abs(ours.astype(np.float64) - reference)) < 1e-4


def test_bicubic_oracle_on_random_image():
    rng = np.random.default_rng(3)
    image = rng.random((3, 32, 32))
    for factor in (2, 4):
        ours = bicubic_downscale(image.astype(np.float32), factor)
        reference = oracle_bicubic_downscale(image, factor)
        assert np.max(np.abs(ours.astype(np.float64) - reference)) < 1e-4


def test_bicubic_shape_errors():
    with pytest.raises(ShapeError):
        bicubic_downscale(np.zeros((3, 60, 64), dtype=np.float32), 8)
    with pytest.raises(ConfigurationError):
        bicubic_downscale(np.zeros((3, 64, 64), dtype=np.float32), 3)


def test_lowpass_constant_identity():
    image = np.full((3, 32, 32), 0.7, dtype=np.float32)
    out = lowpass_filter(image)
    assert np.allclose(out, 0.7, atol=1e-6)
    assert out.shape == image.shape


def test_lowpass_kernel_normalized():
    assert abs(gaussian_kernel().sum() - 1.0) < 1e-9


def test_lowpass_impulse_reproduces_kernel():
    image = np.zeros((3, 33, 33), dtype=np.float32)
    image[:, 16, 16] = 1.0
    out = lowpass_filter(image)
    # direct kernel evaluation oracle
    sigma, half = 3.0, 5
    ys = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ys**2) / (2 * sigma**2))
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    region = out[0, 16 - half : 16 + half + 1, 16 - half : 16 + half + 1]
    assert np.max(np.abs(region.astype(np.float64) - kernel)) < 1e-6
    outside = out[0].copy()
    outside[16 - half : 16 + half + 1, 16 - half : 16 + half + 1] = 0.0
    assert np.all(outside == 0.0)


def test_degradation_preserves_mean():
    for seed in range(20):
        scene = generate_scene(seed)
        lr = bicubic_downscale(scene.image, 8)
        assert abs(float(lr.mean()) - float(scene.image.mean())) < 0.01


def test_lowpass_keeps_object_color(scene_count=200):
    from textsr.evaluator import nearest_color, region_hue

    for seed in range(scene_count):
        scene = generate_scene(seed)
        quantized = np.round(scene.image * 255.0).astype(np.float32) / 255.0
        low = lowpass_filter(quantized)
        for erode in (False, True):
            hue_gt = region_hue(quantized, scene.object_mask, erode=erode)
            hue_low = region_hue(low, scene.object_mask, erode=erode)
            assert nearest_color(hue_gt) == scene.attributes["object_color"]
            assert nearest_color(hue_low) == scene.attributes["object_color"]


def test_downscale_hides_object_color(scene_count=200):
    # interior of the downscaled object stays near-achromatic: the band
    # texture cancels and only the small constant tint survives
    for seed in range(scene_count):
        scene = generate_scene(seed)
        quantized = np.round(scene.image * 255.0).astype(np.float32) / 255.0
        lr = bicubic_downscale(quantized, 8)
        mask_lr = bicubic_downscale(
            np.repeat(scene.object_mask[None].astype(np.float32), 3, axis=0), 8
        )[0]
        core = mask_lr > 0.9
        if not core.any():
            continue
        chroma = lr.max(axis=0) - lr.min(axis=0)
        assert float(chroma[core].max()) < 0.12, f"seed {seed}"


def test_band_pattern_cancels_under_downscale():
    # a full-frame copy of the object weave (mean removed) vanishes away
    # from the image border
    s = 64
    yy, xx = np.mgrid[0:s, 0:s]
    wide = ((yy + xx) % corpus.BAND_PERIOD) != corpus.NARROW_PHASE
    pattern = np.where(wide, corpus.SAT_WIDE, -corpus.SAT_NARROW)
    pattern = pattern - pattern.mean()
    field = np.repeat((0.5 + 0.2 * pattern)[None].astype(np.float32), 3, axis=0)
    lr = bicubic_downscale(field, 8)
    interior = lr[:, 2:-2, 2:-2]
    assert np.abs(interior - 0.5).max() < 1e-6


# --- dataset ------------------------------------------------------------------


def test_build_dataset_counts_and_splits(tmp_path):
    config = CorpusConfig(root=tmp_path / "data", train=8, val=4, test=4, seed=1)
    manifest = build_dataset(config)
    assert len(manifest.records) == 16
    ids = manifest.ids()
    assert len(set(ids)) == 16
    splits = {s: manifest.ids(s) for s in ("train", "val", "test")}
    assert len(splits["train"]) == 8 and len(splits["val"]) == 4 and len(splits["test"]) == 4
    assert not (set(splits["train"]) & set(splits["val"]))
    for record in manifest.records:
        assert (manifest.root / record["image"]).exists()


def test_build_dataset_reproducible(tmp_path):
    config_a = CorpusConfig(root=tmp_path / "a", train=4, val=1, test=2, seed=9)
    config_b = CorpusConfig(root=tmp_path / "b", train=4, val=1, test=2, seed=9)
    build_dataset(config_a)
    build_dataset(config_b)
    assert manifest_checksum(tmp_path / "a") == manifest_checksum(tmp_path / "b")


def test_build_dataset_zero_count_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        build_dataset(CorpusConfig(root=tmp_path, train=0, val=1, test=1))


def test_manifest_roundtrip(tmp_path):
    config = CorpusConfig(root=tmp_path / "d", train=3, val=1, test=1, seed=4)
    written = build_dataset(config)
    loaded = load_manifest(tmp_path / "d")
    assert loaded.records == written.records
    assert loaded.image_size == 64
    meta = json.loads((tmp_path / "d" / "meta.json").read_text())
    assert meta["seed"] == 4 and meta["grammar_version"] == corpus.GRAMMAR_VERSION


def test_load_batch_contract(tmp_path):
    config = CorpusConfig(root=tmp_path / "d", train=3, val=1, test=1, seed=2)
    manifest = build_dataset(config)
    ids = manifest.ids("train")[:2]
    batch = load_batch(manifest, ids, scale=8)
    assert batch.lr.shape == (2, 3, 8, 8)
    assert batch.gt.shape == (2, 3, 64, 64)
    assert batch.gt_low.shape == (2, 3, 64, 64)
    assert len(batch.captions) == 2
    # degradation consistency against the public ops
    gt0 = corpus.load_image(manifest.root / manifest.by_id(ids[0])["image"])
    assert np.array_equal(batch.lr[0], bicubic_downscale(gt0, 8))
    assert np.array_equal(batch.gt_low[0], lowpass_filter(gt0))


def test_load_batch_empty_and_permuted(tmp_path):
    config = CorpusConfig(root=tmp_path / "d", train=4, val=1, test=1, seed=2)
    manifest = build_dataset(config)
    empty = load_batch(manifest, [], scale=8)
    assert empty.lr.shape == (0, 3, 8, 8)
    ids = manifest.ids("train")[:3]
    fwd = load_batch(manifest, ids, scale=8)
    rev = load_batch(manifest, ids[::-1], scale=8)
    assert np.array_equal(fwd.gt[0], rev.gt[2])
    assert fwd.captions[0] == rev.captions[2]


def test_load_batch_missing_id(tmp_path):
    config = CorpusConfig(root=tmp_path / "d", train=2, val=1, test=1, seed=2)
    manifest = build_dataset(config)
    with pytest.raises(KeyError):
        load_batch(manifest, ["nope"], scale=8)


def test_caption_for_template():
    attrs = {
        "size": "small",
        "object_color": "red",
        "shape": "circle",
        "background_color": "blue",
        "position": "center",
    }
    assert caption_for(attrs) == "a small red circle on a blue background"
    assert caption_for(attrs, with_position=True).endswith("in the center")
