"""Synthetic captioned-shapes corpus: generation, degradation, batching.

Every scene is a single textured shape on a colored background plus a
caption produced by a small fixed grammar, so ground truth for every
caption word is known exactly. Generation is a pure function of
(seed, config).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, ShapeError

GRAMMAR_VERSION = "1"

# Hue in degrees; spaced 60 degrees apart so nearest-color classification
# of slightly shifted region means stays unambiguous.
DEFAULT_COLORS = {
    "red": 0.0,
    "yellow": 60.0,
    "green": 120.0,
    "cyan": 180.0,
    "blue": 240.0,
    "magenta": 300.0,
}

DEFAULT_SHAPES = ("circle", "square", "triangle", "diamond", "cross")

# Size -> object radius as a fraction of min(H, W) / 2. Chosen so every
# shape's mask fraction lands inside [0.02, 0.60].
DEFAULT_SIZES = {"small": 0.36, "large": 0.62}

DEFAULT_POSITIONS = ("center", "left", "right", "top", "bottom")

MASK_FRACTION_MIN = 0.02
MASK_FRACTION_MAX = 0.60

# Object texture: a diagonal period-4 weave over (x + y) mod 4: three
# "wide" rows of the caption hue at moderate saturation, one "narrow" row
# of the exact complement at high saturation. The complement is
# antiparallel in RGB and the amplitudes are tuned so the pattern's mean
# chroma is a small constant tint toward the caption hue (OBJECT_TINT):
# everything except that tint cancels exactly under the default x8
# Catmull-Rom downscale (each residue class receives total weight 1/8
# away from edges), so the low resolution input is nearly color-blind
# about the object while the full-resolution image shows the exact hue at
# high amplitude over most of the object. The asymmetric duty cycle makes
# hue and complement visually distinct (not shift-equivalent), so encoder
# pretraining can key on the exact hue. Diagonal orientation keeps thin
# mask features (cross arms, triangle tips) sampling all phases.
BAND_PERIOD = 4
NARROW_PHASE = 3
OBJECT_VAL = 0.90
OBJECT_TINT = 0.06
SAT_NARROW = 0.80
SAT_WIDE = (4.0 * OBJECT_TINT / OBJECT_VAL + SAT_NARROW) / 3.0

# Band amplitude fades to zero over this many pixels inside the object
# boundary so truncated periods at the rim stay achromatic.
FADE_REACH = 4

# Background desaturation halo around the object, in pixels: fully neutral
# within HALO_FLAT of the boundary, full saturation beyond HALO_REACH.
HALO_FLAT = 4
HALO_REACH = 10


def _boundary_distance(mask: np.ndarray, reach: int) -> np.ndarray:
    """Manhattan distance from the mask (0 inside), saturated at ``reach``."""
    distance = np.full(mask.shape, float(reach))
    covered = mask.astype(bool)
    for d in range(reach):
        distance[covered & (distance > d)] = d
        grown = covered.copy()
        grown[1:, :] |= covered[:-1, :]
        grown[:-1, :] |= covered[1:, :]
        grown[:, 1:] |= covered[:, :-1]
        grown[:, :-1] |= covered[:, 1:]
        covered = grown
    return distance


@dataclass(frozen=True)
class GrammarConfig:
    shapes: tuple = DEFAULT_SHAPES
    colors: dict = field(default_factory=lambda: dict(DEFAULT_COLORS))
    sizes: dict = field(default_factory=lambda: dict(DEFAULT_SIZES))
    positions: tuple = DEFAULT_POSITIONS
    version: str = GRAMMAR_VERSION

    def validate(self):
        for name, values in (
            ("shapes", self.shapes),
            ("colors", self.colors),
            ("sizes", self.sizes),
            ("positions", self.positions),
        ):
            if len(values) == 0:
                raise ConfigurationError(f"grammar has no {name}")


@dataclass
class Scene:
    image: np.ndarray          # (3, H, W) float32 in [0, 1]
    caption: str               # primary caption (no position clause)
    captions: list             # all grammar variants for this scene
    object_mask: np.ndarray    # (H, W) uint8 in {0, 1}
    attributes: dict


def caption_for(attributes: dict, with_position: bool = False) -> str:
    text = (
        f"a {attributes['size']} {attributes['object_color']} "
        f"{attributes['shape']} on a {attributes['background_color']} background"
    )
    if with_position:
        text += f" in the {attributes['position']}"
    return text


def parse_caption(caption: str, grammar: GrammarConfig | None = None) -> dict:
    """Invert :func:`caption_for`; raises ValueError on captions outside the grammar."""
    grammar = grammar or GrammarConfig()
    words = caption.strip().lower().split()
    if len(words) < 8 or words[0] != "a" or words[4] != "on" or words[5] != "a":
        raise ValueError(f"caption does not match grammar: {caption!r}")
    size, color, shape, background = words[1], words[2], words[3], words[6]
    if words[7] != "background":
        raise ValueError(f"caption does not match grammar: {caption!r}")
    attributes = {
        "size": size,
        "object_color": color,
        "shape": shape,
        "background_color": background,
        "position": None,
    }
    rest = words[8:]
    if rest:
        if len(rest) != 3 or rest[0] != "in" or rest[1] != "the":
            raise ValueError(f"caption does not match grammar: {caption!r}")
        attributes["position"] = rest[2]
    for key, pool in (
        ("size", grammar.sizes),
        ("object_color", grammar.colors),
        ("shape", grammar.shapes),
        ("background_color", grammar.colors),
    ):
        if attributes[key] not in pool:
            raise ValueError(f"unknown {key} {attributes[key]!r}")
    return attributes


def hsv_to_rgb(h, s, v):
    """Vectorized HSV -> RGB. h in degrees, s and v in [0, 1]."""
    h = (np.asarray(h, dtype=np.float64) % 360.0) / 60.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=0)


def _shape_mask(shape: str, cy: float, cx: float, r: float, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    if shape == "circle":
        inside = dy * dy + dx * dx <= r * r
    elif shape == "square":
        inside = np.maximum(np.abs(dy), np.abs(dx)) <= r
    elif shape == "diamond":
        inside = np.abs(dy) + np.abs(dx) <= r
    elif shape == "triangle":
        # isoceles triangle: apex at (cy - r, cx), base from (cy + r, cx - r) to (cy + r, cx + r)
        inside = (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2.0)
    elif shape == "cross":
        arm = r / 3.0
        inside = ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= r)
        )
    else:
        raise ConfigurationError(f"unknown shape {shape!r}")
    return inside.astype(np.uint8)


_POSITION_CENTERS = {
    "center": (0.50, 0.50),
    "left": (0.50, 0.28),
    "right": (0.50, 0.72),
    "top": (0.28, 0.50),
    "bottom": (0.72, 0.50),
}


def generate_scene(seed: int, grammar: GrammarConfig | None = None, image_size: int = 64) -> Scene:
    grammar = grammar or GrammarConfig()
    grammar.validate()
    rng = np.random.default_rng(seed)

    shapes = list(grammar.shapes)
    colors = list(grammar.colors)
    sizes = list(grammar.sizes)
    positions = list(grammar.positions)

    shape = shapes[rng.integers(len(shapes))]
    color = colors[rng.integers(len(colors))]
    background = colors[rng.integers(len(colors))]
    while background == color and len(colors) > 1:
        background = colors[rng.integers(len(colors))]
    size = sizes[rng.integers(len(sizes))]
    position = positions[rng.integers(len(positions))]

    attributes = {
        "shape": shape,
        "object_color": color,
        "background_color": background,
        "size": size,
        "position": position,
    }

    s = image_size
    r = grammar.sizes[size] * (s / 2.0)
    base_cy, base_cx = _POSITION_CENTERS.get(position, (0.5, 0.5))
    jitter = 0.05
    cy = (base_cy + rng.uniform(-jitter, jitter)) * s
    cx = (base_cx + rng.uniform(-jitter, jitter)) * s
    # keep the banded object clear of the border pixels whose downscale
    # taps are edge-clamped, so the period cancellation stays exact
    margin = 6
    cy = float(np.clip(cy, r + margin, s - r - margin))
    cx = float(np.clip(cx, r + margin, s - r - margin))

    mask = _shape_mask(shape, cy, cx, r, s)

    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    hue = grammar.colors[color]
    bg_hue = grammar.colors[background]

    # Background: flat hue with a gentle luminance wave so the refine stage
    # has structure to restore. Saturation ramps down to zero next to the
    # object so the low-pass label's boundary mixes in neutral pixels
    # instead of background hue, keeping the object's labeled color intact.
    fy, fx = rng.integers(2, 6), rng.integers(2, 6)
    phase_y, phase_x = rng.uniform(0, 2 * np.pi, size=2)
    wave = 1.0 + 0.07 * np.sin(2 * np.pi * fy * yy / s + phase_y) * np.sin(
        2 * np.pi * fx * xx / s + phase_x
    )
    halo = _boundary_distance(mask, HALO_REACH)
    bg_sat = 0.50 * np.clip((halo - HALO_FLAT) / (HALO_REACH - HALO_FLAT), 0.0, 1.0)
    background_rgb = hsv_to_rgb(bg_hue, bg_sat, np.clip(0.88 * wave, 0.0, 1.0))

    # Object: diagonal weave of the caption hue (wide rows) and its exact
    # complement (narrow rows), amplitudes balanced down to a small tint
    # toward the caption hue. The weave cancels out of the downscaled
    # input, so at train time the caption is the only usable color
    # evidence; at full resolution the hue is visible at high amplitude.
    # Band amplitude fades near the rim so truncated periods do not tint
    # the boundary.
    wide = ((yy.astype(int) + xx.astype(int)) % BAND_PERIOD) != NARROW_PHASE
    fade = np.clip(_boundary_distance(1 - mask, FADE_REACH + 1) / FADE_REACH, 0.0, 1.0)
    pixel_hue = np.where(wide, hue, (hue + 180.0) % 360.0)
    sat = np.where(wide, SAT_WIDE, SAT_NARROW) * fade
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2) / max(r, 1.0)
    val = OBJECT_VAL * (1.0 - 0.08 * np.clip(dist, 0.0, 1.0))
    object_rgb = hsv_to_rgb(pixel_hue, sat, val)

    image = np.where(mask[None, :, :] > 0, object_rgb, background_rgb)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)

    fraction = float(mask.mean())
    if not (MASK_FRACTION_MIN <= fraction <= MASK_FRACTION_MAX):
        raise ConfigurationError(
            f"mask fraction {fraction:.4f} outside [{MASK_FRACTION_MIN}, {MASK_FRACTION_MAX}]"
        )

    captions = [caption_for(attributes, with_position=False), caption_for(attributes, with_position=True)]
    return Scene(
        image=image,
        caption=captions[0],
        captions=captions,
        object_mask=mask,
        attributes=attributes,
    )


# ---------------------------------------------------------------------------
# degradation


def _cubic_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Catmull-Rom cubic (a = -0.5)."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    out = np.where(
        t <= 1.0,
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0,
        np.where(t < 2.0, a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a, 0.0),
    )
    return out


def _bicubic_weights(n_in: int, factor: int) -> np.ndarray:
    """Row-stochastic (n_in // factor, n_in) downscale matrix.

    Antialiased: the kernel is stretched by the scale factor. Taps falling
    outside the image are clamped onto the edge pixels, then each row is
    renormalized.
    """
    n_out = n_in // factor
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    support = 2 * factor
    for i in range(n_out):
        center = (i + 0.5) * factor - 0.5
        left = int(np.floor(center)) - support + 1
        taps = np.arange(left, left + 2 * support)
        w = _cubic_kernel((center - taps) / factor) / factor
        taps = np.clip(taps, 0, n_in - 1)
        np.add.at(weights[i], taps, w)
        weights[i] /= weights[i].sum()
    return weights


def bicubic_downscale(image: np.ndarray, factor: int, allow_identity: bool = False) -> np.ndarray:
    if factor == 1:
        if allow_identity:
            return image.astype(np.float32).copy()
        raise ConfigurationError("factor 1 is rejected by default")
    if factor not in (2, 4, 8, 16):
        raise ConfigurationError(f"unsupported downscale factor {factor}")
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) image, got {image.shape}")
    _, h, w = image.shape
    if h % factor or w % factor:
        raise ShapeError(f"dimensions {h}x{w} not divisible by {factor}")
    wh = _bicubic_weights(h, factor)
    ww = _bicubic_weights(w, factor)
    out = np.einsum("oh,chw,pw->cop", wh, image.astype(np.float64), ww)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


LOWPASS_SIGMA = 3.0
LOWPASS_SIZE = 11


def gaussian_kernel(size: int = LOWPASS_SIZE, sigma: float = LOWPASS_SIGMA) -> np.ndarray:
    half = size // 2
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def lowpass_filter(image: np.ndarray) -> np.ndarray:
    """Gaussian blur (sigma=3, 11x11, reflect padding, unit-sum kernel)."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) image, got {image.shape}")
    kernel = gaussian_kernel()
    half = LOWPASS_SIZE // 2
    padded = np.pad(image.astype(np.float64), ((0, 0), (half, half), (half, half)), mode="reflect")
    _, h, w = image.shape
    out = np.zeros((3, h, w), dtype=np.float64)
    for dy in range(LOWPASS_SIZE):
        for dx in range(LOWPASS_SIZE):
            out += kernel[dy, dx] * padded[:, dy : dy + h, dx : dx + w]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# dataset on disk


@dataclass
class DatasetManifest:
    root: Path
    records: list                # dicts: id, image, captions, attributes, split
    seed: int
    grammar_version: str
    image_size: int

    def by_id(self, record_id: str) -> dict:
        for record in self.records:
            if record["id"] == record_id:
                return record
        raise KeyError(f"unknown id {record_id!r}")

    def split(self, name: str) -> list:
        return [r for r in self.records if r["split"] == name]

    def ids(self, split: str | None = None) -> list:
        records = self.records if split is None else self.split(split)
        return [r["id"] for r in records]


@dataclass
class CorpusConfig:
    root: Path
    train: int = 2000
    val: int = 64
    test: int = 200
    seed: int = 0
    image_size: int = 64
    grammar: GrammarConfig = field(default_factory=GrammarConfig)


def build_dataset(config: CorpusConfig) -> DatasetManifest:
    counts = {"train": config.train, "val": config.val, "test": config.test}
    for split, count in counts.items():
        if count < 1:
            raise ConfigurationError(f"split {split!r} needs at least 1 record, got {count}")
    config.grammar.validate()

    root = Path(config.root)
    (root / "images").mkdir(parents=True, exist_ok=True)

    records = []
    index = 0
    for split in ("train", "val", "test"):
        for _ in range(counts[split]):
            scene_seed = int(np.random.SeedSequence([config.seed, index]).generate_state(1)[0])
            scene = generate_scene(scene_seed, config.grammar, config.image_size)
            record_id = f"{split}-{index:05d}"
            rel = f"images/{record_id}.png"
            save_image(scene.image, root / rel)
            records.append(
                {
                    "id": record_id,
                    "image": rel,
                    "captions": scene.captions,
                    "attributes": scene.attributes,
                    "split": split,
                    "scene_seed": scene_seed,
                }
            )
            index += 1

    with open(root / "manifest.jsonl", "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    meta = {
        "seed": config.seed,
        "grammar_version": config.grammar.version,
        "image_size": config.image_size,
    }
    with open(root / "meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)

    return DatasetManifest(
        root=root,
        records=records,
        seed=config.seed,
        grammar_version=config.grammar.version,
        image_size=config.image_size,
    )


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    with open(root / "meta.json") as fh:
        meta = json.load(fh)
    records = []
    with open(root / "manifest.jsonl") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return DatasetManifest(
        root=root,
        records=records,
        seed=meta["seed"],
        grammar_version=meta["grammar_version"],
        image_size=meta["image_size"],
    )


def manifest_checksum(root) -> str:
    blob = (Path(root) / "manifest.jsonl").read_bytes()
    return hashlib.sha256(blob).hexdigest()


def save_image(image: np.ndarray, path) -> None:
    arr = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


@dataclass
class Batch:
    ids: list
    lr: np.ndarray        # (B, 3, H/scale, W/scale)
    gt: np.ndarray        # (B, 3, H, W)
    gt_low: np.ndarray    # (B, 3, H, W)
    captions: list


def load_batch(manifest: DatasetManifest, ids: list, scale: int) -> Batch:
    size = manifest.image_size
    gt = np.zeros((len(ids), 3, size, size), dtype=np.float32)
    lr = np.zeros((len(ids), 3, size // scale, size // scale), dtype=np.float32)
    low = np.zeros_like(gt)
    captions = []
    for i, record_id in enumerate(ids):
        record = manifest.by_id(record_id)
        image = load_image(manifest.root / record["image"])
        gt[i] = image
        lr[i] = bicubic_downscale(image, scale)
        low[i] = lowpass_filter(image)
        captions.append(record["captions"][0])
    return Batch(ids=list(ids), lr=lr, gt=gt, gt_low=low, captions=captions)
