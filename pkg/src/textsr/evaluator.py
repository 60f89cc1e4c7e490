"""Quantitative evaluation: PSNR, SSIM, matching score, controllability probes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DEFAULT_COLORS
from .errors import ProbeDefinitionError, ShapeError

PSNR_CAP_DB = 99.0


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def ssim(a: np.ndarray, b: np.ndarray, window: int = 8, k1: float = 0.01, k2: float = 0.03,
         peak: float = 1.0) -> float:
    """Mean local SSIM over all stride-1 sliding windows, averaged over channels.

    Uses population moments inside each window.
    """
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    _, h, w = a.shape
    if window > min(h, w):
        raise ShapeError(f"window {window} exceeds image dims {h}x{w}")
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    scores = []
    for ch in range(a.shape[0]):
        x = a[ch].astype(np.float64)
        y = b[ch].astype(np.float64)
        wx = np.lib.stride_tricks.sliding_window_view(x, (window, window))
        wy = np.lib.stride_tricks.sliding_window_view(y, (window, window))
        mx = wx.mean(axis=(-2, -1))
        my = wy.mean(axis=(-2, -1))
        vx = (wx**2).mean(axis=(-2, -1)) - mx**2
        vy = (wy**2).mean(axis=(-2, -1)) - my**2
        cov = (wx * wy).mean(axis=(-2, -1)) - mx * my
        s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
        scores.append(s.mean())
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# hue utilities


def rgb_to_hsv(image: np.ndarray):
    """(3, H, W) in [0,1] -> (hue degrees, saturation, value), each (H, W)."""
    r, g, b = image[0].astype(np.float64), image[1].astype(np.float64), image[2].astype(np.float64)
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    delta = maxc - minc
    hue = np.zeros_like(maxc)
    safe = delta > 1e-12
    rc = np.where(safe, (maxc - r) / np.where(safe, delta, 1.0), 0.0)
    gc = np.where(safe, (maxc - g) / np.where(safe, delta, 1.0), 0.0)
    bc = np.where(safe, (maxc - b) / np.where(safe, delta, 1.0), 0.0)
    hue = np.where(maxc == r, bc - gc, hue)
    hue = np.where((maxc == g) & safe, 2.0 + rc - bc, hue)
    hue = np.where((maxc == b) & safe, 4.0 + gc - rc, hue)
    hue = (hue * 60.0) % 360.0
    sat = np.where(maxc > 1e-12, delta / np.maximum(maxc, 1e-12), 0.0)
    return hue, sat, maxc


def erode_mask(mask: np.ndarray) -> np.ndarray:
    """4-neighborhood erosion by one pixel; falls back to the input if it empties."""
    m = mask.astype(bool)
    out = m.copy()
    out[1:, :] &= m[:-1, :]
    out[:-1, :] &= m[1:, :]
    out[:, 1:] &= m[:, :-1]
    out[:, :-1] &= m[:, 1:]
    out[0, :] = out[-1, :] = False
    out[:, 0] = out[:, -1] = False
    if not out.any():
        return m.astype(np.uint8)
    return out.astype(np.uint8)


def region_hue(image: np.ndarray, mask: np.ndarray, erode: bool = True) -> float:
    """Saturation-and-value weighted circular mean hue (degrees) inside a mask."""
    if erode:
        mask = erode_mask(mask)
    hue, sat, val = rgb_to_hsv(image)
    select = mask.astype(bool)
    weights = (sat * val)[select]
    angles = np.deg2rad(hue[select])
    if weights.sum() < 1e-9:
        return 0.0
    x = float(np.sum(weights * np.cos(angles)))
    y = float(np.sum(weights * np.sin(angles)))
    return float(np.rad2deg(np.arctan2(y, x)) % 360.0)


def hue_distance(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def nearest_color(hue: float, colors: dict | None = None) -> str:
    colors = colors or DEFAULT_COLORS
    return min(colors, key=lambda name: hue_distance(hue, colors[name]))


# ---------------------------------------------------------------------------
# model evaluation


@dataclass
class EvalReport:
    rows: list
    aggregates: dict
    config: dict = field(default_factory=dict)

    def to_files(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "rows.jsonl", "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        with open(out_dir / "report.json", "w") as fh:
            json.dump({"aggregates": self.aggregates, "config": self.config}, fh, indent=2,
                      sort_keys=True)


def build_report(rows: list, config: dict | None = None) -> EvalReport:
    aggregates = {}
    if rows:
        for key in ("psnr", "ssim", "tim"):
            if key in rows[0]:
                aggregates[f"mean_{key}"] = float(np.mean([r[key] for r in rows]))
    aggregates["count"] = len(rows)
    return EvalReport(rows=rows, aggregates=aggregates, config=config or {})


def evaluate(bundle, manifest, split: str = "test", limit: int | None = None,
             out_dir=None) -> EvalReport:
    """Run the generator over a manifest split and score each item.

    ``bundle`` is a :class:`textsr.trainer.ModelBundle`; imports stay local so the
    metric helpers above remain usable without torch.
    """
    from . import corpus as corpus_mod
    from .matching import tim_score

    ids = manifest.ids(split)
    if limit is not None:
        ids = ids[:limit]
    rows = []
    for record_id in ids:
        batch = corpus_mod.load_batch(manifest, [record_id], scale=bundle.config.model.scale)
        caption = batch.captions[0]
        output = bundle.super_resolve(batch.lr[0], caption)
        fine = output.fine
        gt = batch.gt[0]
        tim = tim_score(
            fine,
            caption,
            bundle.vocab,
            bundle.text_encoder,
            bundle.region_encoder,
            gamma1=bundle.config.loss.gamma1,
            gamma2=bundle.config.loss.gamma2,
            t_max=bundle.config.model.t_max,
        )
        rows.append(
            {
                "id": record_id,
                "psnr": float(psnr(fine, gt)),
                "ssim": float(ssim(fine, gt)),
                "tim": float(tim),
            }
        )
    report = build_report(rows, config={"split": split, "scale": bundle.config.model.scale})
    if out_dir is not None:
        report.to_files(out_dir)
    return report


# ---------------------------------------------------------------------------
# controllability


def _caption_color_diff(caption_a: str, caption_b: str, colors: dict) -> tuple:
    words_a = caption_a.strip().lower().split()
    words_b = caption_b.strip().lower().split()
    if len(words_a) != len(words_b):
        raise ProbeDefinitionError("captions must have the same word count")
    diffs = [(wa, wb) for wa, wb in zip(words_a, words_b) if wa != wb]
    if len(diffs) > 1:
        raise ProbeDefinitionError(f"captions differ in {len(diffs)} words, expected at most 1")
    if diffs:
        wa, wb = diffs[0]
        if wa not in colors or wb not in colors:
            raise ProbeDefinitionError(f"differing words {wa!r}/{wb!r} are not grammar colors")
        return wa, wb
    # identical captions: the color word is the object color slot
    return words_a[2], words_b[2]


def controllability_probe(bundle, lr_image: np.ndarray, object_mask: np.ndarray,
                          caption_a: str, caption_b: str, colors: dict | None = None) -> dict:
    colors = colors or DEFAULT_COLORS
    _, color_b = _caption_color_diff(caption_a, caption_b, colors)
    out_a = bundle.super_resolve(lr_image, caption_a).fine
    out_b = bundle.super_resolve(lr_image, caption_b).fine
    hue_a = region_hue(out_a, object_mask)
    hue_b = region_hue(out_b, object_mask)
    return {
        "changed": nearest_color(hue_b, colors) == color_b,
        "hue_shift": hue_distance(hue_a, hue_b),
        "hue_a": hue_a,
        "hue_b": hue_b,
        "target_color": color_b,
    }


def probe_suite(bundle, manifest, count: int = 50, seed: int = 0,
                colors: dict | None = None) -> dict:
    """Swap the object-color word on test scenes and measure the flip rate."""
    from . import corpus as corpus_mod

    colors = colors or DEFAULT_COLORS
    color_names = sorted(colors)
    rng = np.random.default_rng(seed)
    records = manifest.split("test")
    if not records:
        raise ProbeDefinitionError("manifest has no test split")
    results = []
    for k in range(count):
        record = records[int(rng.integers(len(records)))]
        attrs = record["attributes"]
        caption_a = record["captions"][0]
        choices = [c for c in color_names if c not in (attrs["object_color"], attrs["background_color"])]
        new_color = choices[int(rng.integers(len(choices)))]
        caption_b = caption_a.replace(f" {attrs['object_color']} ", f" {new_color} ", 1)
        batch = corpus_mod.load_batch(manifest, [record["id"]], scale=bundle.config.model.scale)
        mask = _mask_for_record(manifest, record)
        result = controllability_probe(bundle, batch.lr[0], mask, caption_a, caption_b, colors)
        result["id"] = record["id"]
        results.append(result)
    rate = float(np.mean([r["changed"] for r in results]))
    return {"rate": rate, "count": count, "results": results}


def _mask_for_record(manifest, record) -> np.ndarray:
    """Recompute the object mask by re-rendering the record's scene."""
    from .corpus import generate_scene

    seed = record.get("scene_seed")
    if seed is None:
        raise ProbeDefinitionError(f"record {record['id']} carries no scene_seed")
    scene = generate_scene(seed, image_size=manifest.image_size)
    return scene.object_mask
