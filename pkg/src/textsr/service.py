"""HTTP inference service: caption-conditioned SR with attention maps.

The app is stateless: weights load once and are never mutated by requests, so
identical requests produce byte-identical image payloads (latency aside) and
concurrent handling needs no locking.
"""

from __future__ import annotations

import base64
import io
import time

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .text import PAD, UNK, clean_words

DEFAULT_MAX_PIXELS = 16384


class SRRequest(BaseModel):
    image_b64: str = ""
    caption: str = ""
    return_attention: bool = False
    return_coarse: bool = False


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error_code": code, "message": message})


def encode_image_b64(image: np.ndarray) -> str:
    """(3, H, W) float in [0, 1] -> base64 PNG."""
    arr = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    pil = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image_b64(data: str) -> np.ndarray:
    raw = base64.b64decode(data, validate=True)
    with Image.open(io.BytesIO(raw)) as pil:
        arr = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def encode_map_b64(grid: np.ndarray) -> tuple:
    """Min-max normalize a raw map to a grayscale PNG; returns (b64, min, max)."""
    lo = float(grid.min())
    hi = float(grid.max())
    if hi - lo > 1e-12:
        scaled = (grid - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(grid)
    pixels = (scaled * 255.0).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii"), lo, hi


def build_app(bundle, max_pixels: int = DEFAULT_MAX_PIXELS) -> FastAPI:
    """Wrap a ModelBundle in the editing API."""
    app = FastAPI(title="textsr")
    vocab = bundle.vocab

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "scale": bundle.config.model.scale,
            "vocab_size": len(vocab),
        }

    @app.get("/vocab")
    def vocab_words():
        return {"words": vocab.words()}

    @app.post("/sr")
    def sr(request: SRRequest):
        started = time.perf_counter()
        words = clean_words(request.caption)
        if not words:
            return _error(422, "empty_caption", "caption has no usable words")
        known = [w for w in words
                 if vocab.token_to_index.get(w, UNK) not in
                 (PAD, UNK)]
        if not known:
            return _error(422, "no_known_words",
                          "caption contains no in-vocabulary words")
        try:
            lr = decode_image_b64(request.image_b64)
        except Exception:
            return _error(422, "bad_image", "image_b64 is not a decodable PNG")
        if lr.shape[1] * lr.shape[2] > max_pixels:
            return _error(413, "oversized_image",
                          f"image exceeds {max_pixels} pixels")

        result = bundle.super_resolve(lr, request.caption)
        payload = {
            "fine_b64": encode_image_b64(result.fine),
            "tim": bundle.tim(result.fine, request.caption),
            "latency_ms": (time.perf_counter() - started) * 1000.0,
        }
        if request.return_coarse:
            payload["coarse_b64"] = encode_image_b64(result.coarse)
        if request.return_attention:
            maps = []
            if result.attention is not None:
                for word, grid in zip(result.words, result.attention):
                    map_b64, lo, hi = encode_map_b64(grid)
                    maps.append({"word": word, "map_b64": map_b64,
                                 "raw_min": lo, "raw_max": hi})
            payload["attention"] = maps
        return payload

    return app


def serve(bundle, host: str = "127.0.0.1", port: int = 8000,
          max_pixels: int = DEFAULT_MAX_PIXELS) -> None:
    import uvicorn

    uvicorn.run(build_app(bundle, max_pixels=max_pixels), host=host, port=port)
