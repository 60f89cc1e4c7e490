"""Word/region matching: similarity chain, TIM score, L_TIC loss, R-precision.

The chain runs s -> s' -> a -> c -> R -> TIM for one image/caption pair:
raw inner products between word and region features, a softmax over words
per region, a sharpened softmax over regions per word, region-context
vectors, per-word cosine relevance, and finally a log-sum-exp pooled score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import (
    ConfigurationError,
    EmptyBatchError,
    EmptyCaptionError,
    ShapeError,
)
from .text import TextEncoder, Vocabulary, tokenize

GAMMA1 = 4.0   # region-softmax sharpening
GAMMA2 = 5.0   # relevance log-sum-exp temperature
GAMMA3 = 10.0  # batch posterior temperature

NORM_EPS = 1e-8


@dataclass
class RegionFeatures:
    x: torch.Tensor           # (D, N_r), one column per sub-region
    global_vec: torch.Tensor  # (D,), mean-pooled projection


@dataclass
class MatchResult:
    s: torch.Tensor        # (l, N_r) raw similarity
    s_prime: torch.Tensor  # (l, N_r) word-normalized similarity
    a: torch.Tensor        # (l, N_r) region attention per word
    c: torch.Tensor        # (D, l) region-context vectors
    r: torch.Tensor        # (l,) per-word cosine relevance
    tim: torch.Tensor      # scalar


@dataclass
class BatchPosterior:
    relevance: torch.Tensor        # (M, M), [n, m] = image n vs caption m
    text_posterior: torch.Tensor   # (M, M), row n = P(caption | image n)
    image_posterior: torch.Tensor  # (M, M), row m = P(image | caption m)
    loss: torch.Tensor             # scalar, sum of both negative log diagonals

    @property
    def p_text_given_image(self) -> torch.Tensor:
        return self.text_posterior.diagonal()

    @property
    def p_image_given_text(self) -> torch.Tensor:
        return self.image_posterior.diagonal()


class RegionEncoder(nn.Module):
    """Strided conv tower mapping an RGB image to a D-channel region grid.

    Three stride-2 blocks plus one stride-1 block: a 64px input becomes an
    8x8 grid of D-dim region features.
    """

    def __init__(self, dim: int = 64):
        super().__init__()
        self.dim = dim
        self.net = nn.Sequential(
            nn.Conv2d(3, 32, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(32, 64, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(64, dim, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(dim, dim, 3, stride=1, padding=1),
        )
        self.proj = nn.Linear(dim, dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        return self.net(images)

    def grid_regions(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, D, N_r)."""
        return self(images).flatten(2)

    def encode(self, image: torch.Tensor) -> RegionFeatures:
        if image.dim() != 3:
            raise ShapeError(f"expected a (3, H, W) image, got {tuple(image.shape)}")
        x = self.grid_regions(image.unsqueeze(0))[0]
        return RegionFeatures(x=x, global_vec=self.proj(x.mean(dim=1)))


def similarity_matrix(words: torch.Tensor, regions: torch.Tensor):
    """words (D, l) x regions (D, N_r) -> raw and word-normalized similarity."""
    if words.dim() != 2 or regions.dim() != 2 or words.shape[0] != regions.shape[0]:
        raise ShapeError(
            f"feature widths disagree: words {tuple(words.shape)}, "
            f"regions {tuple(regions.shape)}"
        )
    if words.shape[1] < 1:
        raise EmptyCaptionError("similarity needs at least one real word")
    s = words.t() @ regions
    return s, torch.softmax(s, dim=0)


def region_context(s_prime: torch.Tensor, regions: torch.Tensor, gamma1: float = GAMMA1):
    """Attend over regions per word; returns context (D, l) and weights (l, N_r)."""
    a = torch.softmax(gamma1 * s_prime, dim=1)
    c = regions @ a.t()
    return c, a


def relevance(c: torch.Tensor, words: torch.Tensor) -> torch.Tensor:
    """Per-word cosine between context and word columns; zero-norm pairs map to 0."""
    num = (c * words).sum(dim=0)
    c_norm = c.norm(dim=0)
    w_norm = words.norm(dim=0)
    ok = (c_norm >= NORM_EPS) & (w_norm >= NORM_EPS)
    safe = num / (c_norm * w_norm).clamp_min(NORM_EPS * NORM_EPS)
    return torch.where(ok, safe, torch.zeros_like(num))


def tim_from_relevance(r: torch.Tensor, gamma2: float = GAMMA2) -> torch.Tensor:
    return torch.logsumexp(gamma2 * r, dim=-1)


def match_pair(words: torch.Tensor, regions: torch.Tensor,
               gamma1: float = GAMMA1, gamma2: float = GAMMA2) -> MatchResult:
    """Full chain for one pair; ``words`` holds only real-word columns."""
    s, s_prime = similarity_matrix(words, regions)
    c, a = region_context(s_prime, regions, gamma1)
    r = relevance(c, words)
    return MatchResult(s=s, s_prime=s_prime, a=a, c=c, r=r,
                       tim=tim_from_relevance(r, gamma2))


def tim_score(image, caption: str, vocab: Vocabulary, text_encoder: TextEncoder,
              region_encoder: RegionEncoder, gamma1: float = GAMMA1,
              gamma2: float = GAMMA2, t_max: int = 16) -> float:
    """Matching score between one image (3, H, W) array/tensor and a caption."""
    tokens = tokenize(caption, vocab, t_max)
    with torch.no_grad():
        feats = text_encoder.encode(tokens)
        img = torch.as_tensor(np.asarray(image), dtype=torch.float32)
        regions = region_encoder.encode(img).x
        result = match_pair(feats.words[:, : tokens.length], regions, gamma1, gamma2)
    return float(result.tim)


def pairwise_relevance(words: torch.Tensor, regions: torch.Tensor, lengths,
                       gamma1: float = GAMMA1, gamma2: float = GAMMA2) -> torch.Tensor:
    """All image/caption relevance scores for a batch.

    words (M, D, T), regions (M, D, N_r) -> (M, M) matrix whose [n, m] entry
    is TIM(image_n, caption_m) / gamma2, the scale the batch posterior uses.
    """
    m_total = words.shape[0]
    cols = []
    for m in range(m_total):
        ell = int(lengths[m])
        if ell < 1:
            raise EmptyCaptionError("caption with no real words in matching batch")
        w = words[m, :, :ell]
        s = torch.einsum("dl,bdn->bln", w, regions)
        s_prime = torch.softmax(s, dim=1)
        a = torch.softmax(gamma1 * s_prime, dim=2)
        c = torch.einsum("bln,bdn->bdl", a, regions)
        num = (c * w.unsqueeze(0)).sum(dim=1)
        c_norm = c.norm(dim=1)
        w_norm = w.norm(dim=0).unsqueeze(0)
        ok = (c_norm >= NORM_EPS) & (w_norm >= NORM_EPS)
        safe = num / (c_norm * w_norm).clamp_min(NORM_EPS * NORM_EPS)
        r = torch.where(ok, safe, torch.zeros_like(num))
        cols.append(torch.logsumexp(gamma2 * r, dim=1) / gamma2)
    return torch.stack(cols, dim=1)


def tic_loss(words: torch.Tensor, regions: torch.Tensor, lengths,
             gamma1: float = GAMMA1, gamma2: float = GAMMA2,
             gamma3: float = GAMMA3) -> BatchPosterior:
    """Symmetric negative-log-posterior matching loss over an aligned batch."""
    if words.dim() != 3 or words.shape[0] == 0:
        raise EmptyBatchError("matching loss needs a non-empty aligned batch")
    if regions.shape[0] != words.shape[0]:
        raise ShapeError(
            f"batch sizes disagree: {words.shape[0]} captions, {regions.shape[0]} images"
        )
    rel = pairwise_relevance(words, regions, lengths, gamma1, gamma2)
    logits = gamma3 * rel
    labels = torch.arange(rel.shape[0], device=rel.device)
    loss = F.cross_entropy(logits, labels, reduction="sum") + F.cross_entropy(
        logits.t(), labels, reduction="sum"
    )
    return BatchPosterior(
        relevance=rel,
        text_posterior=torch.softmax(logits, dim=1),
        image_posterior=torch.softmax(logits.t(), dim=1),
        loss=loss,
    )


def r_precision(pairs, score_fn, distractors: int = 9, seed: int = 0) -> float:
    """Fraction of images whose true caption strictly outranks sampled mismatches.

    ``pairs`` is a sequence of (image, caption); ``score_fn(image, caption)``
    returns a scalar. Distractor captions are drawn from the other pairs,
    skipping any that equal the true caption verbatim.
    """
    if distractors < 1:
        raise ConfigurationError(f"distractors must be >= 1, got {distractors}")
    if not pairs:
        raise EmptyBatchError("r_precision needs at least one evaluation pair")
    rng = np.random.default_rng(seed)
    hits = 0
    for i, (image, caption) in enumerate(pairs):
        pool = [c for j, (_, c) in enumerate(pairs) if j != i and c != caption]
        if len(pool) < distractors:
            raise ConfigurationError(
                f"need {distractors} mismatched captions, only {len(pool)} available"
            )
        picks = rng.choice(len(pool), size=distractors, replace=False)
        true_score = score_fn(image, caption)
        best_other = max(score_fn(image, pool[int(k)]) for k in picks)
        hits += int(true_score > best_other)
    return hits / len(pairs)
