"""Text-conditioned discriminator and the adversarial loss pair.

The discriminator downsamples until the map is 4x4 (4 strided blocks at the
native 64px), tiles the sentence vector onto the map before the last block,
and ends with a valid 4x4 conv to one logit. Losses are the non-saturating
sigmoid form; the mismatched-text term teaches text sensitivity.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, EmptyBatchError, ShapeError

MISMATCH_WEIGHT = 0.5


class Discriminator(nn.Module):
    def __init__(self, image_size: int = 64, channels: int = 64, sentence_dim: int = 64):
        super().__init__()
        if image_size < 8 or image_size & (image_size - 1):
            raise ConfigurationError(
                f"image_size must be a power of two >= 8, got {image_size}"
            )
        self.image_size = image_size
        self.sentence_dim = sentence_dim
        n_down = image_size.bit_length() - 3  # stride-2 blocks until 4x4
        blocks = []
        in_ch = 3
        out_ch = channels
        for i in range(n_down):
            if i == n_down - 1:
                in_ch += sentence_dim  # sentence tiled in before the last block
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1),
                    nn.LeakyReLU(0.2, inplace=True),
                )
            )
            in_ch = out_ch
            out_ch = min(2 * out_ch, 8 * channels)
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Conv2d(in_ch, 1, 4, stride=1, padding=0)

    def forward(self, images: torch.Tensor, sentences: torch.Tensor) -> torch.Tensor:
        if (
            images.dim() != 4
            or images.shape[1] != 3
            or images.shape[2] != self.image_size
            or images.shape[3] != self.image_size
        ):
            raise ShapeError(
                f"expected (B, 3, {self.image_size}, {self.image_size}) images, "
                f"got {tuple(images.shape)}"
            )
        if sentences.dim() != 2 or sentences.shape[1] != self.sentence_dim:
            raise ShapeError(
                f"expected (B, {self.sentence_dim}) sentence vectors, "
                f"got {tuple(sentences.shape)}"
            )
        if sentences.shape[0] != images.shape[0]:
            raise ShapeError("image and sentence batch sizes disagree")
        h = images
        for i, block in enumerate(self.blocks):
            if i == len(self.blocks) - 1:
                side = h.shape[-1]
                tiled = sentences.view(*sentences.shape, 1, 1).expand(
                    -1, -1, side, side
                )
                h = torch.cat([h, tiled], dim=1)
            h = block(h)
        return self.head(h).view(-1)


def g_adv_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator objective: -mean log sigmoid(logit)."""
    if fake_logits.numel() == 0:
        raise EmptyBatchError("generator adversarial loss needs at least one logit")
    return F.binary_cross_entropy_with_logits(
        fake_logits, torch.ones_like(fake_logits)
    )


def d_loss(real_matched: torch.Tensor, fake_matched: torch.Tensor,
           real_mismatched: torch.Tensor,
           mismatch_weight: float = MISMATCH_WEIGHT) -> torch.Tensor:
    """Matching-aware discriminator objective.

    real+matched scores toward 1; fake+matched and real+mismatched toward 0;
    the mismatched term is down-weighted and the sum normalized so the
    all-logits-zero loss is exactly ln 2.
    """
    if min(real_matched.numel(), fake_matched.numel(), real_mismatched.numel()) == 0:
        raise EmptyBatchError("discriminator loss needs non-empty logit batches")
    bce = F.binary_cross_entropy_with_logits
    total = (
        bce(real_matched, torch.ones_like(real_matched))
        + bce(fake_matched, torch.zeros_like(fake_matched))
        + mismatch_weight * bce(real_mismatched, torch.zeros_like(real_mismatched))
    )
    return total / (2.0 + mismatch_weight)
