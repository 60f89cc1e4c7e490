"""Word attention over image features.

Each word is projected into the image channel space, scored against every
spatial location by inner product, and softmaxed over words per location.
The attended word mixture F_attn rides alongside the image feature into the
next generator stage; the per-word maps M_attn drive the attention loss and
the UI overlays.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import EmptyCaptionError, ShapeError


@dataclass
class TamOutput:
    m_attn: torch.Tensor  # (B, T, H, W); PAD word slots exactly zero
    f_attn: torch.Tensor  # (B, C, H, W)


class WordAttention(nn.Module):
    """Text attention module for one generator stage."""

    def __init__(self, word_dim: int, channels: int):
        super().__init__()
        self.word_dim = word_dim
        self.channels = channels
        self.proj = nn.Linear(word_dim, channels, bias=False)

    def forward(self, words: torch.Tensor, lengths, feature_map: torch.Tensor) -> TamOutput:
        """words (B, D, T), lengths (B,), feature_map (B, C, H, W)."""
        if words.dim() != 3 or words.shape[1] != self.word_dim:
            raise ShapeError(
                f"expected (B, {self.word_dim}, T) word features, got {tuple(words.shape)}"
            )
        if feature_map.dim() != 4 or feature_map.shape[1] != self.channels:
            raise ShapeError(
                f"expected (B, {self.channels}, H, W) feature map, "
                f"got {tuple(feature_map.shape)}"
            )
        if feature_map.shape[0] != words.shape[0]:
            raise ShapeError("word and image batch sizes disagree")
        batch, _, t_max = words.shape
        _, _, height, width = feature_map.shape

        lengths = torch.as_tensor(lengths, device=words.device)
        if (lengths < 1).any():
            raise EmptyCaptionError("attention needs at least one real word per item")

        # Slice to the longest real caption so trailing PAD columns never enter
        # the matmuls: extending T with PAD stays bitwise identical.
        t_eff = int(lengths.max())
        projected = self.proj(words[:, :, :t_eff].transpose(1, 2))  # (B, t_eff, C)
        flat = feature_map.flatten(2)                               # (B, C, HW)
        scores = torch.bmm(projected, flat)                         # (B, t_eff, HW)

        slot = torch.arange(t_eff, device=words.device)
        pad = slot.unsqueeze(0) >= lengths.unsqueeze(1)             # (B, t_eff)
        scores = scores.masked_fill(pad.unsqueeze(2), float("-inf"))

        m_attn = torch.softmax(scores, dim=1)                       # (B, t_eff, HW)
        f_attn = torch.bmm(projected.transpose(1, 2), m_attn)       # (B, C, HW)
        if t_eff < t_max:
            m_attn = torch.cat(
                [m_attn, m_attn.new_zeros(batch, t_max - t_eff, m_attn.shape[2])],
                dim=1,
            )
        return TamOutput(
            m_attn=m_attn.view(batch, t_max, height, width),
            f_attn=f_attn.view(batch, self.channels, height, width),
        )
