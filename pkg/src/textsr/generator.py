"""Dual-branch coarse-to-fine super-resolution generator.

The global branch climbs a pyramid of x2 stages, fusing word attention into
the image features at every stage, and emits the coarse image. The refine
branch climbs the same pyramid over the raw LR input, consuming the global
branch's stage features at matching scales, and emits the final image.
Outputs are unclipped; [0,1] clamping happens only at serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import TamOutput, WordAttention
from .errors import ConfigurationError, ShapeError

SCALES = (4, 8, 16)


@dataclass
class GeneratorConfig:
    scale: int = 8
    channels: int = 64
    res_blocks: int = 2
    word_dim: int = 64
    t_max: int = 16
    use_tam: bool = True
    use_refine: bool = True

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ConfigurationError(f"scale must be one of {SCALES}, got {self.scale}")
        if self.channels < 1:
            raise ConfigurationError(f"channels must be positive, got {self.channels}")
        if self.res_blocks < 1:
            raise ConfigurationError(f"res_blocks must be positive, got {self.res_blocks}")

    @property
    def n_stages(self) -> int:
        return self.scale.bit_length() - 1


@dataclass
class GeneratorOutput:
    coarse: torch.Tensor            # (B, 3, S*h, S*w)
    fine: torch.Tensor              # (B, 3, S*h, S*w)
    stage_features: list            # global-branch F_im per stage
    refine_features: list = field(default_factory=list)
    tam_outputs: list = field(default_factory=list)  # one TamOutput per stage


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class UpUnit(nn.Module):
    """conv + residual blocks + 6x6/stride-2 deconv; doubles spatial dims."""

    def __init__(self, in_channels: int, out_channels: int, res_blocks: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.res = nn.Sequential(*(ResidualBlock(out_channels) for _ in range(res_blocks)))
        self.up = nn.ConvTranspose2d(out_channels, out_channels, 6, stride=2, padding=2)

    def forward(self, x):
        return F.relu(self.up(self.res(F.relu(self.conv(x)))))


class GlobalBranch(nn.Module):
    """Text-aware pyramid producing the coarse image and per-stage features."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c, n = config.channels, config.n_stages
        fused = 2 * c if config.use_tam else c
        self.stem = UpUnit(3, c, config.res_blocks)
        self.units = nn.ModuleList(
            UpUnit(fused, c, config.res_blocks) for _ in range(n - 1)
        )
        if config.use_tam:
            self.tams = nn.ModuleList(
                WordAttention(config.word_dim, c) for _ in range(n)
            )
        self.out_conv = nn.Conv2d(fused, 3, 3, padding=1)

    def forward(self, lr, words=None, lengths=None):
        if lr.dim() != 4 or lr.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, h, w) LR input, got {tuple(lr.shape)}")
        if self.config.use_tam and (words is None or lengths is None):
            raise ConfigurationError("word features required when attention is enabled")
        feature = self.stem(lr)
        features, tams = [feature], []
        for i, unit in enumerate(self.units):
            if self.config.use_tam:
                tam_out = self.tams[i](words, lengths, feature)
                tams.append(tam_out)
                feature = unit(torch.cat([feature, tam_out.f_attn], dim=1))
            else:
                feature = unit(feature)
            features.append(feature)
        if self.config.use_tam:
            tam_out = self.tams[-1](words, lengths, feature)
            tams.append(tam_out)
            coarse = self.out_conv(torch.cat([feature, tam_out.f_attn], dim=1))
        else:
            coarse = self.out_conv(feature)
        return coarse, features, tams


class RefineBranch(nn.Module):
    """Re-runs the pyramid over the LR image, cascading global stage features."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c, n = config.channels, config.n_stages
        self.stem = UpUnit(3, c, config.res_blocks)
        self.units = nn.ModuleList(
            UpUnit(2 * c, c, config.res_blocks) for _ in range(n - 1)
        )
        self.fuse = nn.Conv2d(2 * c, c, 3, padding=1)
        self.res = nn.Sequential(
            *(ResidualBlock(c) for _ in range(config.res_blocks))
        )
        self.out_conv = nn.Conv2d(c, 3, 3, padding=1)

    def forward(self, lr, stage_features):
        if len(stage_features) != self.config.n_stages:
            raise ShapeError(
                f"expected {self.config.n_stages} stage features, "
                f"got {len(stage_features)}"
            )
        feature = self.stem(lr)
        refine_features = [feature]
        for unit, skip in zip(self.units, stage_features):
            feature = unit(torch.cat([feature, skip], dim=1))
            refine_features.append(feature)
        fused = F.relu(self.fuse(torch.cat([feature, stage_features[-1]], dim=1)))
        return self.out_conv(self.res(fused)), refine_features


class SRGenerator(nn.Module):
    """Composition of the global and refine branches."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.global_branch = GlobalBranch(config)
        if config.use_refine:
            self.refine_branch = RefineBranch(config)

    def forward(self, lr, words=None, lengths=None) -> GeneratorOutput:
        coarse, features, tams = self.global_branch(lr, words, lengths)
        if self.config.use_refine:
            fine, refine_features = self.refine_branch(lr, features)
        else:
            fine, refine_features = coarse, []
        return GeneratorOutput(
            coarse=coarse,
            fine=fine,
            stage_features=features,
            refine_features=refine_features,
            tam_outputs=tams,
        )


def to_image(tensor: torch.Tensor):
    """Detach a (3, H, W) output to a clipped float32 array in [0, 1]."""
    return tensor.detach().clamp(0.0, 1.0).cpu().numpy()
