"""Loss assembly for the two generator branches.

The coarse branch is anchored by plain MSE against the low-passed target;
the fine branch by the attention-weighted restoration term (or plain MSE
when attention maps are absent). Adversarial and matching terms are
computed elsewhere and passed in as scalars so this module stays pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, EmptyCaptionError, ShapeError

TOP_MAPS = 5


@dataclass
class LossWeights:
    l2: float = 1.0
    cgan: float = 0.1
    tic: float = 0.5
    tar: float = 1.0

    def __post_init__(self):
        for name in ("l2", "cgan", "tic", "tar"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(
                    f"loss weight {name} must be finite and >= 0, got {value}"
                )


@dataclass
class LossReport:
    step: int
    l2: float
    cgan_g: float
    tic_g: float
    tar: float
    cgan_f: float
    tic_f: float
    global_total: float
    fine_total: float
    total: float

    def as_row(self) -> dict:
        return {
            "step": self.step,
            "l2": self.l2,
            "cgan_g": self.cgan_g,
            "tic_g": self.tic_g,
            "tar": self.tar,
            "cgan_f": self.cgan_f,
            "tic_f": self.tic_f,
            "global": self.global_total,
            "fine": self.fine_total,
            "total": self.total,
        }


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mse shapes disagree: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def tar_loss(fine: torch.Tensor, gt: torch.Tensor, m_attn: torch.Tensor,
             lengths) -> torch.Tensor:
    """Attention-weighted restoration loss.

    Selects, per item, the real-word maps with the largest spatial sums
    (ties break toward the lowest word index, at most TOP_MAPS of them),
    renormalizes each to spatial mean 1, and averages the map-weighted
    per-pixel squared error.
    """
    if fine.shape != gt.shape:
        raise ShapeError(
            f"image shapes disagree: {tuple(fine.shape)} vs {tuple(gt.shape)}"
        )
    if m_attn.dim() != 4 or m_attn.shape[0] != fine.shape[0]:
        raise ShapeError(f"bad attention map shape {tuple(m_attn.shape)}")
    if m_attn.shape[-2:] != fine.shape[-2:]:
        m_attn = F.interpolate(
            m_attn, size=fine.shape[-2:], mode="bilinear", align_corners=False
        )
    sq = ((fine - gt) ** 2).mean(dim=1)  # (B, H, W), channel-mean squared error
    per_item = []
    for b in range(fine.shape[0]):
        ell = int(lengths[b])
        if ell < 1:
            raise EmptyCaptionError("attention loss needs at least one real word")
        maps = m_attn[b, :ell]
        sums = maps.sum(dim=(1, 2))
        order = torch.argsort(-sums, stable=True)[: min(TOP_MAPS, ell)]
        selected = maps[order]
        weight = selected / selected.mean(dim=(1, 2), keepdim=True).clamp_min(1e-12)
        per_item.append((weight * sq[b].unsqueeze(0)).mean())
    return torch.stack(per_item).mean()


def global_loss(coarse: torch.Tensor, target: torch.Tensor, weights: LossWeights,
                cgan_term=None, tic_term=None):
    """Coarse-branch loss; returns (total, components dict)."""
    l2 = mse(coarse, target)
    zero = coarse.new_zeros(())
    cgan = cgan_term if cgan_term is not None else zero
    tic = tic_term if tic_term is not None else zero
    total = weights.l2 * l2 + weights.cgan * cgan + weights.tic * tic
    return total, {"l2": l2, "cgan_g": cgan, "tic_g": tic}


def fine_loss(fine: torch.Tensor, gt: torch.Tensor, weights: LossWeights,
              m_attn=None, lengths=None, cgan_term=None, tic_term=None):
    """Fine-branch loss; attention maps absent -> plain MSE anchor."""
    if m_attn is not None:
        tar = tar_loss(fine, gt, m_attn, lengths)
    else:
        tar = mse(fine, gt)
    zero = fine.new_zeros(())
    cgan = cgan_term if cgan_term is not None else zero
    tic = tic_term if tic_term is not None else zero
    total = weights.tar * tar + weights.cgan * cgan + weights.tic * tic
    return total, {"tar": tar, "cgan_f": cgan, "tic_f": tic}


def total_loss(global_term: torch.Tensor, fine_term: torch.Tensor) -> torch.Tensor:
    return global_term + fine_term


def _scalar(value) -> float:
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


def build_report(step: int, global_total, global_parts: dict,
                 fine_total, fine_parts: dict) -> LossReport:
    g = _scalar(global_total)
    f = _scalar(fine_total)
    return LossReport(
        step=step,
        l2=_scalar(global_parts["l2"]),
        cgan_g=_scalar(global_parts["cgan_g"]),
        tic_g=_scalar(global_parts["tic_g"]),
        tar=_scalar(fine_parts["tar"]),
        cgan_f=_scalar(fine_parts["cgan_f"]),
        tic_f=_scalar(fine_parts["tic_f"]),
        global_total=g,
        fine_total=f,
        total=g + f,
    )
