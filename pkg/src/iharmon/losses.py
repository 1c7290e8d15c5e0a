"""Training objective: luminance matching, style consistency, L1, triplets.

All terms are differentiable torch expressions. total_loss additionally
returns a LossReport whose fields are plain floats recomposed in python
arithmetic, so the report's internal sums are exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import torch

from .imaging import EmptyRegionError

__all__ = [
    "LossWeights",
    "LossReport",
    "luminance",
    "luminance_matching_loss",
    "consistency_loss",
    "harmonization_loss",
    "triplet_losses",
    "total_loss",
]

_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0  # luminance matching
    lam: float = 1.0  # style consistency
    beta: float = 0.01  # triplet pair
    margin: float = 0.1
    p_hi: float = 90.0
    p_lo: float = 10.0

    def __post_init__(self) -> None:
        if min(self.alpha, self.lam, self.beta) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if not 0 <= self.p_lo < self.p_hi <= 100:
            raise ValueError("need 0 <= p_lo < p_hi <= 100")


@dataclass
class LossReport:
    harmonization: float
    highlight: float
    mid_tone: float
    shadow: float
    lm: float
    consistency: float
    triplet1: float
    triplet2: float
    total: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def luminance(image: torch.Tensor) -> torch.Tensor:
    """Rec.601 luminance of a (B,3,H,W) tensor -> (B,1,H,W)."""
    r, g, b = image[:, 0:1], image[:, 1:2], image[:, 2:3]
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


def _as_batched(image: torch.Tensor) -> torch.Tensor:
    return image.unsqueeze(0) if image.dim() == 3 else image


def _mask_batched(mask: torch.Tensor, batch: int) -> torch.Tensor:
    if mask.dim() == 2:
        mask = mask.unsqueeze(0)
    if mask.dim() == 3:
        mask = mask.unsqueeze(1)
    if mask.shape[0] == 1 and batch > 1:
        mask = mask.expand(batch, -1, -1, -1)
    return mask


def luminance_matching_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    fg_mask: torch.Tensor,
    w: LossWeights = LossWeights(),
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Highlight/mid-tone/shadow gaps on foreground luminance.

    Highlight and shadow are the p_hi/p_lo percentiles (linear
    interpolation, so gradient reaches the bracketing order statistics);
    mid-tone is the mean. Returns (highlight, mid_tone, shadow, sum),
    averaged over the batch.
    """
    pred = _as_batched(pred)
    gt = _as_batched(gt)
    mask = _mask_batched(fg_mask, pred.shape[0])
    lum_p = luminance(pred)
    lum_g = luminance(gt)
    hi_terms, mid_terms, lo_terms = [], [], []
    for b in range(pred.shape[0]):
        sel = mask[b, 0] > 0.5
        if not bool(sel.any()):
            raise EmptyRegionError("empty mask")
        vp = lum_p[b, 0][sel]
        vg = lum_g[b, 0][sel]
        hi_terms.append((torch.quantile(vp, w.p_hi / 100.0) - torch.quantile(vg, w.p_hi / 100.0)).abs())
        mid_terms.append((vp.mean() - vg.mean()).abs())
        lo_terms.append((torch.quantile(vp, w.p_lo / 100.0) - torch.quantile(vg, w.p_lo / 100.0)).abs())
    highlight = torch.stack(hi_terms).mean()
    mid_tone = torch.stack(mid_terms).mean()
    shadow = torch.stack(lo_terms).mean()
    return highlight, mid_tone, shadow, highlight + mid_tone + shadow


def _as_codes(code: torch.Tensor) -> torch.Tensor:
    return code.unsqueeze(0) if code.dim() == 1 else code


def consistency_loss(code_h: torch.Tensor, code_b: torch.Tensor) -> torch.Tensor:
    """Mean absolute gap between two style codes (L1 / D)."""
    code_h = _as_codes(code_h)
    code_b = _as_codes(code_b)
    if code_h.shape != code_b.shape:
        raise ValueError(f"code shape mismatch: {tuple(code_h.shape)} vs {tuple(code_b.shape)}")
    return (code_h - code_b).abs().mean()


def harmonization_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    return (pred - gt).abs().mean()


def triplet_losses(
    code_h: torch.Tensor,
    code_b: torch.Tensor,
    code_c: torch.Tensor,
    code_r: torch.Tensor,
    margin: float,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Two hinge terms pulling the harmonized code toward the reference
    (and the real-foreground code) and away from the composite's code."""
    codes = [_as_codes(c) for c in (code_h, code_b, code_c, code_r)]
    if len({tuple(c.shape) for c in codes}) != 1:
        raise ValueError("code shape mismatch in triplet losses")
    code_h, code_b, code_c, code_r = codes
    d_hb = torch.linalg.vector_norm(code_h - code_b, dim=-1)
    d_hc = torch.linalg.vector_norm(code_h - code_c, dim=-1)
    d_hr = torch.linalg.vector_norm(code_h - code_r, dim=-1)
    t1 = torch.clamp(d_hb - d_hc + margin, min=0.0).mean()
    t2 = torch.clamp(d_hr - d_hc + margin, min=0.0).mean()
    return t1, t2


def total_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    fg_mask: torch.Tensor,
    code_h: torch.Tensor,
    code_b: torch.Tensor,
    code_c: torch.Tensor,
    code_r: torch.Tensor,
    w: LossWeights = LossWeights(),
) -> tuple[torch.Tensor, LossReport]:
    """Weighted objective. Returns the differentiable scalar plus a float
    report whose lm/total fields are recomposed from the logged components."""
    harm = harmonization_loss(pred, gt)
    highlight, mid_tone, shadow, lm = luminance_matching_loss(pred, gt, fg_mask, w)
    consis = consistency_loss(code_h, code_b)
    t1, t2 = triplet_losses(code_h, code_b, code_c, code_r, w.margin)
    total = harm + w.alpha * lm + w.lam * consis + w.beta * (t1 + t2)

    harm_f = float(harm.detach())
    hi_f, mid_f, lo_f = (float(highlight.detach()), float(mid_tone.detach()),
                         float(shadow.detach()))
    lm_f = hi_f + mid_f + lo_f
    consis_f = float(consis.detach())
    t1_f, t2_f = float(t1.detach()), float(t2.detach())
    report = LossReport(
        harmonization=harm_f,
        highlight=hi_f,
        mid_tone=mid_f,
        shadow=lo_f,
        lm=lm_f,
        consistency=consis_f,
        triplet1=t1_f,
        triplet2=t2_f,
        total=harm_f + w.alpha * lm_f + w.lam * consis_f + w.beta * (t1_f + t2_f),
    )
    return total, report
