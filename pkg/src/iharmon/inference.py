"""End-user harmonization pipeline.

The network runs at its training resolution; the full-resolution result is
recovered by fitting a polynomial color transform between the low-res
composite foreground and the low-res harmonized foreground, then applying
it to the original foreground pixels. Background pixels are copied from the
input untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .imaging import (
    ColorTransform,
    EmptyRegionError,
    apply_color_transform,
    fit_color_transform,
    polynomial_terms,
    resize,
    resize_mask_binary,
)
from .model import ModelBundle

__all__ = [
    "HarmonizeRequest",
    "HarmonizeResult",
    "BlendRatios",
    "default_reference",
    "harmonize",
    "harmonize_with_region",
    "color_transfer",
    "highres_recomposite",
]

MIN_REFERENCE_PIXELS = 16  # at model resolution, after downsampling
GUIDE_FG_OVERLAP_LIMIT = 0.05


@dataclass
class HarmonizeRequest:
    composite: np.ndarray  # (H,W,3) float in [0,1]
    fg_mask: np.ndarray  # (H,W) binary
    guide_mask: np.ndarray | None = None
    return_lowres: bool = False
    poly_degree: int = 3

    def validate(self) -> None:
        h, w = self.composite.shape[:2]
        if self.composite.ndim != 3 or self.composite.shape[2] != 3:
            raise ValueError("composite must be (H,W,3)")
        if self.fg_mask.shape != (h, w):
            raise ValueError("fg_mask not aligned to composite")
        fg_count = float((self.fg_mask > 0.5).sum())
        if fg_count == 0:
            raise EmptyRegionError("empty foreground mask")
        if self.guide_mask is not None:
            if self.guide_mask.shape != (h, w):
                raise ValueError("guide_mask not aligned to composite")
            guide = self.guide_mask > 0.5
            if not guide.any():
                raise EmptyRegionError("empty guide mask")
            overlap = float((guide & (self.fg_mask > 0.5)).sum())
            if overlap >= GUIDE_FG_OVERLAP_LIMIT * fg_count:
                raise ValueError("guide mask overlaps foreground by 5% or more")


@dataclass
class BlendRatios:
    r1: float
    r2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.r1 <= 1.0 and 0.0 <= self.r2 <= 1.0):
            raise ValueError("blend ratios must lie in [0, 1]")


@dataclass
class HarmonizeResult:
    image: np.ndarray
    used_default_reference: bool
    lowres: np.ndarray | None = None
    transform: ColorTransform = field(default_factory=lambda: ColorTransform.identity())


def default_reference(composite: np.ndarray, fg_mask: np.ndarray) -> np.ndarray:
    """Automatic reference region: the entire background."""
    if (fg_mask > 0.5).sum() == 0:
        raise EmptyRegionError("empty foreground mask")
    return (fg_mask <= 0.5).astype(np.float32)


def _to_tensor(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float().unsqueeze(0)


def _mask_tensor(mask: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(mask).float().unsqueeze(0).unsqueeze(0)


def _lowres_inputs(req: HarmonizeRequest, resolution: int):
    low_comp = resize(req.composite, resolution, resolution)
    low_fg = resize_mask_binary(req.fg_mask, resolution, resolution)
    ref = req.guide_mask if req.guide_mask is not None else default_reference(req.composite, req.fg_mask)
    low_ref = resize_mask_binary(ref, resolution, resolution)
    if low_ref.sum() < MIN_REFERENCE_PIXELS:
        raise ValueError("reference too small")
    if low_fg.sum() == 0:
        raise ValueError("foreground too small at model resolution")
    return low_comp, low_fg, low_ref


def _forward(bundle: ModelBundle, low_comp: np.ndarray, low_fg: np.ndarray,
             code: torch.Tensor) -> np.ndarray:
    comp_t = _to_tensor(low_comp)
    fg_t = _mask_tensor(low_fg)
    with torch.no_grad():
        out = bundle.harmonizer(comp_t * fg_t, fg_t, code)
    return out[0].numpy().transpose(1, 2, 0).astype(np.float32)


def highres_recomposite(
    composite: np.ndarray,
    fg_mask: np.ndarray,
    low_comp: np.ndarray,
    low_harmonized: np.ndarray,
    low_fg: np.ndarray,
    degree: int = 3,
) -> tuple[np.ndarray, ColorTransform]:
    """Lift a low-res harmonization to full resolution.

    Fits src->dst over low-res foreground pixels; falls back to the identity
    transform when too few pixels or a rank-deficient system make the fit
    unreliable. Background pixels are hard-copied from the composite.
    """
    fg_sel = low_fg > 0.5
    n_terms = len(polynomial_terms(degree))
    if int(fg_sel.sum()) >= n_terms:
        transform = fit_color_transform(low_comp, low_harmonized, low_fg, degree=degree)
        if transform.degenerate:
            transform = ColorTransform.identity()
    else:
        transform = ColorTransform.identity()
    result = composite.copy()
    region = fg_mask > 0.5
    result[region] = apply_color_transform(composite, transform, fg_mask.astype(np.float32))[region]
    return result, transform


def harmonize(req: HarmonizeRequest, bundle: ModelBundle) -> HarmonizeResult:
    req.validate()
    bundle.eval()
    resolution = bundle.config.resolution
    low_comp, low_fg, low_ref = _lowres_inputs(req, resolution)
    with torch.no_grad():
        code = bundle.style_encoder(_to_tensor(low_comp), _mask_tensor(low_ref))
    low_harm = _forward(bundle, low_comp, low_fg, code)
    image, transform = highres_recomposite(
        req.composite, req.fg_mask, low_comp, low_harm, low_fg, req.poly_degree
    )
    return HarmonizeResult(
        image=image,
        used_default_reference=req.guide_mask is None,
        lowres=low_harm if req.return_lowres else None,
        transform=transform,
    )


def harmonize_with_region(
    req: HarmonizeRequest,
    guide_a: np.ndarray,
    guide_b: np.ndarray,
    bundle: ModelBundle,
) -> tuple[HarmonizeResult, HarmonizeResult]:
    """Run the same request under two reference regions (robustness probe)."""
    req_a = HarmonizeRequest(req.composite, req.fg_mask, guide_a,
                             req.return_lowres, req.poly_degree)
    req_b = HarmonizeRequest(req.composite, req.fg_mask, guide_b,
                             req.return_lowres, req.poly_degree)
    return harmonize(req_a, bundle), harmonize(req_b, bundle)


def color_transfer(
    req: HarmonizeRequest,
    ratios: BlendRatios,
    bundle: ModelBundle,
    color_bundle: ModelBundle,
) -> HarmonizeResult:
    """Condition the harmonizer on a blend of two style codes.

    The blend is r1*phi + (1-r2)*psi where phi comes from the harmonization
    encoder and psi from the color encoder; (1,1) degenerates to phi alone.
    """
    req.validate()
    bundle.eval()
    color_bundle.eval()
    if bundle.config.style_dim != color_bundle.config.style_dim:
        raise ValueError("style code dimension mismatch between the two encoders")
    resolution = bundle.config.resolution
    low_comp, low_fg, low_ref = _lowres_inputs(req, resolution)
    comp_t = _to_tensor(low_comp)
    ref_t = _mask_tensor(low_ref)
    with torch.no_grad():
        phi = bundle.style_encoder(comp_t, ref_t)
        psi = color_bundle.style_encoder(comp_t, ref_t)
        code = ratios.r1 * phi + (1.0 - ratios.r2) * psi
    low_harm = _forward(bundle, low_comp, low_fg, code)
    image, transform = highres_recomposite(
        req.composite, req.fg_mask, low_comp, low_harm, low_fg, req.poly_degree
    )
    return HarmonizeResult(
        image=image,
        used_default_reference=req.guide_mask is None,
        lowres=low_harm if req.return_lowres else None,
        transform=transform,
    )
