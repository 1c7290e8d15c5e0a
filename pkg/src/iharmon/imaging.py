"""Core image math shared by every other module.

Images are H x W x C float arrays (C in {1, 3}) with values in [0, 1];
masks are H x W float arrays in [0, 1]. All functions are pure: they never
mutate their inputs and the same inputs produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EmptyRegionError",
    "ColorTransform",
    "to_luminance",
    "masked_percentile",
    "masked_mean",
    "alpha_composite",
    "resize",
    "resize_mask_binary",
    "polynomial_terms",
    "fit_color_transform",
    "apply_color_transform",
]

# Rec. 601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class EmptyRegionError(ValueError):
    """Raised when an operation needs at least one selected pixel."""


def _validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected HxWx{{1,3}} image, got shape {img.shape}")
    return img


def to_luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance of an RGB image, H x W x 1 in [0, 1].

    Single-channel input is returned as a copy.
    """
    img = _validate_image(img)
    if img.shape[2] == 1:
        return img.copy()
    lum = img @ LUMA_WEIGHTS
    return lum[:, :, None]


def _masked_values(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3:
        if values.shape[2] != 1:
            raise ValueError("expected single-channel values")
        values = values[:, :, 0]
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != values.shape:
        raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
    selected = values[mask > 0.5]
    if selected.size == 0:
        raise EmptyRegionError("empty region")
    return selected


def masked_percentile(values: np.ndarray, mask: np.ndarray, p: float) -> float:
    """p-th percentile of `values` at mask>0.5, linear interpolation."""
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile out of range: {p}")
    return float(np.percentile(_masked_values(values, mask), p))


def masked_mean(values: np.ndarray, mask: np.ndarray) -> float:
    """Arithmetic mean of `values` at mask>0.5."""
    return float(np.mean(_masked_values(values, mask)))


def alpha_composite(fg: np.ndarray, bg: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-channel blend mask*fg + (1-mask)*bg.

    Binary masks select fg/bg exactly (bit-exact passthrough at mask==0).
    """
    fg = _validate_image(fg)
    bg = _validate_image(bg)
    mask = np.asarray(mask, dtype=np.float64)
    if fg.shape != bg.shape:
        raise ValueError(f"fg shape {fg.shape} != bg shape {bg.shape}")
    if mask.shape != fg.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} != image shape {fg.shape[:2]}")
    m = mask[:, :, None]
    return m * fg + (1.0 - m) * bg


def _axis_indices(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel-center convention, edges clamped
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    lo = np.floor(src).astype(np.int64)
    w = src - lo
    lo = np.clip(lo, 0, n_in - 1)
    hi = np.clip(lo + 1, 0, n_in - 1)
    return lo, hi, w


def resize(img: np.ndarray, out_h: int, out_w: int, method: str = "bilinear") -> np.ndarray:
    """Separable bilinear (default) or nearest resampling."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be >= 1")
    squeeze = np.asarray(img).ndim == 2
    img = _validate_image(img)
    h, w = img.shape[:2]
    if method == "nearest":
        ys = np.minimum(((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64), h - 1)
        xs = np.minimum(((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64), w - 1)
        out = img[ys][:, xs]
    elif method == "bilinear":
        lo, hi, wy = _axis_indices(h, out_h)
        tmp = img[lo] * (1.0 - wy)[:, None, None] + img[hi] * wy[:, None, None]
        lo, hi, wx = _axis_indices(w, out_w)
        out = tmp[:, lo] * (1.0 - wx)[None, :, None] + tmp[:, hi] * wx[None, :, None]
    else:
        raise ValueError(f"unknown resize method: {method}")
    return out[:, :, 0] if squeeze else out


def resize_mask_binary(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear mask resize re-thresholded at 0.5 (for binary masks)."""
    soft = resize(np.asarray(mask, dtype=np.float64), out_h, out_w, "bilinear")
    return (soft > 0.5).astype(np.float64)


@dataclass
class ColorTransform:
    """Per-channel polynomial map over RGB, fit by least squares.

    `coefficients` has shape (3, n_terms) where n_terms is the number of
    monomials r^a g^b b^c with a+b+c <= degree (bias included). Term order
    is `polynomial_terms(degree)`.
    """

    degree: int
    coefficients: np.ndarray
    degenerate: bool = field(default=False)

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        expected = len(polynomial_terms(self.degree))
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        if coeffs.shape != (3, expected):
            raise ValueError(
                f"coefficients shape {coeffs.shape} != (3, {expected}) for degree {self.degree}"
            )
        self.coefficients = coeffs

    @classmethod
    def identity(cls, degree: int = 1) -> "ColorTransform":
        terms = polynomial_terms(degree)
        coeffs = np.zeros((3, len(terms)))
        for ch, unit in enumerate([(1, 0, 0), (0, 1, 0), (0, 0, 1)]):
            coeffs[ch, terms.index(unit)] = 1.0
        return cls(degree=degree, coefficients=coeffs)


def polynomial_terms(degree: int) -> list[tuple[int, int, int]]:
    """Monomial exponents (a, b, c) with a+b+c <= degree, in a fixed order."""
    terms = []
    for total in range(degree + 1):
        for a in range(total, -1, -1):
            for b in range(total - a, -1, -1):
                terms.append((a, b, total - a - b))
    return terms


def _design_matrix(rgb: np.ndarray, degree: int) -> np.ndarray:
    # rgb: N x 3 -> N x n_terms
    terms = polynomial_terms(degree)
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    cols = [np.power(r, a) * np.power(g, bb) * np.power(b, c) for a, bb, c in terms]
    return np.stack(cols, axis=1)


def fit_color_transform(
    src: np.ndarray, dst: np.ndarray, region: np.ndarray, degree: int = 3
) -> ColorTransform:
    """Least-squares fit of dst pixels against a polynomial basis of src RGB.

    Only pixels at region>0.5 participate. Rank-deficient systems are solved
    minimum-norm and flagged `degenerate=True`.
    """
    src = _validate_image(src)
    dst = _validate_image(dst)
    if src.shape != dst.shape or src.shape[2] != 3:
        raise ValueError("src/dst must be aligned 3-channel images")
    region = np.asarray(region, dtype=np.float64)
    if region.shape != src.shape[:2]:
        raise ValueError("region not aligned with images")
    sel = region > 0.5
    n_terms = len(polynomial_terms(degree))
    if int(sel.sum()) < n_terms:
        raise EmptyRegionError(
            f"region selects {int(sel.sum())} pixels, need >= {n_terms} for degree {degree}"
        )
    x = _design_matrix(src[sel], degree)
    y = dst[sel]
    coeffs, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    return ColorTransform(
        degree=degree, coefficients=coeffs.T, degenerate=bool(rank < n_terms)
    )


def apply_color_transform(
    img: np.ndarray, transform: ColorTransform, region: np.ndarray
) -> np.ndarray:
    """Map region pixels through `transform`, clamp to [0, 1]; rest untouched."""
    img = _validate_image(img)
    if img.shape[2] != 3:
        raise ValueError("expected 3-channel image")
    region = np.asarray(region, dtype=np.float64)
    if region.shape != img.shape[:2]:
        raise ValueError("region not aligned with image")
    out = img.copy()
    sel = region > 0.5
    if sel.any():
        x = _design_matrix(img[sel], transform.degree)
        mapped = x @ transform.coefficients.T
        out[sel] = np.clip(mapped, 0.0, 1.0)
    return out
