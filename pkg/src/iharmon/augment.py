"""Appearance augmentations used to manufacture composite foregrounds.

Every augmentation edits only pixels at mask>0.5 and leaves the rest of the
image untouched. Identity parameters (gamma=1; b=0,c=1; hue=0,sat=1;
identity LUT; constant-0.5 overlay) are pixel-exact no-ops.
"""

from __future__ import annotations

import numpy as np

from .imaging import resize

__all__ = [
    "AUGMENTATION_NAMES",
    "GAMMA_RANGE",
    "BRIGHTNESS_RANGE",
    "CONTRAST_RANGE",
    "HUE_RANGE",
    "SAT_RANGE",
    "STRENGTH_RANGE",
    "apply_gamma",
    "apply_brightness_contrast",
    "apply_color_jitter",
    "apply_lut3d",
    "apply_local_lighting",
    "blend_overlay",
    "identity_lut",
    "random_lut",
    "rgb_to_hsv",
    "hsv_to_rgb",
    "smooth_noise",
    "sample_augmentation",
    "apply_augmentation",
]

GAMMA_RANGE = (0.4, 2.5)
BRIGHTNESS_RANGE = (-0.3, 0.3)
CONTRAST_RANGE = (0.6, 1.6)
HUE_RANGE = (-0.1, 0.1)
SAT_RANGE = (0.5, 1.5)
STRENGTH_RANGE = (0.2, 1.0)

LOCAL_MODES = ("soft_light", "dodge", "grain_merge", "grain_extract")

AUGMENTATION_NAMES = (
    "brightness_contrast",
    "color_jitter",
    "gamma",
    "lut3d",
    "local_soft_light",
    "local_dodge",
    "local_grain_merge",
    "local_grain_extract",
)

_DODGE_EPS = 1e-6


def _masked_edit(img: np.ndarray, mask: np.ndarray, edited: np.ndarray) -> np.ndarray:
    out = np.array(img, dtype=np.float64, copy=True)
    sel = np.asarray(mask, dtype=np.float64) > 0.5
    out[sel] = edited[sel]
    return out


def apply_gamma(img: np.ndarray, mask: np.ndarray, gamma: float) -> np.ndarray:
    """Masked pixels -> v**gamma."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    img = np.asarray(img, dtype=np.float64)
    if gamma == 1.0:
        return img.copy()
    return _masked_edit(img, mask, np.power(img, gamma))


def apply_brightness_contrast(
    img: np.ndarray, mask: np.ndarray, b: float, c: float
) -> np.ndarray:
    """Masked pixels -> clamp(c*(v-0.5)+0.5+b)."""
    img = np.asarray(img, dtype=np.float64)
    if b == 0.0 and c == 1.0:
        return img.copy()
    edited = np.clip(c * (img - 0.5) + 0.5 + b, 0.0, 1.0)
    return _masked_edit(img, mask, edited)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV, all components in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    # hue sector, guarded against delta == 0
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(
        maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc)
    )
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, all components in [0, 1]."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def apply_color_jitter(
    img: np.ndarray, mask: np.ndarray, hue_shift: float, sat_scale: float
) -> np.ndarray:
    """Masked pixels shifted in hue (mod 1) and scaled in saturation."""
    img = np.asarray(img, dtype=np.float64)
    if hue_shift == 0.0 and sat_scale == 1.0:
        return img.copy()
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + hue_shift) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * sat_scale, 0.0, 1.0)
    edited = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    return _masked_edit(img, mask, edited)


def identity_lut(size: int) -> np.ndarray:
    """s x s x s x 3 lattice mapping RGB to itself."""
    if size < 2:
        raise ValueError("lattice size must be >= 2")
    axis = np.linspace(0.0, 1.0, size)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([r, g, b], axis=-1)


def random_lut(rng: np.random.Generator, size: int = 4, strength: float = 0.25) -> np.ndarray:
    """Identity lattice with smooth random perturbation, clipped to [0, 1]."""
    lut = identity_lut(size)
    lut = lut + rng.uniform(-strength, strength, size=lut.shape)
    return np.clip(lut, 0.0, 1.0)


def apply_lut3d(img: np.ndarray, mask: np.ndarray, lut: np.ndarray) -> np.ndarray:
    """Masked pixels trilinearly interpolated through an s^3 RGB lattice."""
    lut = np.asarray(lut, dtype=np.float64)
    if lut.ndim != 4 or lut.shape[3] != 3 or lut.shape[0] < 2 or (
        lut.shape[0] != lut.shape[1] or lut.shape[1] != lut.shape[2]
    ):
        raise ValueError(f"malformed lattice, shape {lut.shape}")
    img = np.asarray(img, dtype=np.float64)
    s = lut.shape[0]
    if np.array_equal(lut, identity_lut(s)):
        return img.copy()
    pos = np.clip(img, 0.0, 1.0) * (s - 1)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, s - 2)
    f = pos - lo
    r0, g0, b0 = lo[..., 0], lo[..., 1], lo[..., 2]
    fr, fg, fb = f[..., 0:1], f[..., 1:2], f[..., 2:3]
    out = np.zeros_like(img)
    for dr in (0, 1):
        wr = fr if dr else 1.0 - fr
        for dg in (0, 1):
            wg = fg if dg else 1.0 - fg
            for db in (0, 1):
                wb = fb if db else 1.0 - fb
                out = out + wr * wg * wb * lut[r0 + dr, g0 + dg, b0 + db]
    return _masked_edit(img, mask, np.clip(out, 0.0, 1.0))


def blend_overlay(base: np.ndarray, overlay: np.ndarray, mode: str) -> np.ndarray:
    """Blend an overlay into a base layer with a standard editor formula."""
    a = np.asarray(base, dtype=np.float64)
    b = np.asarray(overlay, dtype=np.float64)
    if mode == "soft_light":
        low = 2.0 * a * b + np.square(a) * (1.0 - 2.0 * b)
        high = 2.0 * a * (1.0 - b) + np.sqrt(np.clip(a, 0.0, None)) * (2.0 * b - 1.0)
        out = np.where(b <= 0.5, low, high)
    elif mode == "dodge":
        out = a / (1.0 - b + _DODGE_EPS)
    elif mode == "grain_merge":
        # grouped so a constant-0.5 overlay is an exact no-op
        out = a + (b - 0.5)
    elif mode == "grain_extract":
        out = a - (b - 0.5)
    else:
        raise ValueError(f"unknown blend mode: {mode}")
    return np.clip(out, 0.0, 1.0)


def smooth_noise(
    rng: np.random.Generator, h: int, w: int, cells: int = 6
) -> np.ndarray:
    """Low-frequency noise in [-1, 1]: a coarse grid upsampled bilinearly."""
    cells = max(2, min(cells, h, w))
    coarse = rng.uniform(-1.0, 1.0, size=(cells, cells))
    return resize(coarse, h, w, "bilinear")


def apply_local_lighting(
    img: np.ndarray,
    fg_mask: np.ndarray,
    mode: str,
    strength: float,
    seed: int,
) -> np.ndarray:
    """Blend a smooth random overlay into a random sub-region of the mask.

    The overlay is centered at 0.5 with amplitude 0.5*strength; the affected
    sub-region is a smooth random blob intersected with fg_mask.
    """
    if mode not in LOCAL_MODES:
        raise ValueError(f"unknown local lighting mode: {mode}")
    img = np.asarray(img, dtype=np.float64)
    fg = np.asarray(fg_mask, dtype=np.float64)
    if not (fg > 0.5).any():
        raise ValueError("empty region")
    h, w = fg.shape
    rng = np.random.default_rng(seed)
    overlay = 0.5 + 0.5 * strength * smooth_noise(rng, h, w)
    sub = smooth_noise(rng, h, w) > 0.0
    region = (fg > 0.5) & sub
    if not region.any():
        # degenerate blob draw; fall back to the whole mask
        region = fg > 0.5
    blended = blend_overlay(img, overlay[:, :, None], mode)
    out = img.copy()
    out[region] = blended[region]
    return out


def _uniform_excluding(
    rng: np.random.Generator, lo: float, hi: float, cut_lo: float, cut_hi: float
) -> float:
    """Uniform draw from [lo, cut_lo] U [cut_hi, hi], weighted by length.

    The sampler stays inside the op's declared range but skips the window
    around the identity parameters, so every sampled edit is visible.
    """
    left = cut_lo - lo
    u = rng.uniform(0.0, left + (hi - cut_hi))
    return lo + u if u < left else cut_hi + (u - left)


def sample_augmentation(rng: np.random.Generator) -> dict:
    """Draw one augmentation descriptor uniformly from the bank."""
    name = str(rng.choice(AUGMENTATION_NAMES))
    params: dict = {}
    if name == "gamma":
        params["gamma"] = _uniform_excluding(rng, *GAMMA_RANGE, 0.75, 1.35)
    elif name == "brightness_contrast":
        params["b"] = _uniform_excluding(rng, *BRIGHTNESS_RANGE, -0.12, 0.12)
        params["c"] = _uniform_excluding(rng, *CONTRAST_RANGE, 0.85, 1.2)
    elif name == "color_jitter":
        params["hue_shift"] = _uniform_excluding(rng, *HUE_RANGE, -0.04, 0.04)
        params["sat_scale"] = _uniform_excluding(rng, *SAT_RANGE, 0.8, 1.25)
    elif name == "lut3d":
        params["lut_seed"] = int(rng.integers(0, 2**31 - 1))
        params["lut_size"] = 4
        params["lut_strength"] = float(rng.uniform(0.15, 0.35))
    else:  # local_* modes
        params["strength"] = float(rng.uniform(0.6, STRENGTH_RANGE[1]))
        params["seed"] = int(rng.integers(0, 2**31 - 1))
    return {"op": name, "params": params}


def apply_augmentation(
    img: np.ndarray, mask: np.ndarray, descriptor: dict
) -> np.ndarray:
    """Apply a descriptor produced by `sample_augmentation`."""
    name = descriptor["op"]
    p = descriptor["params"]
    if name == "gamma":
        return apply_gamma(img, mask, p["gamma"])
    if name == "brightness_contrast":
        return apply_brightness_contrast(img, mask, p["b"], p["c"])
    if name == "color_jitter":
        return apply_color_jitter(img, mask, p["hue_shift"], p["sat_scale"])
    if name == "lut3d":
        lut = random_lut(
            np.random.default_rng(p["lut_seed"]), p["lut_size"], p["lut_strength"]
        )
        return apply_lut3d(img, mask, lut)
    if name.startswith("local_"):
        return apply_local_lighting(
            img, mask, name.removeprefix("local_"), p["strength"], p["seed"]
        )
    raise ValueError(f"unknown augmentation: {name}")
