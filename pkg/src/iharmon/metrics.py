"""Referenced quality metrics (PSNR, SSIM, MSE) and the dataset sweep.

All three metrics work on the 8-bit value scale: float images in [0,1] are
multiplied by 255 before any arithmetic, matching how harmonization results
are conventionally reported.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import resize, resize_mask_binary, to_luminance
from .inference import HarmonizeRequest, harmonize
from .model import ModelBundle
from .synthesis import list_record_dirs, read_sample

__all__ = ["MetricsRow", "mse", "psnr", "ssim", "evaluate", "write_report"]

log = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


@dataclass
class MetricsRow:
    method: str
    psnr: float
    ssim: float
    mse: float
    n_images: int
    n_skipped: int = 0


def _check_aligned(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_aligned(a, b)
    diff = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) * 255.0
    return float(np.mean(diff * diff))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(255.0**2 / err), PSNR_CAP_DB))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return k / k.sum()


def _filter_valid(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering along both axes."""
    x = sliding_window_view(x, len(kernel), axis=0) @ kernel
    return sliding_window_view(x, len(kernel), axis=1) @ kernel


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity on luminance, Gaussian-windowed, valid positions."""
    _check_aligned(a, b)
    la = to_luminance(np.asarray(a, dtype=np.float64)) * 255.0
    lb = to_luminance(np.asarray(b, dtype=np.float64)) * 255.0
    if la.shape[0] < SSIM_WINDOW or la.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    k = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _filter_valid(la, k)
    mu_b = _filter_valid(lb, k)
    var_a = _filter_valid(la * la, k) - mu_a * mu_a
    var_b = _filter_valid(lb * lb, k) - mu_b * mu_b
    cov = _filter_valid(la * lb, k) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def _predict(predictor, sample):
    if predictor == "direct_composite":
        return sample.composite
    if isinstance(predictor, ModelBundle):
        req = HarmonizeRequest(sample.composite, sample.fg_mask, sample.guide_mask)
        return harmonize(req, predictor).image
    raise ValueError(f"unknown predictor: {predictor!r}")


def evaluate(
    predictor,
    dataset_dir: str | Path,
    label: str | None = None,
    eval_resolution: str | int = "native",
) -> tuple[MetricsRow, list[dict]]:
    """Average per-image metrics over a dataset.

    predictor is either the string "direct_composite" (score the unmodified
    composite, the baseline row) or a ModelBundle. Records are visited in
    sorted id order so the aggregate never depends on directory listing
    order; unreadable records are skipped and counted.
    """
    dirs = list_record_dirs(Path(dataset_dir))
    details = []
    sums = np.zeros(3, dtype=np.float64)
    skipped = 0
    for record_dir in dirs:
        try:
            sample = read_sample(record_dir)
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable record %s: %s", record_dir.name, exc)
            skipped += 1
            continue
        if isinstance(eval_resolution, int):
            sample = type(sample)(
                composite=resize(sample.composite, eval_resolution, eval_resolution),
                ground_truth=resize(sample.ground_truth, eval_resolution, eval_resolution),
                fg_mask=resize_mask_binary(sample.fg_mask, eval_resolution, eval_resolution),
                guide_mask=resize_mask_binary(sample.guide_mask, eval_resolution, eval_resolution),
                meta=sample.meta,
            )
        pred = _predict(predictor, sample)
        row = {
            "id": record_dir.name,
            "psnr": psnr(pred, sample.ground_truth),
            "ssim": ssim(pred, sample.ground_truth),
            "mse": mse(pred, sample.ground_truth),
        }
        details.append(row)
        sums += (row["psnr"], row["ssim"], row["mse"])
    if not details:
        raise ValueError(f"no evaluable records under {dataset_dir}")
    n = len(details)
    if label is None:
        label = predictor if isinstance(predictor, str) else "model"
    return (
        MetricsRow(method=label, psnr=sums[0] / n, ssim=sums[1] / n,
                   mse=sums[2] / n, n_images=n, n_skipped=skipped),
        details,
    )


def write_report(rows: list[tuple[MetricsRow, list[dict]]], path: str | Path) -> None:
    payload = {
        "methods": [
            {**asdict(row), "per_image": details} for row, details in rows
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2))
