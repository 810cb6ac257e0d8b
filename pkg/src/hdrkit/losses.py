"""Training losses and HDR evaluation metrics.

The central quantity is the scale-invariant squared log error: because HDR
images in relative luminance are defined only up to a positive factor, the
error between two images is measured after the optimal global log-offset,
which has a closed form. All reductions accumulate in double precision and
reduce sequentially per image, so results do not depend on chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .image import channel_mean, exposure_preview, image_data

__all__ = [
    "LossConfig",
    "optimal_scale",
    "scale_invariant_loss",
    "si_mse",
    "seg_cross_entropy",
    "total_loss",
    "pano_loss",
    "display_anchor",
    "log_psnr",
    "ssim",
    "metric_report",
    "LOG_PSNR_CAP_DB",
]

LOG_PSNR_CAP_DB = 99.0


@dataclass(frozen=True)
class LossConfig:
    """Weights and the log-guard for the combined training losses.

    seg_cross_entropy is a plain sum over pixels and channels; total_loss
    divides it by the pixel count when normalize_seg is set so that alpha
    keeps its meaning across resolutions.
    """

    epsilon: float = 1e-6
    alpha: float = 0.05
    beta1: float = 0.2
    beta2: float = 0.01
    normalize_seg: bool = True

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if min(self.alpha, self.beta1, self.beta2) < 0:
            raise ValueError("loss weights must be non-negative")


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = image_data(pred).astype(np.float64, copy=False)
    g = image_data(gt).astype(np.float64, copy=False)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def _log_diff(pred, gt, eps: float) -> np.ndarray:
    p, g = _pair(pred, gt)
    return np.log(p + eps) - np.log(g + eps)


def optimal_scale(pred, gt, eps: float = 1e-6) -> float:
    """Positive multiplier for pred minimizing the mean squared log error.

    Closed form: log k is the mean over all elements of
    log(gt + eps) - log(pred + eps).
    """
    return float(math.exp(-_log_diff(pred, gt, eps).mean()))


def scale_invariant_loss(pred, gt, eps: float = 1e-6) -> float:
    """Mean squared log difference minus the squared mean log difference.

    Equals the minimum over all positive rescalings of pred of the mean
    squared log error, so it is invariant to a global rescaling of either
    image. Always >= 0 (it is a variance).
    """
    d = _log_diff(pred, gt, eps)
    return float(d.var())


def si_mse(pred, gt, eps: float = 1e-6) -> float:
    """Scale-invariant MSE metric (same quantity as the training loss).

    Returned raw; reporting layers may rescale into display units.
    """
    return scale_invariant_loss(pred, gt, eps)


def seg_cross_entropy(pred, gt, eps: float = 1e-6) -> float:
    """Binary cross-entropy summed over pixels and channels.

    pred holds per-channel probabilities and is clamped into
    [eps, 1 - eps]; gt is a one-hot mask.
    """
    p, g = _pair(pred, gt)
    p = np.clip(p, eps, 1.0 - eps)
    ce = -(g * np.log(p) + (1.0 - g) * np.log(1.0 - p))
    return float(ce.sum())


def total_loss(pred_hdr, gt_hdr, pred_mask, gt_mask, cfg: LossConfig = LossConfig()) -> float:
    """Combined reconstruction objective: scale-invariant + weighted segmentation."""
    si = scale_invariant_loss(pred_hdr, gt_hdr, cfg.epsilon)
    ce = seg_cross_entropy(pred_mask, gt_mask, cfg.epsilon)
    if cfg.normalize_seg:
        shape = image_data(gt_mask).shape
        ce /= shape[0] * shape[1]
    return si + cfg.alpha * ce


def pano_loss(pred, gt, merge_mask, cfg: LossConfig = LossConfig(), eps: float | None = None) -> float:
    """Panorama objective weighting highlight and background regions separately.

    With d the guarded log difference and m the merge mask broadcast over
    channels: beta1 * mean((m*d)**2) + beta2 * mean(((1-m)*d)**2).
    """
    eps = cfg.epsilon if eps is None else eps
    d = _log_diff(pred, gt, eps)
    m = np.asarray(image_data(merge_mask), dtype=np.float64)
    if m.ndim == 2:
        m = m[..., None]
    if m.min() < 0 or m.max() > 1:
        raise ValueError("merge mask values must lie in [0, 1]")
    high = float(((m * d) ** 2).mean())
    low = float((((1.0 - m) * d) ** 2).mean())
    return cfg.beta1 * high + cfg.beta2 * low


def display_anchor(pred, gt, ldr_linear, eps: float = 1e-6, peak: float = 255.0):
    """Bring a predicted/ground-truth HDR pair onto an absolute display scale.

    pred is first multiplied by its optimal alignment scale against gt;
    both are then scaled so the gt value at the linear LDR's brightest
    element maps to `peak` (cd/m2 for the conventional 255 anchor).
    Returns (pred_anchored, gt_anchored) as float64 arrays.
    """
    p, g = _pair(pred, gt)
    ldr = image_data(ldr_linear).astype(np.float64, copy=False)
    if ldr.shape != g.shape:
        raise ValueError("LDR anchor shape differs from the HDR pair")
    if float(ldr.max()) <= 0:
        raise ValueError("cannot anchor against an all-black LDR image")
    k = optimal_scale(pred, gt, eps)
    ref = float(g.flat[int(np.argmax(ldr))])
    if ref <= 0:
        raise ValueError("ground truth is zero at the LDR's brightest element")
    s = peak / ref
    return p * (k * s), g * s


def log_psnr(pred, gt, eps: float = 1e-6, cap_db: float = LOG_PSNR_CAP_DB) -> float:
    """PSNR in dB between log-domain images normalized to gt's log-range.

    Both images are log-transformed with an epsilon guard and mapped by the
    affine transform that sends gt's log range onto [0, 1] (peak 1). A zero
    MSE, or any value beyond it, reports the documented cap. A constant gt
    (empty log-range) falls back to unit span.
    """
    p, g = _pair(pred, gt)
    lp = np.log(p + eps)
    lg = np.log(g + eps)
    lo = float(lg.min())
    span = float(lg.max()) - lo
    if span <= 0:
        span = 1.0
    mse = float((((lp - lo) / span - (lg - lo) / span) ** 2).mean())
    if mse == 0.0:
        return cap_db
    return min(-10.0 * math.log10(mse), cap_db)


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def ssim(
    a,
    b,
    data_range: float = 255.0,
    k1: float = 0.01,
    k2: float = 0.03,
    win_size: int = 11,
    sigma: float = 1.5,
) -> float:
    """Structural similarity of two single-channel images.

    Gaussian-weighted 11x11 local statistics (sigma 1.5), stabilizers
    (k1*L)^2 and (k2*L)^2, averaged over the region where the window fits
    entirely inside the image.
    """
    x = np.asarray(image_data(a), dtype=np.float64)
    y = np.asarray(image_data(b), dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 2:
        raise ValueError("ssim expects single-channel (H, W) images")
    pad = win_size // 2
    if min(x.shape) < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} window")
    taps = _gaussian_taps(win_size, sigma)

    def smooth(img):
        out = correlate1d(img, taps, axis=0, mode="nearest")
        return correlate1d(out, taps, axis=1, mode="nearest")

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x ** 2
    var_y = smooth(y * y) - mu_y ** 2
    cov = smooth(x * y) - mu_x * mu_y
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    )
    return float(s[pad:-pad, pad:-pad].mean())


def metric_report(pred, gt, ldr_linear=None, eps: float = 1e-6,
                  preview_ev: float = 0.0, preview_window_ev: float = 10.0) -> dict:
    """The standard metric bundle: si_mse, log_psnr, ssim, and kappa.

    pred is aligned to gt by its optimal scale before log_psnr; when a
    linear LDR anchor is given, both images are display-anchored first.
    SSIM is computed on the channel means of identical exposure previews.
    """
    from .image import HdrImage

    k = optimal_scale(pred, gt, eps)
    p, g = _pair(pred, gt)
    if ldr_linear is not None:
        p_cmp, g_cmp = display_anchor(p, g, ldr_linear, eps)
    else:
        p_cmp, g_cmp = p * k, g
    prev_scale = 1.0 / max(float(g_cmp.max()), 1e-30)
    pa = exposure_preview(HdrImage(np.clip(p_cmp * prev_scale, 0, None)),
                          preview_ev, preview_window_ev)
    ga = exposure_preview(HdrImage(g_cmp * prev_scale), preview_ev, preview_window_ev)
    return {
        "si_mse": si_mse(pred, gt, eps),
        "log_psnr": log_psnr(p_cmp, g_cmp, eps),
        "ssim": ssim(channel_mean(pa), channel_mean(ga)),
        "kappa": k,
    }
