"""Virtual camera: synthesize realistic 8-bit LDR images from HDR sources.

The pipeline draws a random dynamic range and response-curve shape, finds a
mean-value auto-exposure, applies the camera's noise floor and response
curve, and quantizes to 8 bits. Everything is deterministic given the
image and the seed, so datasets can be reproduced from their manifests.

The random generator is numpy's PCG64 (``np.random.default_rng``); a batch
master seed is split into per-file seeds with ``np.random.SeedSequence``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .image import HdrImage, LdrImage, image_data, quantize_u8

__all__ = [
    "DYNAMIC_RANGE_EV",
    "CRF_SIGMA_RANGE",
    "CRF_N_RANGE",
    "DEFAULT_TARGET_MEAN",
    "AutoExposureError",
    "CameraSample",
    "sample_camera",
    "identity_camera",
    "auto_expose",
    "apply_dynamic_range",
    "apply_crf",
    "synth_ldr",
    "split_seeds",
]

# Parameter ranges of the simulated camera population.
DYNAMIC_RANGE_EV = (9.6, 14.8)
CRF_SIGMA_RANGE = (0.3, 0.5)
CRF_N_RANGE = (0.8, 1.0)
DEFAULT_TARGET_MEAN = 0.18  # photographic middle gray in linear light

_BISECT_ITERS = 90
_BRACKET_LOG2 = 40


class AutoExposureError(ValueError):
    """The requested mean brightness cannot be reached on this image."""


@dataclass(frozen=True)
class CameraSample:
    """One virtual-camera draw; exposure is filled in by synth_ldr.

    crf_sigma/crf_n of None select the identity response curve, which the
    sampler never produces but calibration cross-checks rely on.
    """

    dynamic_range_ev: float
    crf_sigma: float | None
    crf_n: float | None
    seed: int | None = None
    exposure: float | None = None

    @property
    def is_identity_crf(self) -> bool:
        return self.crf_sigma is None or self.crf_n is None


def sample_camera(seed) -> CameraSample:
    """Draw camera parameters uniformly from their ranges (PCG64, fixed order).

    Draw order: dynamic range, then sigma, then n. Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    dr = float(rng.uniform(*DYNAMIC_RANGE_EV))
    sigma = float(rng.uniform(*CRF_SIGMA_RANGE))
    n = float(rng.uniform(*CRF_N_RANGE))
    return CameraSample(dynamic_range_ev=dr, crf_sigma=sigma, crf_n=n,
                        seed=None if seed is None else int(seed))


def identity_camera(dynamic_range_ev: float = DYNAMIC_RANGE_EV[1]) -> CameraSample:
    """A camera with the identity response curve, for calibration checks."""
    return CameraSample(dynamic_range_ev=dynamic_range_ev, crf_sigma=None, crf_n=None)


def auto_expose(h, target_mean: float = DEFAULT_TARGET_MEAN, tol: float = 1e-4) -> float:
    """Exposure multiplier e such that mean(clamp(e*h, 0, 1)) = target_mean.

    Solved by bisection on a mean-normalized copy of the image with a fixed
    iteration count, which makes the result deterministic and insensitive
    to a global rescaling of the input (relative-luminance behavior).
    """
    if not 0 < target_mean < 1:
        raise ValueError("target_mean must lie in (0, 1)")
    a = image_data(h).astype(np.float64, copy=False)
    mu = float(a.mean())
    if not mu > 0:
        raise AutoExposureError("image has no positive pixels")
    g = a / mu

    def clipped_mean(m: float) -> float:
        return float(np.clip(m * g, 0.0, 1.0).mean())

    lo, hi = 2.0 ** -_BRACKET_LOG2, 2.0 ** _BRACKET_LOG2
    if clipped_mean(hi) < target_mean:
        raise AutoExposureError(
            f"target mean {target_mean} unreachable: too few positive pixels"
        )
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if clipped_mean(mid) < target_mean:
            lo = mid
        else:
            hi = mid
    m = 0.5 * (lo + hi)
    if abs(clipped_mean(m) - target_mean) > tol:
        raise AutoExposureError("auto-exposure did not converge to the target mean")
    return m / mu


def apply_dynamic_range(h_exposed: np.ndarray, dr_ev: float) -> np.ndarray:
    """Clamp an exposed image to [0, 1] and zero values under the noise floor.

    The floor is 2**(-dr_ev); a value exactly at the floor is kept.
    """
    clamped = np.clip(np.asarray(h_exposed, dtype=np.float64), 0.0, 1.0)
    floor = 2.0 ** (-float(dr_ev))
    return np.where(clamped < floor, 0.0, clamped)


def apply_crf(linear: np.ndarray, sigma: float, n: float) -> np.ndarray:
    """Parametric camera response curve (1+sigma) * v**n / (v**n + sigma).

    Fixes f(0)=0 and f(1)=1 and is strictly increasing on [0, 1] for any
    sigma > 0, n > 0.
    """
    if sigma <= 0 or n <= 0:
        raise ValueError("sigma and n must be positive")
    v = np.asarray(linear, dtype=np.float64)
    vn = v ** n
    return (1.0 + sigma) * vn / (vn + sigma)


def synth_ldr(
    h: HdrImage,
    sample: CameraSample,
    target_mean: float = DEFAULT_TARGET_MEAN,
) -> tuple[LdrImage, CameraSample]:
    """Run the full virtual camera on an HDR image.

    Auto-exposure is computed before the noise floor is applied. The
    response-curve output is quantized directly (value*255, halves up) with
    no extra transfer function: the curve itself plays the role of the
    camera nonlinearity. Returns the LDR image and the sample with its
    resolved exposure.
    """
    exposure = auto_expose(h, target_mean)
    exposed = image_data(h).astype(np.float64, copy=False) * exposure
    linear = apply_dynamic_range(exposed, sample.dynamic_range_ev)
    if sample.is_identity_crf:
        signal = linear
    else:
        signal = apply_crf(linear, sample.crf_sigma, sample.crf_n)
    return LdrImage(quantize_u8(signal)), replace(sample, exposure=exposure)


def split_seeds(master_seed: int, count: int) -> list[int]:
    """Derive independent per-file seeds from a master seed.

    Uses ``SeedSequence(master_seed).spawn(count)`` and collapses each child
    to a single 64-bit integer, so batch items are reproducible from the
    master seed and their position alone.
    """
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]
