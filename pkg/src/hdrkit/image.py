"""Image value types, sRGB conversions, and exposure-window previews.

All buffers are numpy arrays of shape (height, width, 3), row-major with
row 0 at the top of the image. HDR data is linear radiance in relative
luminance units; LDR data is 8-bit sRGB-encoded; LinearLdr is the
linearized [0, 1] float counterpart of an LDR image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HdrImage",
    "LdrImage",
    "LinearLdr",
    "SegMask",
    "image_data",
    "srgb_eotf",
    "srgb_oetf",
    "quantize_u8",
    "srgb_to_linear",
    "linear_to_srgb",
    "channel_mean",
    "exposure_preview",
]

# Two-piece sRGB transfer function constants.
_SRGB_LINEAR_MAX = 0.04045
_SRGB_SLOPE = 12.92
_SRGB_A = 1.055
_SRGB_B = 0.055
_SRGB_GAMMA = 2.4
_SRGB_EOTF_BREAK = _SRGB_LINEAR_MAX / _SRGB_SLOPE  # 0.0031308...


def _as_hwc3(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (height, width, 3) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return np.ascontiguousarray(arr)


@dataclass(eq=False)
class HdrImage:
    """Linear radiance image in relative luminance units.

    Values must be finite and non-negative; the absolute scale carries no
    meaning until the image is calibrated against an LDR reference.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_hwc3(self.data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError("HDR image contains non-finite values")
        if arr.min() < 0:
            raise ValueError("HDR image contains negative values")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(eq=False)
class LdrImage:
    """8-bit sRGB-encoded image (stored display codes, 0..255)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_hwc3(self.data)
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and arr.min() >= 0 and arr.max() <= 255:
                arr = arr.astype(np.uint8)
            else:
                raise ValueError("LDR image must be uint8 (codes 0..255)")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(eq=False)
class LinearLdr:
    """Linear-light float image with every value in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_hwc3(self.data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError("linear LDR contains non-finite values")
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError("linear LDR values must lie in [0, 1]")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(eq=False)
class SegMask:
    """One-hot three-class luminance map (dim / mid / bright per pixel)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_hwc3(self.data)
        arr = arr.astype(np.uint8, copy=False)
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("segmentation mask must be one-hot (0/1 values)")
        if not np.all(arr.sum(axis=2) == 1):
            raise ValueError("segmentation mask channels must sum to 1 per pixel")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def image_data(img) -> np.ndarray:
    """Return the pixel buffer of a wrapper type, or the array itself."""
    if isinstance(img, np.ndarray):
        return img
    if hasattr(img, "data"):
        return np.asarray(img.data)
    return np.asarray(img)


def srgb_eotf(x: np.ndarray) -> np.ndarray:
    """Decode sRGB-encoded values in [0, 1] to linear light."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(
        x <= _SRGB_LINEAR_MAX,
        x / _SRGB_SLOPE,
        ((x + _SRGB_B) / _SRGB_A) ** _SRGB_GAMMA,
    )


def srgb_oetf(x: np.ndarray) -> np.ndarray:
    """Encode linear-light values to sRGB in [0, 1]; input is clamped first."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(
        x <= _SRGB_EOTF_BREAK,
        x * _SRGB_SLOPE,
        _SRGB_A * x ** (1.0 / _SRGB_GAMMA) - _SRGB_B,
    )


def quantize_u8(x: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to 0..255 bytes, rounding halves up."""
    codes = np.floor(np.asarray(x, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(codes, 0, 255).astype(np.uint8)


def srgb_to_linear(img: LdrImage) -> LinearLdr:
    """Convert stored 8-bit sRGB codes to linear RGB in [0, 1]."""
    codes = image_data(img)
    lin = srgb_eotf(codes.astype(np.float64) / 255.0)
    return LinearLdr(np.clip(lin, 0.0, 1.0).astype(np.float32))


def linear_to_srgb(img: LinearLdr) -> LdrImage:
    """Encode linear RGB to 8-bit sRGB codes (exact inverse on the 256 codes)."""
    return LdrImage(quantize_u8(srgb_oetf(image_data(img))))


def channel_mean(img) -> np.ndarray:
    """Per-pixel arithmetic mean of the three channels, as (H, W) float64."""
    return image_data(img).astype(np.float64, copy=False).mean(axis=2)


def exposure_preview(h: HdrImage, exposure_ev: float, dr_window_ev: float) -> LdrImage:
    """Map an HDR image into an LDR preview through a limited exposure window.

    The image is scaled by 2**exposure_ev, values below 2**(-dr_window_ev)
    are floored to 0, the rest are clamped to [0, 1], and the result is
    sRGB-encoded. Deterministic; useful for visual inspection only.
    """
    if not dr_window_ev > 0:
        raise ValueError("dr_window_ev must be positive")
    scaled = image_data(h).astype(np.float64, copy=False) * (2.0 ** exposure_ev)
    floor = 2.0 ** (-dr_window_ev)
    windowed = np.where(scaled < floor, 0.0, np.minimum(scaled, 1.0))
    return LdrImage(quantize_u8(srgb_oetf(windowed)))
