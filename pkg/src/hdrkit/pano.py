"""Spherical panorama geometry: equirectangular mapping, ceiling-view
perspective conversion, merging, and the perspective cropping scheme.

Conventions, fixed throughout the toolkit:

* Equirectangular images have width = 2 * height. Colatitude theta runs
  from 0 at the +z pole (up) to pi at -z, theta = pi * (y + 0.5) / H.
  Azimuth phi = 2 * pi * (x + 0.5) / W - pi, so the left image edge is
  phi = -pi. Directions are (sin t * cos p, sin t * sin p, cos t).
* The ceiling view images the plane z = 0 through the sphere center. The
  projection camera sits at (0, 0, -d) below the center; with the default
  d = 1 the mapping is exactly the stereographic projection from the south
  pole and the upper hemisphere fills the inscribed unit disk.
* Ceiling pixel (row 0, col 0) is the plane corner (-extent, +extent);
  columns increase +x, rows decrease +y.
* Bilinear sampling wraps horizontally and clamps vertically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import image_data

__all__ = [
    "PanoProjection",
    "equirect_dir",
    "dir_equirect",
    "bilinear_sample",
    "plane_to_sphere",
    "sphere_to_plane",
    "pano_to_ceiling",
    "ceiling_to_pano",
    "merge_mask",
    "merge_panorama",
    "crop_perspective",
    "crop_set",
    "DEFAULT_MERGE_TAU",
    "CROP_YAWS_DEG",
    "CROP_ELEVATED_YAWS_DEG",
    "CROP_ELEVATED_PITCH_DEG",
]

DEFAULT_MERGE_TAU = 0.13
CROP_YAWS_DEG = (0.0, 60.0, 120.0, 180.0, 240.0, 300.0)
CROP_ELEVATED_YAWS_DEG = (0.0, 120.0, 240.0)
CROP_ELEVATED_PITCH_DEG = 45.0


@dataclass(frozen=True)
class PanoProjection:
    """Geometry linking an equirectangular panorama and its ceiling view."""

    pano_width: int
    pano_height: int
    ceil_width: int
    ceil_height: int
    camera_offset: float = 1.0
    plane_extent: float = 1.0

    def __post_init__(self):
        if self.pano_width != 2 * self.pano_height:
            raise ValueError("panorama width must be twice its height")
        if self.ceil_width != self.ceil_height:
            raise ValueError("ceiling view must be square")
        if not 0 < self.camera_offset <= 1:
            raise ValueError("camera offset must lie in (0, 1]")
        if self.plane_extent <= 0:
            raise ValueError("plane extent must be positive")


def equirect_dir(x, y, width: int, height: int) -> np.ndarray:
    """Unit direction(s) for pixel indices (x, y); stacks on the last axis."""
    theta = np.pi * (np.asarray(y, dtype=np.float64) + 0.5) / height
    phi = 2.0 * np.pi * (np.asarray(x, dtype=np.float64) + 0.5) / width - np.pi
    sin_t = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(sin_t * np.cos(phi), sin_t * np.sin(phi), np.cos(theta)),
        axis=-1,
    )


def dir_equirect(v, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous pixel coordinates (x, y) of unit direction(s) v."""
    v = np.asarray(v, dtype=np.float64)
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    return _angles_to_pixels(np.arctan2(vy, vx), np.arctan2(np.hypot(vx, vy), vz),
                             width, height)


def _angles_to_pixels(phi, theta, width, height):
    x = (phi + np.pi) / (2.0 * np.pi) * width - 0.5
    y = theta / np.pi * height - 0.5
    # wrap into [-0.5, width - 0.5) so pixel centers map to themselves
    return np.mod(x + 0.5, width) - 0.5, y


def bilinear_sample(img: np.ndarray, x, y, wrap_x: bool = True) -> np.ndarray:
    """Bilinearly sample at continuous pixel-center coordinates (x, y).

    Horizontal coordinates wrap around the seam when wrap_x is set (the
    panorama case); vertical coordinates always clamp. The incremental
    lerp form keeps sampling a constant image bit-exact.
    """
    a = image_data(img)
    h, w = a.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if wrap_x:
        x = np.mod(x, w)
        x0 = np.floor(x)
        fx = x - x0
        x0 = x0.astype(np.int64) % w
        x1 = (x0 + 1) % w
    else:
        x = np.clip(x, 0.0, w - 1.0)
        x0 = np.floor(x)
        fx = x - x0
        x0 = x0.astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
    y = np.clip(y, 0.0, h - 1.0)
    y0 = np.floor(y)
    fy = y - y0
    y0 = y0.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)

    if a.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    v00 = a[y0, x0]
    v10 = a[y0, x1]
    v01 = a[y1, x0]
    v11 = a[y1, x1]
    top = v00 + fx * (v10 - v00)
    bottom = v01 + fx * (v11 - v01)
    return top + fy * (bottom - top)


def plane_to_sphere(cx, cy, offset: float = 1.0):
    """Upper-hemisphere point hit by the ray from (0,0,-offset) through (cx, cy, 0).

    Returns (px, py, pz, valid); points whose ray meets the sphere only in
    the lower hemisphere are flagged invalid. For any offset in (0, 1] the
    valid region is exactly the unit disk of the plane.
    """
    cx = np.asarray(cx, dtype=np.float64)
    cy = np.asarray(cy, dtype=np.float64)
    d = float(offset)
    rho2 = cx * cx + cy * cy
    disc = rho2 * (1.0 - d * d) + d * d
    t = (d * d + np.sqrt(disc)) / (rho2 + d * d)
    px = t * cx
    py = t * cy
    pz = d * (t - 1.0)
    return px, py, pz, pz >= 0


def sphere_to_plane(px, py, pz, offset: float = 1.0):
    """Plane point (cx, cy) imaging direction p from the offset camera.

    Only meaningful for pz >= -offset; the ceiling conversion masks
    everything below the equator anyway.
    """
    d = float(offset)
    denom = np.asarray(pz, dtype=np.float64) + d
    denom = np.where(denom == 0, np.nan, denom)
    s = d / denom
    return s * np.asarray(px, dtype=np.float64), s * np.asarray(py, dtype=np.float64)


def _ceiling_grid(proj: PanoProjection):
    ext = proj.plane_extent
    cx = ((np.arange(proj.ceil_width) + 0.5) / proj.ceil_width * 2.0 - 1.0) * ext
    cy = (1.0 - (np.arange(proj.ceil_height) + 0.5) / proj.ceil_height * 2.0) * ext
    return np.meshgrid(cx, cy)


def pano_to_ceiling(pano, proj: PanoProjection) -> np.ndarray:
    """Project the panorama's upper hemisphere onto the ceiling-view plane.

    Plane points outside the imaged hemisphere (the corners beyond the unit
    disk) are filled with 0.
    """
    a = np.asarray(image_data(pano), dtype=np.float64)
    cx, cy = _ceiling_grid(proj)
    px, py, pz, valid = plane_to_sphere(cx, cy, proj.camera_offset)
    x, y = dir_equirect(np.stack((px, py, pz), axis=-1), proj.pano_width, proj.pano_height)
    out = bilinear_sample(a, x, y, wrap_x=True)
    out[~valid] = 0.0
    return out


def ceiling_to_pano(ceil, proj: PanoProjection) -> tuple[np.ndarray, np.ndarray]:
    """Resample a ceiling-view image back into panorama coordinates.

    Returns (panorama, validity): pixels below the equator or projecting
    outside the imaged plane region are 0 with validity 0.
    """
    a = np.asarray(image_data(ceil), dtype=np.float64)
    w, h = proj.pano_width, proj.pano_height
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    dirs = equirect_dir(xs, ys, w, h)
    px, py, pz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    valid = pz >= 0
    cx, cy = sphere_to_plane(px, py, np.where(valid, pz, 0.0), proj.camera_offset)
    ext = proj.plane_extent
    valid &= (np.abs(cx) <= ext) & (np.abs(cy) <= ext)
    jc = (cx / ext + 1.0) / 2.0 * proj.ceil_width - 0.5
    ic = (1.0 - cy / ext) / 2.0 * proj.ceil_height - 0.5
    out = bilinear_sample(a, np.where(valid, jc, 0.0), np.where(valid, ic, 0.0),
                          wrap_x=False)
    out[~valid] = 0.0
    return out, valid.astype(np.float64)


def merge_mask(i_ceil, proj: PanoProjection, tau: float = DEFAULT_MERGE_TAU) -> np.ndarray:
    """Soft highlight mask in panorama coordinates from a linear ceiling LDR.

    max(0, channel_mean - tau) / (1 - tau) of the back-projected ceiling
    image, clamped into [0, 1].
    """
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    pano, _ = ceiling_to_pano(i_ceil, proj)
    mean = pano.mean(axis=2) if pano.ndim == 3 else pano
    return np.clip(np.maximum(0.0, mean - tau) / (1.0 - tau), 0.0, 1.0)


def merge_panorama(h_ceil, h_pano, m_p: np.ndarray, proj: PanoProjection) -> np.ndarray:
    """Blend the ceiling-branch reconstruction into the panorama.

    m_p * c2p(h_ceil) + (1 - m_p) * h_pano; with m_p identically 0 this is
    exactly h_pano.
    """
    pano = np.asarray(image_data(h_pano), dtype=np.float64)
    ceil_in_pano, _ = ceiling_to_pano(h_ceil, proj)
    if ceil_in_pano.shape != pano.shape:
        raise ValueError(
            f"shape mismatch: converted ceiling {ceil_in_pano.shape} vs panorama {pano.shape}"
        )
    m = np.asarray(m_p, dtype=np.float64)
    if m.ndim == 2:
        m = m[..., None]
    return m * ceil_in_pano + (1.0 - m) * pano


def _camera_basis(yaw: float, pitch: float):
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cp * cy, cp * sy, sp])
    right = np.array([-sy, cy, 0.0])
    up = np.array([-sp * cy, -sp * sy, cp])
    return forward, right, up


def crop_perspective(pano, yaw: float, pitch: float, hfov: float,
                     out_width: int, out_height: int) -> np.ndarray:
    """Pinhole crop of the panorama from the sphere center.

    yaw/pitch/hfov in radians; yaw 0, pitch 0 looks along the panorama
    center column, positive pitch tilts up. Vertical field of view follows
    from the output aspect ratio.
    """
    if not 0 < hfov < np.pi:
        raise ValueError("horizontal field of view must lie in (0, pi)")
    a = np.asarray(image_data(pano), dtype=np.float64)
    forward, right, up = _camera_basis(yaw, pitch)
    tan_x = math.tan(hfov / 2.0)
    tan_y = tan_x * out_height / out_width
    u = (2.0 * (np.arange(out_width) + 0.5) / out_width - 1.0) * tan_x
    v = (1.0 - 2.0 * (np.arange(out_height) + 0.5) / out_height) * tan_y
    uu, vv = np.meshgrid(u, v)
    dirs = forward + uu[..., None] * right + vv[..., None] * up
    h, w = a.shape[:2]
    x, y = dir_equirect(dirs, w, h)
    return bilinear_sample(a, x, y, wrap_x=True)


def crop_set(pano, out_width: int = 320, out_height: int = 240,
             hfov_deg: float = 60.0, outdoor: bool = False):
    """The dataset cropping scheme: 4:3 views at fixed yaws.

    Six horizon-level crops at 60-degree yaw steps, plus three crops at
    45 degrees elevation (omitted for outdoor scenes). Returns a list of
    (image, params) pairs where params records yaw/pitch in degrees.
    """
    views = [(yaw, 0.0) for yaw in CROP_YAWS_DEG]
    if not outdoor:
        views += [(yaw, CROP_ELEVATED_PITCH_DEG) for yaw in CROP_ELEVATED_YAWS_DEG]
    crops = []
    for yaw_deg, pitch_deg in views:
        img = crop_perspective(pano, math.radians(yaw_deg), math.radians(pitch_deg),
                               math.radians(hfov_deg), out_width, out_height)
        crops.append((img, {"yaw_deg": yaw_deg, "pitch_deg": pitch_deg,
                            "hfov_deg": hfov_deg,
                            "width": out_width, "height": out_height}))
    return crops
