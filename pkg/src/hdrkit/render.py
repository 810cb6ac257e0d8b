"""Deterministic environment-light renderer for render-based evaluation.

Spheres of simple materials (diffuse, mirror, glossy) above an optional
ground plane, lit only by an equirectangular environment map and seen by an
orthographic camera looking along -y. No shadows or interreflections: the
point is a reproducible relighting comparison, not photorealism.

Diffuse irradiance is a direct sum over environment texels, so renders are
bit-deterministic and can be checked against the analytic uniform-
environment value. Glossy lobes use a fixed stratified sample grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import HdrImage, channel_mean, exposure_preview, image_data
from .losses import log_psnr, ssim
from .pano import bilinear_sample, dir_equirect

__all__ = [
    "Material",
    "Sphere",
    "OrthoCamera",
    "SceneConfig",
    "SceneParseError",
    "parse_scene",
    "default_scene_text",
    "diffuse_irradiance",
    "render",
    "compare_renders",
    "GLOSSY_GRID",
]

GLOSSY_GRID = (16, 16)  # stratified samples per glossy shading point
_IRRADIANCE_CHUNK = 512


@dataclass(frozen=True)
class Material:
    kind: str  # diffuse | mirror | glossy
    albedo: tuple[float, float, float] = (1.0, 1.0, 1.0)
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("diffuse", "mirror", "glossy"):
            raise ValueError(f"unknown material kind {self.kind!r}")
        if any(not 0 <= a <= 1 for a in self.albedo):
            raise ValueError("albedo components must lie in [0, 1]")
        if self.kind == "glossy" and self.exponent < 1:
            raise ValueError("glossy exponent must be >= 1")


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    material: Material

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class OrthoCamera:
    """Orthographic camera looking along -y at the x/z plane region
    [center_x - span, center_x + span] x [center_z - span*h/w, ...]."""

    width: int
    height: int
    span: float = 3.0
    center_x: float = 0.0
    center_z: float = 1.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.span <= 0:
            raise ValueError("camera needs positive dimensions and span")


@dataclass(frozen=True)
class SceneConfig:
    camera: OrthoCamera
    spheres: tuple[Sphere, ...] = ()
    plane_albedo: tuple[float, float, float] | None = None
    background: bool = True


class SceneParseError(ValueError):
    pass


def parse_scene(text: str) -> SceneConfig:
    """Parse the line-based scene description.

    Directives (one per line, '#' comments allowed):
      camera W H SPAN [CX CZ]
      sphere CX CY CZ RADIUS diffuse R G B
      sphere CX CY CZ RADIUS mirror
      sphere CX CY CZ RADIUS glossy EXPONENT R G B
      plane R G B
      background on|off
    """
    camera = None
    spheres: list[Sphere] = []
    plane = None
    background = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        word, args = parts[0].lower(), parts[1:]
        try:
            if word == "camera":
                w, h = int(args[0]), int(args[1])
                span = float(args[2]) if len(args) > 2 else 3.0
                cx = float(args[3]) if len(args) > 3 else 0.0
                cz = float(args[4]) if len(args) > 4 else 1.0
                camera = OrthoCamera(w, h, span, cx, cz)
            elif word == "sphere":
                center = (float(args[0]), float(args[1]), float(args[2]))
                radius = float(args[3])
                kind = args[4].lower()
                if kind == "mirror":
                    mat = Material("mirror")
                elif kind == "diffuse":
                    mat = Material("diffuse", (float(args[5]), float(args[6]), float(args[7])))
                elif kind == "glossy":
                    mat = Material("glossy",
                                   (float(args[6]), float(args[7]), float(args[8])),
                                   exponent=float(args[5]))
                else:
                    raise SceneParseError(f"unknown material {kind!r}")
                spheres.append(Sphere(center, radius, mat))
            elif word == "plane":
                plane = (float(args[0]), float(args[1]), float(args[2]))
            elif word == "background":
                background = args[0].lower() in ("on", "true", "1", "yes")
            else:
                raise SceneParseError(f"unknown directive {word!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, SceneParseError):
                raise SceneParseError(f"line {lineno}: {exc}") from None
            raise SceneParseError(f"line {lineno}: bad arguments for {word!r}: {exc}") from None
    if camera is None:
        raise SceneParseError("scene has no camera line")
    return SceneConfig(camera=camera, spheres=tuple(spheres),
                       plane_albedo=plane, background=background)


def default_scene_text(width: int = 160, height: int = 120) -> str:
    """A small evaluation scene: a row of spheres with the four materials."""
    return "\n".join([
        f"camera {width} {height} 4.5 0 0.9",
        "background on",
        "sphere -3.3 0 0.9 0.9 diffuse 0.85 0.85 0.85",
        "sphere -1.1 0 0.9 0.9 mirror",
        "sphere 1.1 0 0.9 0.9 glossy 64 0.9 0.9 0.9",
        "sphere 3.3 0 0.9 0.9 glossy 8 0.7 0.7 0.7",
        "",
    ])


def _env_texel_table(env) -> tuple[np.ndarray, np.ndarray]:
    """Directions and solid-angle-weighted radiance of every env texel."""
    a = np.asarray(image_data(env), dtype=np.float64)
    h, w = a.shape[:2]
    theta = np.pi * (np.arange(h) + 0.5) / h
    phi = 2.0 * np.pi * (np.arange(w) + 0.5) / w - np.pi
    sin_t = np.sin(theta)
    dirs = np.empty((h, w, 3))
    dirs[..., 0] = sin_t[:, None] * np.cos(phi)[None, :]
    dirs[..., 1] = sin_t[:, None] * np.sin(phi)[None, :]
    dirs[..., 2] = np.cos(theta)[:, None]
    d_omega = (2.0 * np.pi / w) * (np.pi / h) * sin_t
    weighted = a * d_omega[:, None, None]
    return dirs.reshape(-1, 3), weighted.reshape(-1, 3)


def diffuse_irradiance(normals, env) -> np.ndarray:
    """Cosine-weighted irradiance E(n) summed over environment texels.

    normals: (..., 3) unit vectors. Returns (..., 3) irradiance; outgoing
    diffuse radiance is albedo * E / pi. Under a uniform environment L0 the
    sum converges to pi * L0.
    """
    n = np.asarray(normals, dtype=np.float64)
    flat = n.reshape(-1, 3)
    dirs, weighted = _env_texel_table(env)
    out = np.empty((flat.shape[0], 3))
    for start in range(0, flat.shape[0], _IRRADIANCE_CHUNK):
        chunk = flat[start:start + _IRRADIANCE_CHUNK]
        cos = chunk @ dirs.T
        np.maximum(cos, 0.0, out=cos)
        out[start:start + _IRRADIANCE_CHUNK] = cos @ weighted
    return out.reshape(n.shape)


def _env_lookup(env_arr: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    h, w = env_arr.shape[:2]
    x, y = dir_equirect(dirs, w, h)
    return bilinear_sample(env_arr, x, y, wrap_x=True)


def _orthonormal_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two tangents per unit axis vector; branchless (Duff et al. style)."""
    z = axis[..., 2]
    sign = np.where(z >= 0, 1.0, -1.0)
    a = -1.0 / (sign + z)
    b = axis[..., 0] * axis[..., 1] * a
    t1 = np.stack([1.0 + sign * axis[..., 0] ** 2 * a, sign * b, -sign * axis[..., 0]],
                  axis=-1)
    t2 = np.stack([b, sign + axis[..., 1] ** 2 * a, -axis[..., 1]], axis=-1)
    return t1, t2


def _glossy_shade(env_arr: np.ndarray, reflect: np.ndarray, exponent: float) -> np.ndarray:
    """Average environment radiance over a fixed cos^k lobe sample grid."""
    n1, n2 = GLOSSY_GRID
    u1 = (np.arange(n1) + 0.5) / n1
    u2 = (np.arange(n2) + 0.5) / n2
    uu1, uu2 = np.meshgrid(u1, u2)
    cos_a = uu1.ravel() ** (1.0 / (exponent + 1.0))
    sin_a = np.sqrt(np.maximum(0.0, 1.0 - cos_a ** 2))
    phi = 2.0 * np.pi * uu2.ravel()
    local = np.stack([sin_a * np.cos(phi), sin_a * np.sin(phi), cos_a], axis=-1)

    t1, t2 = _orthonormal_basis(reflect)
    dirs = (local[None, :, 0, None] * t1[:, None, :]
            + local[None, :, 1, None] * t2[:, None, :]
            + local[None, :, 2, None] * reflect[:, None, :])
    radiance = _env_lookup(env_arr, dirs)
    return radiance.mean(axis=1)


def render(scene: SceneConfig, env) -> HdrImage:
    """Render the scene under the environment map; deterministic."""
    env_arr = np.asarray(image_data(env), dtype=np.float64)
    cam = scene.camera
    w, h = cam.width, cam.height
    span_z = cam.span * h / w
    xs = cam.center_x + (2.0 * (np.arange(w) + 0.5) / w - 1.0) * cam.span
    zs = cam.center_z + (1.0 - 2.0 * (np.arange(h) + 0.5) / h) * span_z
    X, Z = np.meshgrid(xs, zs)

    hit_y = np.full((h, w), -np.inf)
    hit_index = np.full((h, w), -1, dtype=np.int64)
    for si, sphere in enumerate(scene.spheres):
        cx, cy, cz = sphere.center
        dx = X - cx
        dz = Z - cz
        rr = sphere.radius ** 2 - dx ** 2 - dz ** 2
        visible = rr >= 0
        y = np.where(visible, cy + np.sqrt(np.maximum(rr, 0.0)), -np.inf)
        closer = visible & (y > hit_y)
        hit_y[closer] = y[closer]
        hit_index[closer] = si
    # The ground plane z = 0 is parallel to the view rays of this camera,
    # so it never produces hits; it is accepted in scenes for forward
    # compatibility but does not shade.

    out = np.zeros((h, w, 3))
    if scene.background:
        down = _env_lookup(env_arr, np.array([0.0, -1.0, 0.0]))
        out[:, :] = down

    view_dir = np.array([0.0, -1.0, 0.0])
    for si, sphere in enumerate(scene.spheres):
        mask = hit_index == si
        if not mask.any():
            continue
        px = X[mask]
        pz = Z[mask]
        py = hit_y[mask]
        cx, cy, cz = sphere.center
        normals = np.stack([(px - cx), (py - cy), (pz - cz)], axis=-1) / sphere.radius
        mat = sphere.material
        albedo = np.asarray(mat.albedo)
        if mat.kind == "diffuse":
            shade = albedo * diffuse_irradiance(normals, env_arr) / np.pi
        else:
            # reflect the view direction about the normal
            dot = normals @ view_dir
            reflect = view_dir[None, :] - 2.0 * dot[:, None] * normals
            reflect /= np.linalg.norm(reflect, axis=-1, keepdims=True)
            if mat.kind == "mirror":
                shade = _env_lookup(env_arr, reflect)
            else:
                shade = albedo * _glossy_shade(env_arr, reflect, mat.exponent)
        out[mask] = shade
    return HdrImage(np.maximum(out, 0.0).astype(np.float32))


def compare_renders(a, b, preview_ev: float = 0.0, preview_window_ev: float = 10.0) -> dict:
    """Metric bundle for two renders: linear MSE, log-domain PSNR, and SSIM
    of identically tone-mapped previews."""
    pa = np.asarray(image_data(a), dtype=np.float64)
    pb = np.asarray(image_data(b), dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError(f"shape mismatch: {pa.shape} vs {pb.shape}")
    mse = float(((pa - pb) ** 2).mean())
    scale = 1.0 / max(float(pb.max()), 1e-30)
    prev_a = exposure_preview(HdrImage((pa * scale).astype(np.float32)),
                              preview_ev, preview_window_ev)
    prev_b = exposure_preview(HdrImage((pb * scale).astype(np.float32)),
                              preview_ev, preview_window_ev)
    return {
        "mse": mse,
        "log_psnr": log_psnr(pa, pb),
        "ssim": ssim(channel_mean(prev_a), channel_mean(prev_b)),
    }
