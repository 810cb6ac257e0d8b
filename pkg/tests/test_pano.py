import math

import numpy as np
import pytest

from hdrkit.pano import (
    PanoProjection,
    bilinear_sample,
    ceiling_to_pano,
    crop_perspective,
    crop_set,
    dir_equirect,
    equirect_dir,
    merge_mask,
    merge_panorama,
    pano_to_ceiling,
    plane_to_sphere,
    sphere_to_plane,
)

W, H = 256, 128
PROJ = PanoProjection(W, H, 512, 512)


def band_limited_pano(w=W, h=H):
    ys, xs = np.mgrid[0:h, 0:w]
    theta = np.pi * (ys + 0.5) / h
    phi = 2 * np.pi * (xs + 0.5) / w - np.pi
    pattern = 1.5 + 0.3 * np.sin(theta) * np.cos(phi) + 0.2 * np.cos(theta)
    return np.repeat(pattern[..., None], 3, axis=2)


# --- direction mapping ---------------------------------------------------------

def test_projection_validation():
    with pytest.raises(ValueError):
        PanoProjection(100, 60, 64, 64)
    with pytest.raises(ValueError):
        PanoProjection(128, 64, 64, 32)
    with pytest.raises(ValueError):
        PanoProjection(128, 64, 64, 64, camera_offset=1.5)


def test_top_row_near_pole():
    d = equirect_dir(W // 2, 0, W, H)
    assert d[2] > 0.999
    assert abs(d[0]) < 0.05 and abs(d[1]) < 0.05


def test_direction_mapping_identity_on_pixel_centers():
    xs, ys = np.meshgrid(np.arange(W), np.arange(H))
    d = equirect_dir(xs, ys, W, H)
    assert np.allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-12)
    x2, y2 = dir_equirect(d, W, H)
    assert np.abs(x2 - xs).max() < 1e-9
    assert np.abs(y2 - ys).max() < 1e-9


def test_equator_rows_straddle_symmetrically():
    up = equirect_dir(0, H // 2 - 1, W, H)
    down = equirect_dir(0, H // 2, W, H)
    assert up[2] == pytest.approx(-down[2], abs=1e-12)
    assert up[2] > 0


# --- stereographic plane mapping -----------------------------------------------

def test_plane_to_sphere_analytic_points():
    px, py, pz, valid = plane_to_sphere(0.0, 0.0)
    assert (px, py, pz) == (0.0, 0.0, 1.0) and valid
    px, py, pz, valid = plane_to_sphere(1.0, 0.0)
    assert abs(px - 1.0) < 1e-9 and abs(pz) < 1e-9 and valid


def test_plane_to_sphere_matches_inverse_stereographic():
    # default offset 1: p = (2cx, 2cy, 1 - r^2) / (1 + r^2)
    rng = np.random.default_rng(0)
    cx = rng.uniform(-1, 1, 100)
    cy = rng.uniform(-1, 1, 100)
    keep = cx ** 2 + cy ** 2 <= 1
    cx, cy = cx[keep], cy[keep]
    px, py, pz, valid = plane_to_sphere(cx, cy)
    r2 = cx ** 2 + cy ** 2
    assert valid.all()
    assert np.allclose(px, 2 * cx / (1 + r2), atol=1e-9)
    assert np.allclose(py, 2 * cy / (1 + r2), atol=1e-9)
    assert np.allclose(pz, (1 - r2) / (1 + r2), atol=1e-9)


def test_sphere_to_plane_round_trip():
    rng = np.random.default_rng(1)
    for offset in (1.0, 0.7, 0.4):
        cx = rng.uniform(-0.9, 0.9, 50)
        cy = rng.uniform(-0.9, 0.9, 50)
        keep = cx ** 2 + cy ** 2 < 1
        px, py, pz, _ = plane_to_sphere(cx[keep], cy[keep], offset)
        bx, by = sphere_to_plane(px, py, pz, offset)
        assert np.allclose(bx, cx[keep], atol=1e-12)
        assert np.allclose(by, cy[keep], atol=1e-12)


def test_outside_disk_is_invalid():
    _, _, _, valid = plane_to_sphere(np.array([1.01, 5.0]), np.array([0.0, 0.0]))
    assert not valid.any()


# --- bilinear sampling -----------------------------------------------------------

def test_bilinear_constant_is_exact():
    img = np.full((8, 16, 3), 0.37)
    xs = np.array([0.0, 3.3, 15.9, -0.4])
    ys = np.array([0.0, 2.7, 7.9, 3.5])
    out = bilinear_sample(img, xs, ys)
    assert np.all(out == 0.37)


def test_bilinear_wraps_horizontally():
    img = np.zeros((2, 4, 3))
    img[:, 0] = 1.0
    img[:, 3] = 3.0
    # halfway between the last and first columns
    out = bilinear_sample(img, np.array([3.5]), np.array([0.0]))
    assert out[0, 0] == pytest.approx(2.0)


def test_bilinear_clamps_vertically():
    img = np.zeros((2, 8, 3))
    img[0] = 1.0
    out = bilinear_sample(img, np.array([2.0]), np.array([-3.0]))
    assert out[0, 0] == 1.0


# --- p2c / c2p --------------------------------------------------------------------

def test_p2c_center_is_zenith():
    pano = band_limited_pano()
    zenith = pano[0].mean(axis=0)  # top row approximates the pole value
    ceil = pano_to_ceiling(pano, PROJ)
    c = PROJ.ceil_height // 2
    assert np.allclose(ceil[c, c], zenith, rtol=0.02)


def test_p2c_constant_inside_disk():
    pano = np.full((H, W, 3), 0.7)
    ceil = pano_to_ceiling(pano, PROJ)
    jj, ii = np.meshgrid(np.arange(512), np.arange(512))
    cx = (jj + 0.5) / 512 * 2 - 1
    cy = 1 - (ii + 0.5) / 512 * 2
    disk = cx ** 2 + cy ** 2 <= 1
    assert np.all(ceil[disk] == 0.7)
    assert np.all(ceil[~disk] == 0.0)


def test_c2p_zenith_pixel_reads_ceiling_center():
    # the top pano row samples within ~2 ceiling pixels of the center, so a
    # lit center block covers it entirely
    ceil = np.zeros((512, 512, 3))
    ceil[248:264, 248:264] = 5.0
    pano, valid = ceiling_to_pano(ceil, PROJ)
    assert np.all(pano[0, :, 0] == 5.0)
    assert valid[0].all()


def test_c2p_lower_hemisphere_is_invalid():
    ceil = np.full((512, 512, 3), 2.0)
    pano, valid = ceiling_to_pano(ceil, PROJ)
    assert np.all(valid[H // 2:] == 0.0)
    assert np.all(pano[H // 2:] == 0.0)
    assert np.all(valid[: H // 2] == 1.0)


def test_round_trip_on_band_limited_content():
    pano = band_limited_pano()
    ceil = pano_to_ceiling(pano, PROJ)
    back, valid = ceiling_to_pano(ceil, PROJ)
    mask = valid.astype(bool)
    rel = np.abs(back - pano)[mask] / pano[mask]
    assert rel.max() <= 0.02


def test_p2c_sample_positions_rotate_with_panorama_roll():
    # rolling the panorama a quarter turn must rotate the ceiling sampling
    # grid by exactly 90 degrees (pixel permutation for a square image)
    n = PROJ.ceil_height
    jj, ii = np.meshgrid(np.arange(n), np.arange(n))
    cx = ((jj + 0.5) / n * 2 - 1) * PROJ.plane_extent
    cy = (1 - (ii + 0.5) / n * 2) * PROJ.plane_extent
    px, py, pz, valid = plane_to_sphere(cx, cy)
    x, _ = dir_equirect(np.stack([px, py, pz], axis=-1), W, H)
    x_rot = np.rot90(x, k=-1)  # (i, j) -> (n-1-j, i)
    v_rot = np.rot90(valid, k=-1)
    expected = np.mod(x + W / 4 + 0.5, W) - 0.5
    diff = np.mod(x_rot - expected + W / 2, W) - W / 2
    assert np.abs(diff[v_rot & valid]).max() < 1e-9


# --- merge ------------------------------------------------------------------------

def test_merge_mask_values():
    proj = PanoProjection(64, 32, 32, 32)
    for mean_val, expected in [(0.13, 0.0), (1.0, 1.0), (0.565, 0.5)]:
        ceil = np.full((32, 32, 3), mean_val)
        m = merge_mask(ceil, proj, tau=0.13)
        upper = m[:8]  # well inside the valid hemisphere
        assert np.allclose(upper, expected, atol=1e-9)
        assert m.min() >= 0.0 and m.max() <= 1.0


def test_merge_identity_when_mask_zero():
    rng = np.random.default_rng(2)
    proj = PanoProjection(64, 32, 32, 32)
    h_p = rng.uniform(0.1, 5.0, (32, 64, 3))
    h_c = rng.uniform(0.1, 5.0, (32, 32, 3))
    merged = merge_panorama(h_c, h_p, np.zeros((32, 64)), proj)
    assert np.array_equal(merged, h_p)


def test_merge_full_mask_uses_ceiling():
    rng = np.random.default_rng(3)
    proj = PanoProjection(64, 32, 32, 32)
    h_p = rng.uniform(0.1, 5.0, (32, 64, 3))
    h_c = rng.uniform(0.1, 5.0, (32, 32, 3))
    converted, valid = ceiling_to_pano(h_c, proj)
    merged = merge_panorama(h_c, h_p, valid, proj)
    vmask = valid.astype(bool)
    assert np.array_equal(merged[vmask], converted[vmask])
    assert np.array_equal(merged[~vmask], h_p[~vmask])


def test_merge_half_mask_blends():
    proj = PanoProjection(64, 32, 32, 32)
    h_c = np.full((32, 32, 3), 2.0)
    h_p = np.zeros((32, 64, 3))
    merged = merge_panorama(h_c, h_p, np.full((32, 64), 0.5), proj)
    converted, valid = ceiling_to_pano(h_c, proj)
    assert np.allclose(merged, 0.5 * converted)


# --- crops -------------------------------------------------------------------------

def test_crop_constant_panorama():
    pano = np.full((H, W, 3), 1.25)
    crop = crop_perspective(pano, 0.3, 0.1, math.radians(70), 64, 48)
    assert np.all(crop == 1.25)


def test_crop_forward_center_pixel():
    pano = band_limited_pano()
    crop = crop_perspective(pano, 0.0, 0.0, math.radians(60), 65, 49)
    fwd = bilinear_sample(pano, np.array([W / 2 - 0.5]), np.array([H / 2 - 0.5]))
    assert np.allclose(crop[24, 32], fwd[0], rtol=1e-9)


def test_crop_yaw_wrap_equivariance():
    pano = band_limited_pano()
    direct = crop_perspective(pano, math.pi, 0.0, math.radians(60), 64, 48)
    rolled = crop_perspective(np.roll(pano, W // 2, axis=1), 0.0, 0.0,
                              math.radians(60), 64, 48)
    assert np.allclose(direct, rolled, atol=1e-6)


def test_crop_set_counts_and_aspect():
    pano = band_limited_pano()
    indoor = crop_set(pano, 80, 60)
    outdoor = crop_set(pano, 80, 60, outdoor=True)
    assert len(indoor) == 9
    assert len(outdoor) == 6
    yaws = [p["yaw_deg"] for _, p in indoor]
    assert yaws == [0, 60, 120, 180, 240, 300, 0, 120, 240]
    pitches = [p["pitch_deg"] for _, p in indoor]
    assert pitches == [0] * 6 + [45] * 3
    assert all(img.shape == (60, 80, 3) for img, _ in indoor)


def test_crop_set_constant():
    pano = np.full((H, W, 3), 3.0)
    for img, _ in crop_set(pano, 40, 30):
        assert np.all(img == 3.0)
