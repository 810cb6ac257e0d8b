import math

import numpy as np
import pytest

from hdrkit.image import HdrImage
from hdrkit.losses import (
    LOG_PSNR_CAP_DB,
    LossConfig,
    display_anchor,
    log_psnr,
    metric_report,
    optimal_scale,
    pano_loss,
    scale_invariant_loss,
    seg_cross_entropy,
    si_mse,
    ssim,
    total_loss,
)


def golden_section_min(f, lo, hi, iters=200):
    """Independent optimizer used as the oracle for the closed forms."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return f((a + b) / 2.0)


def random_pair(seed, shape=(24, 24, 3)):
    rng = np.random.default_rng(seed)
    return (rng.lognormal(0.0, 1.0, shape), rng.lognormal(0.0, 1.0, shape))


# --- optimal scale and scale-invariant loss ----------------------------------

def test_optimal_scale_constant_ratio():
    gt = np.full((4, 4, 3), 1.0)
    assert optimal_scale(2.0 * gt, gt, eps=1e-12) == pytest.approx(0.5, rel=1e-9)
    assert optimal_scale(gt, gt) == pytest.approx(1.0, abs=1e-15)


def test_optimal_scale_hand_case():
    # single channel, two elements, eps -> 0: log k = -(0 + 2)/2 = -1
    pred = np.array([[[1.0], [math.e ** 2]]])
    gt = np.array([[[1.0], [1.0]]])
    k = optimal_scale(pred, gt, eps=1e-15)
    assert k == pytest.approx(math.exp(-1.0), rel=1e-9)


def test_si_loss_zero_for_matches():
    _, gt = random_pair(0)
    assert scale_invariant_loss(gt, gt) == 0.0
    assert scale_invariant_loss(7.3 * gt, gt, eps=1e-12) == pytest.approx(0.0, abs=1e-12)


def test_si_loss_hand_case():
    # d = [0, 2]: mean(d^2) - mean(d)^2 = 2 - 1 = 1
    pred = np.array([[[1.0], [math.e ** 2]]])
    gt = np.array([[[1.0], [1.0]]])
    assert scale_invariant_loss(pred, gt, eps=0.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kappa", [1e-3, 1e3])
def test_si_loss_scale_invariance(kappa):
    # values bounded away from zero and eps proportional to the data keep
    # the log-guard's effect far below the 1e-9 tolerance
    rng = np.random.default_rng(1)
    pred = rng.uniform(1.0, 2.0, (24, 24, 3))
    gt = rng.uniform(1.0, 2.0, (24, 24, 3))
    eps = 1e-12 * max(pred.max(), gt.max())
    base = scale_invariant_loss(pred, gt, eps)
    assert abs(scale_invariant_loss(kappa * pred, gt, eps) - base) < 1e-9
    assert abs(scale_invariant_loss(pred, kappa * gt, eps) - base) < 1e-9


def test_si_loss_nonnegative():
    for seed in range(20):
        pred, gt = random_pair(seed, shape=(8, 8, 3))
        assert scale_invariant_loss(pred, gt) >= 0.0


def test_si_loss_matches_golden_section_oracle():
    pred, gt = random_pair(2)
    eps = 1e-6
    d = np.log(pred + eps) - np.log(gt + eps)

    def objective(log_k):
        return float(((d + log_k) ** 2).mean())

    oracle = golden_section_min(objective, math.log(1e-6), math.log(1e6))
    assert scale_invariant_loss(pred, gt, eps) == pytest.approx(oracle, abs=1e-6)


def test_si_mse_is_the_loss():
    pred, gt = random_pair(3)
    assert si_mse(pred, gt) == scale_invariant_loss(pred, gt)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        scale_invariant_loss(np.ones((2, 2, 3)), np.ones((2, 3, 3)))


# --- segmentation cross entropy ----------------------------------------------

def one_hot(classes):
    out = np.zeros(classes.shape + (3,))
    rows, cols = np.indices(classes.shape)
    out[rows, cols, classes] = 1.0
    return out


def test_ce_uniform_half():
    gt = one_hot(np.zeros((4, 5), dtype=int))
    pred = np.full((4, 5, 3), 0.5)
    # every element contributes ln 2 regardless of its label
    assert seg_cross_entropy(pred, gt) == pytest.approx(4 * 5 * 3 * math.log(2), rel=1e-12)


def test_ce_perfect_prediction_vanishes():
    gt = one_hot(np.arange(12).reshape(3, 4) % 3)
    for eps in (1e-3, 1e-6, 1e-9):
        pred = np.clip(gt, eps, 1 - eps)
        loss = seg_cross_entropy(pred, gt, eps)
        assert loss == pytest.approx(-12 * 3 * math.log(1 - eps), rel=1e-6)
        assert loss < 12 * 3 * 2 * eps  # -> 0 as eps -> 0


def test_ce_one_hot_swap_delta():
    # moving the predicted mass at one pixel from the true channel to a
    # wrong one changes two elements: delta = 2*ln((1-eps)/eps)
    eps = 1e-6
    gt = one_hot(np.zeros((2, 2), dtype=int))
    good = np.clip(gt, eps, 1 - eps)
    flipped = good.copy()
    flipped[0, 0, 0] = eps
    flipped[0, 0, 1] = 1 - eps
    delta = seg_cross_entropy(flipped, gt, eps) - seg_cross_entropy(good, gt, eps)
    assert delta == pytest.approx(2 * math.log((1 - eps) / eps), rel=1e-9)


# --- combined losses -----------------------------------------------------------

def test_total_loss_alpha_zero():
    pred, gt = random_pair(4, shape=(6, 6, 3))
    gt_mask = one_hot(np.zeros((6, 6), dtype=int))
    pred_mask = np.full((6, 6, 3), 0.3)
    cfg = LossConfig(alpha=0.0)
    assert total_loss(pred, gt, pred_mask, gt_mask, cfg) == scale_invariant_loss(pred, gt, cfg.epsilon)


def test_total_loss_affine_in_alpha():
    pred, gt = random_pair(5, shape=(6, 6, 3))
    gt_mask = one_hot(np.arange(36).reshape(6, 6) % 3)
    pred_mask = np.full((6, 6, 3), 0.4)

    def at(alpha):
        return total_loss(pred, gt, pred_mask, gt_mask, LossConfig(alpha=alpha))

    assert at(0.1) - at(0.0) == pytest.approx(2 * (at(0.05) - at(0.0)), rel=1e-9)


def test_total_loss_perfect_prediction():
    _, gt = random_pair(6, shape=(6, 6, 3))
    gt_mask = one_hot(np.arange(36).reshape(6, 6) % 3)
    eps = 1e-9
    pred_mask = np.clip(gt_mask, eps, 1 - eps)
    assert total_loss(gt, gt, pred_mask, gt_mask, LossConfig(epsilon=eps)) == pytest.approx(0.0, abs=1e-6)


def test_pano_loss_identities():
    pred, gt = random_pair(7, shape=(8, 8, 3))
    cfg = LossConfig()
    assert pano_loss(gt, gt, np.ones((8, 8)), cfg) == 0.0
    d = np.log(pred + cfg.epsilon) - np.log(gt + cfg.epsilon)
    full = pano_loss(pred, gt, np.ones((8, 8)), cfg)
    assert full == pytest.approx(cfg.beta1 * (d ** 2).mean(), rel=1e-12)


def test_pano_loss_constant_case():
    # d constant = 2 with a half mask: beta1*(0.5*2)^2 + beta2*(0.5*2)^2 = 0.21
    gt = np.full((4, 4, 3), 1.0)
    pred = gt * math.e ** 2
    mask = np.full((4, 4), 0.5)
    cfg = LossConfig(epsilon=1e-15)
    assert pano_loss(pred, gt, mask, cfg) == pytest.approx(0.21, rel=1e-9)


def test_pano_loss_mask_swap_identity():
    # complementing a binary mask swaps the roles of the two weighted terms,
    # so the two evaluations sum to (beta1+beta2)*mean(d^2)
    rng = np.random.default_rng(8)
    pred, gt = random_pair(8, shape=(8, 8, 3))
    mask = (rng.uniform(size=(8, 8)) < 0.5).astype(float)
    cfg = LossConfig()
    d = np.log(pred + cfg.epsilon) - np.log(gt + cfg.epsilon)
    total = pano_loss(pred, gt, mask, cfg) + pano_loss(pred, gt, 1.0 - mask, cfg)
    assert total == pytest.approx((cfg.beta1 + cfg.beta2) * (d ** 2).mean(), abs=1e-9)
    # equivalent formulation: same mask, swapped betas
    swapped = LossConfig(beta1=cfg.beta2, beta2=cfg.beta1)
    assert pano_loss(pred, gt, 1.0 - mask, cfg) == pytest.approx(
        pano_loss(pred, gt, mask, swapped), rel=1e-12)


def test_pano_loss_rejects_bad_mask():
    pred, gt = random_pair(9, shape=(4, 4, 3))
    with pytest.raises(ValueError):
        pano_loss(pred, gt, np.full((4, 4), 1.5))


# --- display anchoring ---------------------------------------------------------

def test_display_anchor_identity():
    _, gt = random_pair(10, shape=(8, 8, 3))
    ldr = np.clip(gt, 0, 1)
    pa, ga = display_anchor(gt, gt, ldr)
    assert np.array_equal(pa, ga)


def test_display_anchor_removes_scale():
    _, gt = random_pair(11, shape=(8, 8, 3))
    ldr = np.clip(0.3 * gt, 0, 1)
    pa, ga = display_anchor(2.0 * gt, gt, ldr)
    assert np.allclose(pa, ga, rtol=1e-6)


def test_display_anchor_peak_definition():
    _, gt = random_pair(12, shape=(8, 8, 3))
    ldr = np.clip(0.3 * gt, 0, 1)
    _, ga = display_anchor(gt, gt, ldr)
    assert ga.flat[np.argmax(ldr)] == pytest.approx(255.0, rel=1e-6)


def test_display_anchor_black_ldr_rejected():
    _, gt = random_pair(13, shape=(4, 4, 3))
    with pytest.raises(ValueError):
        display_anchor(gt, gt, np.zeros_like(gt))


# --- log PSNR and SSIM ----------------------------------------------------------

def test_log_psnr_identical_capped():
    _, gt = random_pair(14, shape=(8, 8, 3))
    assert log_psnr(gt, gt) == LOG_PSNR_CAP_DB


def test_log_psnr_decreases_with_noise():
    rng = np.random.default_rng(15)
    _, gt = random_pair(15, shape=(16, 16, 3))
    small = gt * np.exp(rng.normal(0, 0.01, gt.shape))
    big = gt * np.exp(rng.normal(0, 0.3, gt.shape))
    assert log_psnr(small, gt) > log_psnr(big, gt)


def _test_card(shape=(64, 64)):
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    card = 128 + 100 * np.sin(xs / 3.0) * np.cos(ys / 5.0)
    return card.astype(np.float64)


def test_ssim_identity():
    card = _test_card()
    assert ssim(card, card) == pytest.approx(1.0, abs=1e-12)


def test_ssim_negative_image_far_from_one():
    card = _test_card()
    assert ssim(card, 255.0 - card) < 0.1


def test_ssim_matches_reference_implementation():
    skimage = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(16)
    a = rng.uniform(0, 255, (48, 48))
    b = np.clip(a + rng.normal(0, 20, a.shape), 0, 255)
    ours = ssim(a, b)
    theirs = skimage.structural_similarity(
        a, b, data_range=255.0, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False,
    )
    assert ours == pytest.approx(theirs, abs=1e-7)
    card = _test_card()
    neg = 255.0 - card
    theirs_neg = skimage.structural_similarity(
        card, neg, data_range=255.0, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False,
    )
    assert ssim(card, neg) == pytest.approx(theirs_neg, abs=1e-7)


def test_metric_report_keys_and_self_values():
    gt = HdrImage(np.abs(_test_card()[..., None]).repeat(3, axis=2).astype(np.float32) / 64.0)
    report = metric_report(gt, gt)
    assert set(report) == {"si_mse", "log_psnr", "ssim", "kappa"}
    assert report["si_mse"] == 0.0
    assert report["ssim"] == pytest.approx(1.0, abs=1e-12)
    assert report["log_psnr"] == LOG_PSNR_CAP_DB
    assert report["kappa"] == pytest.approx(1.0, abs=1e-12)


def test_losses_permutation_invariant():
    pred, gt = random_pair(17, shape=(6, 6, 3))
    perm = np.random.default_rng(18).permutation(36)
    ps = pred.reshape(36, 3)[perm].reshape(6, 6, 3)
    gs = gt.reshape(36, 3)[perm].reshape(6, 6, 3)
    assert scale_invariant_loss(ps, gs) == pytest.approx(
        scale_invariant_loss(pred, gt), rel=1e-12)
