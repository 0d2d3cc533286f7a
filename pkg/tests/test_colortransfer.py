"""Color-compensation fitting: recovery, optimality, oracle agreement."""

import numpy as np
import pytest

from dscshadow.colortransfer import (TransferMatrix, TransferFitError,
                                     apply_transfer, fit_transfer, region_error)


def normal_equations_fit(free_pixels, shadow_pixels):
    """Independent least-squares oracle via the normal equations."""
    a = np.hstack([free_pixels, np.ones((free_pixels.shape[0], 1))])
    sol = np.linalg.solve(a.T @ a, a.T @ shadow_pixels)
    return sol.T


def random_pair(rng, h=8, w=8, noise=0.0):
    """(shadow, free, mask, planted) where shadow = planted(free) + noise on
    the masked region."""
    free = rng.uniform(0.0, 255.0, size=(h, w, 3))
    lin = np.eye(3) + rng.uniform(-0.1, 0.1, (3, 3))
    bias = rng.uniform(-10.0, 10.0, 3)
    planted = np.hstack([lin, bias[:, None]])
    shadow = free @ lin.T + bias
    if noise:
        shadow = shadow + rng.normal(0.0, noise, shadow.shape)
    mask = rng.uniform(size=(h, w)) > 0.3
    mask.flat[:4] = True  # keep the region comfortably over-determined
    return shadow, free, mask, planted


class TestFit:
    def test_identity_pair(self, rng):
        free = rng.uniform(0.0, 255.0, size=(6, 6, 3))
        t = fit_transfer(free.copy(), free, np.ones((6, 6), dtype=bool))
        assert np.abs(t.m - TransferMatrix.IDENTITY).max() < 1e-9
        assert t.residual < 1e-10
        assert t.sample_count == 36

    def test_planted_recovery_noiseless(self, rng):
        for _ in range(20):
            shadow, free, mask, planted = random_pair(rng)
            t = fit_transfer(shadow, free, mask)
            assert np.abs(t.m - planted).max() < 1e-6
            assert t.residual < 1e-10

    def test_matches_normal_equations_oracle(self, rng):
        for _ in range(20):
            shadow, free, mask, _ = random_pair(rng, noise=1.0)
            t = fit_transfer(shadow, free, mask)
            want = normal_equations_fit(free[mask], shadow[mask])
            assert np.abs(t.m - want).max() < 1e-9

    def test_noise_residual_scale(self, rng):
        shadow, free, mask, _ = random_pair(rng, h=64, w=64, noise=1.0)
        t = fit_transfer(shadow, free, mask)
        # per-channel-sample MSE of N(0,1) noise, minus the fitted directions
        assert 0.7 < t.residual < 1.3

    def test_never_worse_than_identity(self, rng):
        ident = TransferMatrix(TransferMatrix.IDENTITY.copy(), 0.0, 0)
        for _ in range(100):
            shadow, free, mask, _ = random_pair(rng, noise=rng.uniform(0.0, 3.0))
            t = fit_transfer(shadow, free, mask)
            e_fit = region_error(shadow, apply_transfer_nc(free, t), mask)
            e_id = region_error(shadow, apply_transfer_nc(free, ident), mask)
            assert e_fit <= e_id + 1e-9

    def test_affine_pairs_fit_exactly(self, rng):
        shadow, free, mask, _ = random_pair(rng)
        assert fit_transfer(shadow, free, mask).residual < 1e-10

    def test_rank_deficient_rejected(self, rng):
        free = np.full((4, 4, 3), 128.0)  # single color: rank 2
        shadow = free * 0.9
        with pytest.raises(TransferFitError):
            fit_transfer(shadow, free, np.ones((4, 4), dtype=bool))

    def test_too_few_pixels_rejected(self, rng):
        shadow, free, _, _ = random_pair(rng)
        mask = np.zeros((8, 8), dtype=bool)
        mask[0, :3] = True
        with pytest.raises(TransferFitError):
            fit_transfer(shadow, free, mask)

    def test_empty_mask_rejected(self, rng):
        shadow, free, _, _ = random_pair(rng)
        with pytest.raises(TransferFitError):
            fit_transfer(shadow, free, np.zeros((8, 8), dtype=bool))


def apply_transfer_nc(image, t):
    """apply_transfer without the gamut clamp, for optimality comparisons."""
    return np.asarray(image, float) @ t.m[:, :3].T + t.m[:, 3]


class TestApply:
    def test_identity(self, rng):
        img = rng.uniform(0.0, 255.0, size=(5, 5, 3))
        t = TransferMatrix(TransferMatrix.IDENTITY.copy(), 0.0, 0)
        np.testing.assert_allclose(apply_transfer(img, t), img, atol=1e-12)

    def test_constant_map(self, rng):
        img = rng.uniform(0.0, 255.0, size=(4, 4, 3))
        m = np.zeros((3, 4))
        m[0, 3] = 10.0
        out = apply_transfer(img, TransferMatrix(m, 0.0, 0))
        np.testing.assert_allclose(out[..., 0], 10.0)
        np.testing.assert_allclose(out[..., 1:], 0.0)

    def test_clamped_to_gamut(self, rng):
        img = rng.uniform(0.0, 255.0, size=(4, 4, 3))
        m = TransferMatrix.IDENTITY.copy() * 3.0
        out = apply_transfer(img, TransferMatrix(m, 0.0, 0))
        assert out.min() >= 0.0 and out.max() <= 255.0

    def test_linear_before_clamp(self, rng):
        lin = np.hstack([np.eye(3) * 0.5 + rng.uniform(-0.05, 0.05, (3, 3)),
                         np.zeros((3, 1))])
        t = TransferMatrix(lin, 0.0, 0)
        x = rng.uniform(0.0, 100.0, size=(3, 3, 3))
        y = rng.uniform(0.0, 100.0, size=(3, 3, 3))
        left = apply_transfer_nc(0.3 * x + 0.6 * y, t)
        right = 0.3 * apply_transfer_nc(x, t) + 0.6 * apply_transfer_nc(y, t)
        np.testing.assert_allclose(left, right, atol=1e-9)

    def test_fit_then_apply_reduces_error(self, rng):
        shadow, free, mask, _ = random_pair(rng, noise=2.0)
        # perturb the pair so identity is clearly suboptimal
        free = free * 1.2 + 5.0
        t = fit_transfer(shadow, free, mask)
        before = region_error(shadow, free, mask)
        after = region_error(shadow, apply_transfer_nc(free, t), mask)
        assert after < before

    def test_json_roundtrip(self, rng):
        shadow, free, mask, _ = random_pair(rng)
        t = fit_transfer(shadow, free, mask)
        back = TransferMatrix.from_json(t.to_json())
        assert np.abs(back.m - t.m).max() < 1e-9
        assert back.sample_count == t.sample_count
