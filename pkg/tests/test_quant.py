"""Quantitative maps and metrics against closed forms and direct oracles."""

import numpy as np
import pytest

from megre.metrics import compute_metrics, conv2_same, hfen, log_kernel, psnr, roi_stats, sharpness
from megre.phantom import Ellipse, MultiEchoImage, PhantomSpec, generate_phantom
from megre.qmaps import echo_combine, fit_field, fit_r2star, quant_maps


def phantom(r2=30.0, f_hz=20.0, echo_times=(0.004, 0.009, 0.014, 0.019, 0.024)):
    spec = PhantomSpec(
        shape=(32, 32),
        ellipses=[Ellipse(center=(0, 0), axes=(0.7, 0.7), m0=1.0, r2star=r2, field_hz=f_hz, phi0=0.2)],
    )
    return generate_phantom(spec, list(echo_times))


class TestEchoCombine:
    def test_single_echo_unit_magnitude(self):
        img = MultiEchoImage(np.full((1, 12, 12), 1j), [0.005])
        assert np.allclose(echo_combine(img), 1.0)

    def test_four_unit_echoes_give_two(self):
        data = np.stack([np.exp(1j * k) * np.ones((8, 8)) for k in range(4)])
        img = MultiEchoImage(data, [0.004, 0.008, 0.012, 0.016])
        assert np.allclose(echo_combine(img), 2.0)

    def test_closed_form_on_phantom(self):
        img, maps = phantom(r2=40.0, f_hz=0.0)
        te = img.echo_times
        inside = maps["m0"] > 0
        want = np.sqrt(np.sum(np.exp(-2 * 40.0 * te)))
        assert np.allclose(echo_combine(img)[inside], want)


class TestR2Star:
    def test_two_echo_closed_form(self):
        img, maps = phantom(r2=25.0, echo_times=(0.005, 0.010))
        r2, valid = fit_r2star(img)
        inside = maps["m0"] > 0
        assert np.abs(r2[inside & valid] - 25.0).max() < 1e-9

    def test_ten_echo_noiseless_recovery(self):
        te = tuple(0.003 + 0.0035 * k for k in range(10))
        img, maps = phantom(r2=30.0, echo_times=te)
        r2, valid = fit_r2star(img)
        inside = maps["m0"] > 0
        assert np.abs(r2[inside & valid] - 30.0).max() < 1e-9

    def test_zero_signal_voxel_masked(self):
        img, maps = phantom()
        r2, valid = fit_r2star(img)
        outside = maps["m0"] == 0
        assert not valid[outside].any()
        assert np.all(r2[outside] == 0.0)

    def test_needs_two_echoes(self):
        img, _ = phantom(echo_times=(0.005,))
        with pytest.raises(ValueError):
            fit_r2star(img)


class TestField:
    def test_noiseless_recovery(self):
        img, maps = phantom(f_hz=20.0, echo_times=(0.004, 0.009, 0.014))
        field, valid = fit_field(img)
        inside = maps["m0"] > 0
        assert np.abs(field[inside & valid] - 20.0).max() < 1e-9

    def test_zero_field(self):
        img, maps = phantom(f_hz=0.0)
        field, valid = fit_field(img)
        assert np.abs(field[valid]).max() < 1e-9

    def test_aliasing_wraps_and_is_flagged(self):
        # dTE = 5 ms -> Nyquist 100 Hz; 110 Hz aliases to -90 Hz
        img, maps = phantom(f_hz=110.0, echo_times=(0.005, 0.010, 0.015))
        field, valid = fit_field(img)
        inside = maps["m0"] > 0
        assert np.abs(field[inside] + 90.0).max() < 1e-6  # documented wrong answer
        # 96 Hz stays under Nyquist but crosses the 0.95*pi guard -> flagged
        img2, maps2 = phantom(f_hz=96.0, echo_times=(0.005, 0.010, 0.015))
        field2, valid2 = fit_field(img2)
        inside2 = maps2["m0"] > 0
        assert not valid2[inside2].any()
        assert np.abs(field2[inside2] - 96.0).max() < 1e-6  # un-aliased, still excluded

    def test_quant_maps_bundle(self):
        img, maps = phantom()
        q = quant_maps(img)
        inside = maps["m0"] > 0
        assert np.abs(q.r2star[inside & q.r2star_valid] - 30.0).max() < 1e-6
        assert np.abs(q.field[inside & q.field_valid] - 20.0).max() < 1e-6


class TestMetrics:
    def test_identical_images(self, rng):
        x = rng.random((24, 24))
        m = compute_metrics(x, x)
        assert m.rmse == 0.0
        assert m.hfen == 0.0
        assert m.ssim == pytest.approx(1.0, abs=1e-12)
        assert m.psnr == float("inf")

    def test_constant_shift_psnr(self, rng):
        ref = rng.random((20, 20))
        ref[0, 0] = 1.0  # pins max(ref)
        x = ref + 0.1
        assert psnr(x, ref) == pytest.approx(20.0, abs=1e-9)

    def test_doubled_image_rmse_100(self, rng):
        ref = rng.random((16, 16)) + 0.5
        m = compute_metrics(2 * ref, ref)
        assert m.rmse == pytest.approx(100.0, rel=1e-12)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics(np.ones((12, 12)), np.zeros((12, 12)))

    def test_rmse_psnr_permutation_invariant(self, rng):
        x, ref = rng.random((15, 15)), rng.random((15, 15)) + 0.2
        perm = rng.permutation(15 * 15)
        xp = x.reshape(-1)[perm].reshape(15, 15)
        refp = ref.reshape(-1)[perm].reshape(15, 15)
        assert psnr(xp, refp) == pytest.approx(psnr(x, ref), rel=1e-12)
        a = compute_metrics(x, ref)
        b = compute_metrics(xp, refp)
        assert b.rmse == pytest.approx(a.rmse, rel=1e-12)

    def test_metrics_match_direct_formulas(self, rng):
        x, ref = rng.random((24, 24)), rng.random((24, 24)) + 0.3
        m = compute_metrics(x, ref)
        rmse_direct = 100.0 * np.sqrt(((x - ref) ** 2).sum()) / np.sqrt((ref**2).sum())
        assert m.rmse == pytest.approx(rmse_direct, abs=1e-10)
        psnr_direct = 20.0 * np.log10(ref.max() / np.sqrt(((x - ref) ** 2).mean()))
        assert m.psnr == pytest.approx(psnr_direct, abs=1e-10)

    def test_hfen_matches_loop_convolution(self, rng):
        x, ref = rng.random((20, 20)), rng.random((20, 20)) + 0.1
        k = log_kernel()
        kh = k.shape[0]
        ph = kh // 2

        def conv_loop(img):
            out = np.zeros_like(img)
            padded = np.pad(img, ph)
            kf = k[::-1, ::-1]
            for i in range(img.shape[0]):
                for j in range(img.shape[1]):
                    out[i, j] = np.sum(padded[i : i + kh, j : j + kh] * kf)
            return out

        want = 100.0 * np.linalg.norm(conv_loop(x) - conv_loop(ref)) / np.linalg.norm(conv_loop(ref))
        assert hfen(x, ref) == pytest.approx(want, abs=1e-10)

    def test_log_kernel_properties(self):
        k = log_kernel()
        assert k.shape == (15, 15)
        assert abs(k.sum()) < 1e-12  # zero response to flat images
        assert np.array_equal(k, k.T)
        flat = conv2_same(np.ones((20, 20)), k)
        assert np.abs(flat[7:13, 7:13]).max() < 1e-12  # away from the border


class TestRoi:
    def test_constant_map(self):
        m = np.full((10, 10), 3.5)
        mask = np.zeros((10, 10), bool)
        mask[4:6, 4:6] = True
        assert roi_stats(m, mask) == (3.5, 0.0)

    def test_two_voxel_values(self):
        m = np.zeros((4, 4))
        m[1, 1], m[2, 2] = 0.0, 2.0
        mask = np.zeros((4, 4), bool)
        mask[1, 1] = mask[2, 2] = True
        mean, std = roi_stats(m, mask)
        assert (mean, std) == (1.0, 1.0)

    def test_phantom_roi_exact(self):
        img, maps = phantom(r2=30.0)
        r2, valid = fit_r2star(img)
        roi = (maps["m0"] > 0) & valid
        roi[:2] = False  # stay inside
        mean, std = roi_stats(r2, roi)
        assert mean == pytest.approx(30.0, abs=1e-9)
        assert std < 1e-9

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            roi_stats(np.ones((4, 4)), np.zeros((4, 4)))


class TestSharpness:
    def test_constant_map_zero(self):
        roi = np.zeros((10, 10), bool)
        roi[4:6, 4:6] = True
        assert sharpness(np.full((10, 10), 2.0), roi) == 0.0

    def test_indicator_roi_gives_one(self):
        roi = np.zeros((10, 10), bool)
        roi[4:7, 4:7] = True
        img = roi.astype(float)
        assert sharpness(img, roi) == 1.0

    def test_blur_reduces_sharpness_monotonically(self):
        roi = np.zeros((24, 24), bool)
        roi[10:14, 10:14] = True
        img = roi.astype(float)

        def blur(im, reps):
            k = np.ones((3, 3)) / 9.0
            for _ in range(reps):
                im = conv2_same(im, k)
            return im

        s1 = sharpness(blur(img, 1), roi)
        s2 = sharpness(blur(img, 3), roi)
        assert 0.0 < s2 < s1 < 1.0

    def test_border_roi_rejected(self):
        roi = np.zeros((8, 8), bool)
        roi[0, 3] = True
        with pytest.raises(ValueError):
            sharpness(np.ones((8, 8)), roi)
