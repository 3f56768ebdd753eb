import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from revanon.errors import InvalidArgument
from revanon.imaging import (DesensitizeMethod, add_gaussian_noise, blur, desensitize,
                             gaussian_noise_sample, load_image, pixelate, resize, save_image)


def rand_img(h, w, seed=0):
    return np.random.default_rng(seed).random((h, w, 3))


def brute_box(img, k):
    h, w, _ = img.shape
    lo = k // 2
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            acc = np.zeros(3)
            for di in range(-lo, k - lo):
                for dj in range(-lo, k - lo):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    acc += img[ii, jj]
            out[i, j] = acc / (k * k)
    return out


def brute_pixelate(img, b):
    out = np.empty_like(img)
    h, w, _ = img.shape
    for r in range(0, h, b):
        for c in range(0, w, b):
            tile = img[r:r + b, c:c + b]
            out[r:r + b, c:c + b] = tile.reshape(-1, 3).mean(0)
    return out


images = arrays(np.float64, st.tuples(st.integers(4, 20), st.integers(1, 20), st.just(3)),
                elements=st.floats(0, 1))


class TestResize:
    def test_constant_is_fixed_point(self):
        img = np.full((17, 9, 3), 0.37)
        np.testing.assert_allclose(resize(img, 5, 23), 0.37)

    def test_identity(self):
        img = rand_img(256, 128)
        np.testing.assert_array_equal(resize(img, 256, 128), img)

    def test_checkerboard_halving_gives_block_means(self):
        board = (np.indices((4, 4)).sum(0) % 2).astype(float)
        img = np.repeat(board[:, :, None], 3, axis=2)
        # centres of the 2x2 output land between input pixels -> equal weights
        np.testing.assert_allclose(resize(img, 2, 2), 0.5)
        ramp = np.arange(16, dtype=float).reshape(4, 4) / 15
        img = np.repeat(ramp[:, :, None], 3, axis=2)
        expected = ramp.reshape(2, 2, 2, 2).mean(axis=(1, 3))
        np.testing.assert_allclose(resize(img, 2, 2)[:, :, 0], expected)

    def test_bad_dims(self):
        with pytest.raises(InvalidArgument):
            resize(rand_img(4, 4), 0, 3)

    @given(images, st.integers(1, 30), st.integers(1, 30))
    @settings(max_examples=30, deadline=None)
    def test_range(self, img, h, w):
        out = resize(img, h, w)
        assert out.shape == (h, w, 3)
        assert out.min() >= 0 and out.max() <= 1


class TestBlur:
    def test_constant(self):
        np.testing.assert_allclose(blur(np.full((30, 20, 3), 0.6)), 0.6)

    def test_kernel_one(self):
        img = rand_img(8, 8)
        np.testing.assert_array_equal(blur(img, 1), img)

    @pytest.mark.parametrize("k", [12, 3, 4])
    def test_matches_brute_force(self, k):
        img = rand_img(24, 24, seed=k)
        np.testing.assert_allclose(blur(img, k), brute_box(img, k), atol=1e-12)

    def test_kernel_too_large(self):
        with pytest.raises(InvalidArgument):
            blur(rand_img(8, 6), 9)
        blur(rand_img(8, 6), 8)

    def test_gaussian_option(self):
        img = rand_img(32, 16)
        out = blur(img, 12, shape="gaussian")
        assert out.shape == img.shape and out.std() < img.std()


class TestPixelate:
    def test_block_one(self):
        img = rand_img(9, 7)
        np.testing.assert_array_equal(pixelate(img, 1), img)

    def test_constant(self):
        np.testing.assert_allclose(pixelate(np.full((50, 30, 3), 0.2), 24), 0.2)

    def test_matches_brute_force(self):
        img = rand_img(256, 128, seed=3)
        np.testing.assert_allclose(pixelate(img, 24), brute_pixelate(img, 24), atol=1e-12)

    def test_tile_constant_image_is_fixed(self):
        tiles = rand_img(3, 2)
        img = np.repeat(np.repeat(tiles, 8, axis=0), 8, axis=1)
        np.testing.assert_allclose(pixelate(img, 8), img, atol=1e-15)


class TestNoise:
    def test_zero_variance(self):
        img = rand_img(5, 5)
        np.testing.assert_array_equal(add_gaussian_noise(img, 0.0, seed=1), img)

    def test_seeded(self):
        img = rand_img(16, 8)
        np.testing.assert_array_equal(add_gaussian_noise(img, 0.5, 7), add_gaussian_noise(img, 0.5, 7))
        assert not np.array_equal(add_gaussian_noise(img, 0.5, 7), add_gaussian_noise(img, 0.5, 8))

    def test_moments(self):
        n = 10 ** 6
        z = gaussian_noise_sample((n,), 0.5, seed=11)
        # 3 sigma bounds: sd(mean) = sqrt(v/n); sd(var) ~ v*sqrt(2/n)
        assert abs(z.mean()) < 3 * np.sqrt(0.5 / n)
        assert abs(z.var() - 0.5) < 3 * 0.5 * np.sqrt(2 / n)

    def test_negative_variance(self):
        with pytest.raises(InvalidArgument):
            add_gaussian_noise(rand_img(2, 2), -0.1)


class TestDesensitize:
    def test_blur_k1(self):
        img = rand_img(6, 6)
        np.testing.assert_array_equal(desensitize(img, DesensitizeMethod("blur", blur_kernel=1)), img)

    def test_pixelate_constant(self):
        img = np.full((40, 20, 3), 0.8)
        np.testing.assert_allclose(desensitize(img, DesensitizeMethod("pixelate")), img)

    def test_noise_dispatch(self):
        img = rand_img(10, 10)
        out = desensitize(img, DesensitizeMethod("gaussian_noise", noise_variance=0.5), seed=4)
        np.testing.assert_array_equal(out, add_gaussian_noise(img, 0.5, 4))

    def test_defaults(self):
        m = DesensitizeMethod()
        assert (m.blur_kernel, m.pixel_block, m.noise_variance) == (12, 24, 0.5)

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgument):
            DesensitizeMethod("mosaic")
        with pytest.raises(InvalidArgument):
            DesensitizeMethod(pixel_block=0)

    @given(images, st.sampled_from(["blur", "pixelate", "gaussian_noise"]), st.integers(0, 99))
    @settings(max_examples=40, deadline=None)
    def test_range_preserving(self, img, kind, seed):
        out = desensitize(img, DesensitizeMethod(kind, blur_kernel=3, pixel_block=4), seed=seed)
        assert np.all(np.isfinite(out)) and out.min() >= 0 and out.max() <= 1

    @given(st.floats(0, 1), st.sampled_from(["blur", "pixelate"]))
    def test_idempotent_on_constants(self, c, kind):
        img = np.full((30, 14, 3), c)
        m = DesensitizeMethod(kind, blur_kernel=5, pixel_block=6)
        once = desensitize(img, m)
        np.testing.assert_allclose(desensitize(once, m), once, atol=1e-12)


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (12, 7, 3)) / 255.0
    save_image(tmp_path / "a.png", img)
    np.testing.assert_array_equal(load_image(tmp_path / "a.png"), img)
