import math

import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from facestyle.imagecore import (
    ImageError,
    box_mean,
    gaussian_blur,
    gaussian_kernel,
    load_image,
    load_landmarks,
    load_manifest,
    save_image,
    save_landmarks,
    to_luma,
    write_manifest,
)

unit_floats = st.floats(0.0, 1.0, allow_nan=False, width=64)


# ---------------------------------------------------------------- load/save


def test_load_normalises_8bit(tmp_path):
    raw = np.array([[0, 255], [128, 64]], dtype=np.uint8)
    cv2.imwrite(str(tmp_path / "g.png"), raw)
    img = load_image(tmp_path / "g.png")
    assert img.shape == (2, 2, 1)
    np.testing.assert_array_equal(img[:, :, 0], [[0.0, 1.0], [128 / 255, 64 / 255]])


def test_load_16bit_and_colour_order(tmp_path):
    raw = np.zeros((3, 4, 3), dtype=np.uint16)
    raw[..., 2] = 65535  # red in BGR storage
    raw[..., 0] = 32768
    cv2.imwrite(str(tmp_path / "c.png"), raw)
    img = load_image(tmp_path / "c.png")
    assert img.shape == (3, 4, 3)
    assert np.all(img[..., 0] == 1.0)
    np.testing.assert_allclose(img[..., 2], 32768 / 65535)


def test_full_resolution_sample_count(tmp_path):
    cv2.imwrite(str(tmp_path / "big.png"), np.zeros((1000, 1320, 3), np.uint8))
    assert load_image(tmp_path / "big.png").size == 3_960_000


def test_round_trip_within_one_step(tmp_path, rng):
    img = rng.random((17, 23, 3))
    save_image(tmp_path / "r.png", img)
    back = load_image(tmp_path / "r.png")
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12
    save_image(tmp_path / "r2.png", back)
    np.testing.assert_array_equal(load_image(tmp_path / "r2.png"), back)


def test_load_errors_name_path(tmp_path):
    with pytest.raises(ImageError, match="missing.png"):
        load_image(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageError, match="junk.png"):
        load_image(tmp_path / "junk.png")


# ---------------------------------------------------------------- luma


@pytest.mark.parametrize(
    "rgb, y",
    [((1, 1, 1), 1.0), ((0, 1, 0), 0.7152), ((0.5, 0.5, 0.5), 0.5)],
)
def test_luma_values(rgb, y):
    img = np.array(rgb, dtype=float).reshape(1, 1, 3)
    assert to_luma(img)[0, 0, 0] == pytest.approx(y, abs=1e-12)


def test_luma_passes_gray_through():
    g = np.full((3, 3, 1), 0.3)
    np.testing.assert_array_equal(to_luma(g), g)


@given(arrays(np.float64, (4, 5, 3), elements=unit_floats))
def test_luma_stays_in_unit_range(img):
    y = to_luma(img)
    assert y.min() >= -1e-12 and y.max() <= 1 + 1e-12


# ---------------------------------------------------------------- gaussian


def test_blur_sigma_zero_is_identity(rng):
    img = rng.random((9, 7, 3))
    np.testing.assert_array_equal(gaussian_blur(img, 0), img)


def test_blur_rejects_negative_sigma():
    with pytest.raises(ValueError):
        gaussian_blur(np.zeros((3, 3)), -1)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 3.7, 16.0])
def test_blur_preserves_constants(sigma):
    np.testing.assert_allclose(gaussian_blur(np.full((20, 30), 0.42), sigma), 0.42, atol=1e-12)


def test_blur_impulse_matches_direct_2d_kernel():
    sigma = 2.0
    img = np.zeros((31, 31))
    img[15, 15] = 1.0
    out = gaussian_blur(img, sigma)
    # direct (non-separable) evaluation of the truncated, normalised kernel
    r = math.ceil(3 * sigma)
    expected = np.zeros((31, 31))
    total = 0.0
    for y in range(-r, r + 1):
        for x in range(-r, r + 1):
            v = math.exp(-(x * x + y * y) / (2 * sigma * sigma))
            expected[15 + y, 15 + x] = v
            total += v
    expected /= total
    assert np.max(np.abs(out - expected)) < 1e-4
    assert abs(out.sum() - 1.0) < 1e-3
    # and close to the continuous Gaussian density too
    assert abs(out[15, 15] - 1 / (2 * math.pi * sigma**2)) < 5e-4


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 4.0), st.integers(0, 2**31 - 1))
def test_blur_preserves_mean_with_flat_border(sigma, seed):
    rng = np.random.default_rng(seed)
    r = math.ceil(3 * sigma)
    img = np.full((40 + 2 * r, 40 + 2 * r), 0.5)
    img[r:-r, r:-r] = rng.random((40, 40))
    assert abs(gaussian_blur(img, sigma).mean() - img.mean()) < 1e-4


def test_kernel_is_normalised_and_truncated():
    k = gaussian_kernel(2.5)
    assert len(k) == 2 * 8 + 1
    assert k.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- box mean


def naive_box_mean(img, r):
    h, w = img.shape
    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            win = img[max(0, y - r):min(h, y + r + 1), max(0, x - r):min(w, x + r + 1)]
            out[y, x] = win.sum() / win.size
    return out


def test_box_mean_radius_zero_identity(rng):
    img = rng.random((5, 6))
    np.testing.assert_array_equal(box_mean(img, 0), img)


def test_box_mean_constant():
    np.testing.assert_allclose(box_mean(np.full((11, 13), 0.7), 4), 0.7, atol=1e-12)


def test_box_mean_matches_naive(rng):
    img = rng.random((16, 16))
    assert np.max(np.abs(box_mean(img, 3) - naive_box_mean(img, 3))) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 15), st.integers(0, 2**31 - 1))
def test_box_mean_matches_naive_everywhere(h, w, r, seed):
    img = np.random.default_rng(seed).random((h, w))
    assert np.max(np.abs(box_mean(img, r) - naive_box_mean(img, r))) < 1e-6


def test_box_mean_multichannel(rng):
    img = rng.random((8, 9, 3))
    out = box_mean(img, 2)
    for c in range(3):
        np.testing.assert_allclose(out[:, :, c], naive_box_mean(img[:, :, c], 2), atol=1e-12)


# ---------------------------------------------------------------- landmarks


def _write_points(path, pts):
    save_landmarks(path, pts)
    return path


def test_landmarks_add_border_points(tmp_path, rng):
    pts = rng.uniform([10, 10], [1300, 990], size=(68, 2))
    lm = load_landmarks(_write_points(tmp_path / "a.txt", pts), 1320, 1000)
    assert len(lm) == 76
    assert tuple(lm.points[68]) == (0.0, 0.0)
    corners = {tuple(p) for p in lm.points[68:72]}
    assert corners == {(0.0, 0.0), (1319.0, 0.0), (0.0, 999.0), (1319.0, 999.0)}
    assert np.all(lm.points >= 0) and np.all(lm.points <= [1319, 999])


def test_landmarks_comma_separated(tmp_path):
    lines = "".join(f"{i}, {i + 1}\n" for i in range(68))
    (tmp_path / "c.txt").write_text(lines)
    lm = load_landmarks(tmp_path / "c.txt", 200, 200)
    assert lm.points[5].tolist() == [5.0, 6.0]


def test_landmarks_wrong_count(tmp_path):
    path = _write_points(tmp_path / "b.txt", np.ones((67, 2)))
    with pytest.raises(ImageError, match="expected 68"):
        load_landmarks(path, 100, 100)


def test_landmarks_out_of_bounds_names_index(tmp_path):
    pts = np.full((68, 2), 50.0)
    pts[7] = (-3, 50)
    with pytest.raises(ImageError, match="landmark 7"):
        load_landmarks(_write_points(tmp_path / "o.txt", pts), 100, 100)


def test_landmarks_non_finite(tmp_path):
    pts = np.full((68, 2), 5.0)
    pts[3, 0] = np.nan
    with pytest.raises(ImageError, match="landmark 3"):
        load_landmarks(_write_points(tmp_path / "n.txt", pts), 100, 100)


def test_landmark_rescale_keeps_border_rule(tmp_path, rng):
    pts = rng.uniform(0, 99, size=(68, 2))
    lm = load_landmarks(_write_points(tmp_path / "s.txt", pts), 100, 100)
    small = lm.rescale(0.5, 50, 50)
    assert len(small) == 76
    assert small.points[70].tolist() == [49.0, 49.0]
    np.testing.assert_allclose(small.face, np.clip((pts + 0.5) * 0.5 - 0.5, 0, 49), atol=1e-6)


# ---------------------------------------------------------------- manifest


def test_manifest_round_trip(tmp_path):
    write_manifest(tmp_path / "m.txt", "kelco", [("a.png", "a.txt"), ("b.png", "b.txt")])
    m = load_manifest(tmp_path / "m.txt")
    assert m.style_name == "kelco"
    assert m.K == 2
    assert m.exemplars[1] == (tmp_path / "b.png", tmp_path / "b.txt")


def test_manifest_rejects_bad_entry(tmp_path):
    (tmp_path / "m.txt").write_text("style_name = x\nimage=a.png\n")
    with pytest.raises(ImageError, match="landmarks"):
        load_manifest(tmp_path / "m.txt")
