import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from fdpl.image import (
    ImageFormatError,
    load_image,
    rgb_to_ycbcr,
    save_image,
    ycbcr_to_rgb,
)

from conftest import write_png

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_load_white_pixel(tmp_path):
    img = load_image(write_png(tmp_path / "w.png", np.full((1, 1, 3), 255)))
    assert img.shape == (1, 1, 3)
    assert np.all(img == 1.0)


def test_load_black_corner(tmp_path):
    arr = np.full((2, 2, 3), 90)
    arr[0, 0] = 0
    img = load_image(write_png(tmp_path / "b.png", arr))
    assert np.all(img[0, 0] == 0.0)
    assert np.allclose(img[1, 1], 90 / 255)


def test_grayscale_replicated(tmp_path):
    img = load_image(write_png(tmp_path / "g.png", np.arange(12).reshape(3, 4)))
    assert img.shape == (3, 4, 3)
    assert np.all(img[..., 0] == img[..., 2])


def test_dimensions_match_header(tmp_path):
    path = write_png(tmp_path / "r.png", np.zeros((17, 29, 3)))
    with Image.open(path) as im:
        w, h = im.size
    assert load_image(path).shape[:2] == (h, w)


def test_rejects_16_bit(tmp_path):
    path = tmp_path / "deep.png"
    Image.fromarray(np.full((4, 4), 4000, dtype=np.uint16)).save(path)
    with pytest.raises(ImageFormatError, match="unsupported"):
        load_image(path)


def test_rejects_non_png(tmp_path):
    path = tmp_path / "x.bmp"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path, format="BMP")
    with pytest.raises(ImageFormatError):
        load_image(path)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "nope.png")


def test_save_half_and_clamp(tmp_path):
    save_image(np.full((2, 3), 0.5), tmp_path / "h.png")
    assert np.all(np.asarray(Image.open(tmp_path / "h.png")) == 128)
    save_image(np.array([[1.3, -0.2]]), tmp_path / "c.png")
    assert np.asarray(Image.open(tmp_path / "c.png")).tolist() == [[255, 0]]


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (5, 7), elements=unit))
def test_save_load_roundtrip(tmp_path_factory, plane):
    path = tmp_path_factory.mktemp("rt") / "p.png"
    save_image(plane, path)
    back = load_image(path)[..., 0]
    assert np.max(np.abs(back - plane)) <= 1 / 510 + 1e-12


def test_ycbcr_known_values():
    y, cb, cr = rgb_to_ycbcr(np.array([[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]]))
    assert y[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert (cb[0, 0], cr[0, 0]) == pytest.approx((0.5, 0.5), abs=1e-12)
    assert y[0, 1] == 0.0 and (cb[0, 1], cr[0, 1]) == pytest.approx((0.5, 0.5))
    # BT.601 luma weight of red
    assert y[0, 2] == pytest.approx(0.299, abs=1e-12)


def test_inverse_of_known_values():
    one = np.ones((1, 1))
    assert np.allclose(ycbcr_to_rgb(one, one * 0.5, one * 0.5), 1.0, atol=1e-12)
    _, cb, cr = rgb_to_ycbcr(np.array([[[1.0, 0.0, 0.0]]]))
    assert np.allclose(ycbcr_to_rgb(one * 0.299, cb, cr), [[[1, 0, 0]]], atol=1e-6)


@given(arrays(np.float64, (4, 3, 3), elements=unit))
def test_ycbcr_roundtrip(img):
    assert np.max(np.abs(ycbcr_to_rgb(*rgb_to_ycbcr(img)) - img)) < 1e-6


@given(unit)
def test_achromatic_luminance(v):
    y, _, _ = rgb_to_ycbcr(np.full((1, 1, 3), v))
    assert abs(y[0, 0] - v) < 1e-9


def test_plane_shape_mismatch():
    with pytest.raises(ValueError):
        ycbcr_to_rgb(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))
