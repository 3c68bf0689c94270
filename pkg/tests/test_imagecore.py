import json
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octava.imagecore import (
    Calibration,
    GrayImage,
    ImageFormatError,
    RoiSpec,
    load_anisotropic,
    load_image,
    resample,
    save_image,
    select_roi,
    sidecar_calibration,
)

CAL = Calibration(pixel_size_um=10.0)


def _decode_png_gray(path):
    """Minimal independent PNG decoder for non-interlaced grayscale.

    Only supports what the tests need (bit depth 8/16, color type 0,
    filter types 0-4). Deliberately avoids PIL so the loader has an
    oracle that shares no code with it.
    """
    raw = Path(path).read_bytes()
    assert raw[:8] == b"\x89PNG\r\n\x1a\n"
    pos = 8
    width = height = bitdepth = None
    idat = b""
    while pos < len(raw):
        (length,) = struct.unpack(">I", raw[pos : pos + 4])
        ctype = raw[pos + 4 : pos + 8]
        data = raw[pos + 8 : pos + 8 + length]
        if ctype == b"IHDR":
            width, height, bitdepth, color = struct.unpack(">IIBB", data[:10])
            assert color == 0, "oracle handles grayscale only"
        elif ctype == b"IDAT":
            idat += data
        pos += 12 + length
    stream = zlib.decompress(idat)
    nbytes = bitdepth // 8
    stride = width * nbytes
    out = np.zeros((height, width), dtype=np.uint16)
    prev = bytearray(stride)
    pos = 0
    for row in range(height):
        ftype = stream[pos]
        line = bytearray(stream[pos + 1 : pos + 1 + stride])
        pos += 1 + stride
        for i in range(stride):
            a = line[i - nbytes] if i >= nbytes else 0
            b = prev[i]
            c = prev[i - nbytes] if i >= nbytes else 0
            if ftype == 1:
                line[i] = (line[i] + a) & 0xFF
            elif ftype == 2:
                line[i] = (line[i] + b) & 0xFF
            elif ftype == 3:
                line[i] = (line[i] + (a + b) // 2) & 0xFF
            elif ftype == 4:
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                line[i] = (line[i] + pred) & 0xFF
        if bitdepth == 8:
            out[row] = np.frombuffer(bytes(line), dtype=np.uint8)
        else:
            out[row] = np.frombuffer(bytes(line), dtype=">u2")
        prev = line
    return out, bitdepth


class TestLoad:
    def test_8bit_gradient_matches_raw_bytes(self, tmp_path):
        ramp = np.tile(np.arange(64, dtype=np.uint8) * 4, (32, 1))
        from PIL import Image

        p = tmp_path / "ramp.png"
        Image.fromarray(ramp, mode="L").save(p)
        # independent decode straight from the container bytes
        decoded, depth = _decode_png_gray(p)
        assert depth == 8
        np.testing.assert_array_equal(decoded, ramp)
        img = load_image(p, CAL)
        np.testing.assert_allclose(img.pixels, decoded / 255.0, atol=0)

    def test_16bit_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        data = rng.integers(0, 65536, size=(40, 52), dtype=np.uint16)
        img = GrayImage(pixels=data / 65535.0, calibration=CAL)
        p = tmp_path / "x.png"
        save_image(img, p, bit_depth=16)
        back = load_image(p, CAL)
        np.testing.assert_array_equal(
            np.round(back.pixels * 65535.0).astype(np.uint16), data
        )

    def test_8bit_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        data = rng.integers(0, 256, size=(33, 47), dtype=np.uint8)
        img = GrayImage(pixels=data / 255.0, calibration=CAL)
        p = tmp_path / "x.png"
        save_image(img, p, bit_depth=8)
        back = load_image(p, CAL)
        np.testing.assert_array_equal(np.round(back.pixels * 255.0).astype(np.uint8), data)

    def test_rgb_rejected(self, tmp_path):
        from PIL import Image

        p = tmp_path / "rgb.png"
        Image.new("RGB", (32, 32)).save(p)
        with pytest.raises(ImageFormatError):
            load_image(p, CAL)

    def test_garbage_rejected(self, tmp_path):
        p = tmp_path / "bad.png"
        p.write_bytes(b"not an image at all")
        with pytest.raises(ImageFormatError):
            load_image(p, CAL)

    def test_tiff_16bit(self, tmp_path):
        from PIL import Image

        data = np.linspace(0, 65535, 32 * 32, dtype=np.uint16).reshape(32, 32)
        p = tmp_path / "x.tif"
        Image.fromarray(data).save(p)
        img = load_image(p, CAL)
        np.testing.assert_allclose(img.pixels, data / 65535.0)

    def test_sidecar_calibration(self, tmp_path):
        p = tmp_path / "scan.png"
        (tmp_path / "scan.json").write_text(
            json.dumps({"pixel_size_um": 9.3, "axial_span_um": 120.0})
        )
        cal = sidecar_calibration(p)
        assert cal.pixel_size_um == 9.3
        assert cal.axial_span_um == 120.0
        assert sidecar_calibration(tmp_path / "other.png") is None


class TestGrayImageInvariants:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            GrayImage(pixels=np.full((32, 32), 1.5), calibration=CAL)

    def test_rejects_nan(self):
        px = np.zeros((32, 32))
        px[3, 3] = np.nan
        with pytest.raises(ValueError):
            GrayImage(pixels=px, calibration=CAL)

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            GrayImage(pixels=np.zeros((8, 8)), calibration=CAL)

    def test_rejects_bad_pixel_size(self):
        with pytest.raises(ValueError):
            Calibration(pixel_size_um=0.0)

    def test_pixels_read_only(self):
        img = GrayImage(pixels=np.zeros((32, 32)), calibration=CAL)
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1.0


class TestRoi:
    def test_rectangle_crop(self):
        px = np.arange(64 * 64).reshape(64, 64) / (64 * 64 - 1)
        img = GrayImage(pixels=px, calibration=CAL)
        out = select_roi(img, RoiSpec.rectangle(4, 8, 32, 16))
        assert out.pixels.shape == (16, 32)
        np.testing.assert_array_equal(out.pixels, px[8:24, 4:36])
        assert out.effective_area_px == 16 * 32

    def test_rectangle_out_of_bounds(self):
        img = GrayImage(pixels=np.zeros((64, 64)), calibration=CAL)
        with pytest.raises(ValueError):
            select_roi(img, RoiSpec.rectangle(40, 0, 32, 32))

    def test_circle_effective_area_matches_bruteforce(self):
        img = GrayImage(pixels=np.ones((101, 101)), calibration=CAL)
        r = 30
        out = select_roi(img, RoiSpec.circle(50, 50, r))
        assert out.pixels.shape == (2 * r + 1, 2 * r + 1)
        # brute-force disk membership count, no vectorized sharing
        count = 0
        for y in range(2 * r + 1):
            for x in range(2 * r + 1):
                if (y - r) ** 2 + (x - r) ** 2 <= r * r:
                    count += 1
        assert out.effective_area_px == count
        # outside the disk must be exactly zero
        yy, xx = np.mgrid[0 : 2 * r + 1, 0 : 2 * r + 1]
        outside = (yy - r) ** 2 + (xx - r) ** 2 > r * r
        assert np.all(out.pixels[outside] == 0.0)
        assert np.all(out.pixels[~outside] == 1.0)

    def test_circle_out_of_bounds(self):
        img = GrayImage(pixels=np.zeros((64, 64)), calibration=CAL)
        with pytest.raises(ValueError):
            select_roi(img, RoiSpec.circle(5, 32, 10))


def _bilinear_oracle(arr, factor):
    """Scalar-loop bilinear resampler used as the oracle."""
    h, w = arr.shape
    oh, ow = int(round(h * factor)), int(round(w * factor))
    out = np.zeros((oh, ow))
    for i in range(oh):
        for j in range(ow):
            sy = (i + 0.5) / factor - 0.5
            sx = (j + 0.5) / factor - 0.5
            y0 = min(max(int(np.floor(sy)), 0), h - 1)
            x0 = min(max(int(np.floor(sx)), 0), w - 1)
            y1 = min(y0 + 1, h - 1)
            x1 = min(x0 + 1, w - 1)
            fy = min(max(sy - y0, 0.0), 1.0)
            fx = min(max(sx - x0, 0.0), 1.0)
            top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
            bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


class TestResample:
    def test_downsample_checkerboard_matches_oracle(self):
        yy, xx = np.mgrid[0:64, 0:64]
        board = ((yy // 4 + xx // 4) % 2).astype(np.float64)
        img = GrayImage(pixels=board, calibration=CAL)
        out = resample(img, 0.5)
        oracle = _bilinear_oracle(board, 0.5)
        assert out.pixels.shape == (32, 32)
        np.testing.assert_allclose(out.pixels, oracle, atol=1e-12)
        assert out.calibration.pixel_size_um == pytest.approx(20.0)

    def test_upsample_matches_oracle(self):
        rng = np.random.default_rng(3)
        arr = rng.random((24, 24))
        img = GrayImage(pixels=arr, calibration=CAL)
        out = resample(img, 2.0)
        oracle = _bilinear_oracle(arr, 2.0)
        np.testing.assert_allclose(out.pixels, oracle, atol=1e-12)
        assert out.calibration.pixel_size_um == pytest.approx(5.0)

    def test_factor_one_is_identity(self):
        rng = np.random.default_rng(4)
        img = GrayImage(pixels=rng.random((32, 32)), calibration=CAL)
        out = resample(img, 1.0)
        np.testing.assert_array_equal(out.pixels, img.pixels)

    def test_constant_preserved(self):
        img = GrayImage(pixels=np.full((32, 32), 0.625), calibration=CAL)
        out = resample(img, 1.5)
        np.testing.assert_allclose(out.pixels, 0.625, atol=1e-12)

    def test_collapsing_factor_rejected(self):
        img = GrayImage(pixels=np.zeros((32, 32)), calibration=CAL)
        with pytest.raises(ValueError):
            resample(img, 0.1)

    @given(
        factor=st.sampled_from([0.5, 0.75, 1.5, 2.0]),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=30, deadline=None)
    def test_range_preserved(self, factor, seed):
        rng = np.random.default_rng(seed)
        img = GrayImage(pixels=rng.random((32, 32)), calibration=CAL)
        out = resample(img, factor)
        assert out.pixels.min() >= 0.0
        assert out.pixels.max() <= 1.0
        # interpolation can't exceed the input envelope
        assert out.pixels.max() <= img.pixels.max() + 1e-12
        assert out.pixels.min() >= img.pixels.min() - 1e-12

    def test_physical_extent_preserved(self):
        img = GrayImage(pixels=np.zeros((40, 60)), calibration=CAL)
        out = resample(img, 2.0)
        before = img.width * img.calibration.pixel_size_um
        after = out.width * out.calibration.pixel_size_um
        assert after == pytest.approx(before)


class TestAnisotropic:
    def test_resamples_to_finer_pitch(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(5)
        data = rng.integers(0, 256, size=(32, 64), dtype=np.uint8)
        p = tmp_path / "aniso.png"
        Image.fromarray(data, mode="L").save(p)
        # y pitch is twice the x pitch: height should double
        img = load_anisotropic(p, pixel_size_x_um=5.0, pixel_size_y_um=10.0)
        assert img.calibration.pixel_size_um == 5.0
        assert img.pixels.shape == (64, 64)

    def test_isotropic_input_untouched(self, tmp_path):
        from PIL import Image

        data = np.zeros((32, 32), dtype=np.uint8)
        p = tmp_path / "iso.png"
        Image.fromarray(data, mode="L").save(p)
        img = load_anisotropic(p, 5.0, 5.0)
        assert img.pixels.shape == (32, 32)
