import numpy as np
import pytest
from PIL import Image

from benfordgan.imageio import (
    GrayImage,
    RgbImage,
    DecodeError,
    TooSmallError,
    encoder_metadata,
    load_image,
    partition_blocks,
    recompress_jpeg,
    to_luma,
)

from helpers import ar1_field


def save_png(path, arr, mode="RGB"):
    Image.fromarray(arr, mode).save(path)
    return path


class TestLoadImage:
    def test_256_png(self, png_256):
        img = load_image(png_256)
        assert (img.width, img.height) == (256, 256)
        assert img.pixels.shape == (256, 256, 3)

    def test_8x8_black(self, tmp_path):
        p = save_png(tmp_path / "black.png", np.zeros((8, 8, 3), dtype=np.uint8))
        img = load_image(p)
        assert img.pixels.shape == (8, 8, 3)
        assert (img.pixels == 0).all()

    def test_too_small(self, tmp_path):
        p = save_png(tmp_path / "thin.png", np.zeros((256, 7, 3), dtype=np.uint8))
        with pytest.raises(TooSmallError):
            load_image(p)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_not_an_image(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"definitely not a png")
        with pytest.raises(DecodeError):
            load_image(p)

    def test_unsupported_format(self, tmp_path):
        p = tmp_path / "img.bmp"
        Image.fromarray(np.zeros((16, 16, 3), dtype=np.uint8), "RGB").save(p, format="BMP")
        with pytest.raises(DecodeError):
            load_image(p)

    def test_grayscale_replicated(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        p = save_png(tmp_path / "gray.png", arr, mode="L")
        img = load_image(p)
        assert (img.pixels[:, :, 0] == arr).all()
        assert (img.pixels[:, :, 0] == img.pixels[:, :, 1]).all()
        assert (img.pixels[:, :, 0] == img.pixels[:, :, 2]).all()


class TestToLuma:
    def test_white(self):
        img = RgbImage(8, 8, np.full((8, 8, 3), 255, dtype=np.uint8))
        assert to_luma(img).luma.max() == pytest.approx(255.0)

    def test_pure_red(self):
        px = np.zeros((8, 8, 3), dtype=np.uint8)
        px[:, :, 0] = 255
        assert to_luma(RgbImage(8, 8, px)).luma[0, 0] == pytest.approx(76.245)

    def test_black(self):
        img = RgbImage(8, 8, np.zeros((8, 8, 3), dtype=np.uint8))
        assert to_luma(img).luma.sum() == 0.0

    def test_monotone_scaling(self, rng):
        px = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        base = to_luma(RgbImage(8, 8, px)).luma
        half = to_luma(RgbImage(8, 8, (px * 0.5).astype(np.uint8)))
        # integer truncation on channels can only lower the result
        assert (half.luma <= base * 0.5 + 1e-9).all()


class TestPartition:
    def test_256_gives_1024_blocks(self, rng):
        img = GrayImage(256, 256, rng.uniform(0, 255, (256, 256)))
        grid = partition_blocks(img)
        assert grid.block_count == 1024

    def test_8x8_identity(self, rng):
        luma = rng.uniform(0, 255, (8, 8))
        grid = partition_blocks(GrayImage(8, 8, luma))
        assert grid.block_count == 1
        assert np.array_equal(grid.blocks[0], luma)

    def test_crop_260x259(self, rng):
        img = GrayImage(260, 259, rng.uniform(0, 255, (259, 260)))
        grid = partition_blocks(img)
        assert grid.block_count == 32 * 32
        assert grid.source_dims == (256, 256)

    def test_content_preserving(self, rng):
        luma = rng.uniform(0, 255, (24, 40))
        grid = partition_blocks(GrayImage(40, 24, luma))
        bh, bw = 3, 5
        rebuilt = (
            grid.blocks.reshape(bh, bw, 8, 8).transpose(0, 2, 1, 3).reshape(24, 40)
        )
        assert np.array_equal(rebuilt, luma)

    def test_pipeline_deterministic(self, png_256):
        a = partition_blocks(to_luma(load_image(png_256)))
        b = partition_blocks(to_luma(load_image(png_256)))
        assert np.array_equal(a.blocks, b.blocks)


class TestRecompress:
    def test_round_trip_dimensions(self, png_256, tmp_path):
        out = tmp_path / "out.jpg"
        recompress_jpeg(png_256, 95, out)
        img = load_image(out)
        assert (img.width, img.height) == (256, 256)

    def test_qf_out_of_range(self, png_256, tmp_path):
        with pytest.raises(ValueError):
            recompress_jpeg(png_256, 0, tmp_path / "out.jpg")
        with pytest.raises(ValueError):
            recompress_jpeg(png_256, 101, tmp_path / "out.jpg")

    def test_qf100_near_lossless(self, tmp_path):
        # mean absolute luma difference stays below 2.0 at quality 100
        rng = np.random.default_rng(3)
        src = tmp_path / "src.png"
        save_png(src, ar1_field(rng).astype(np.uint8), mode="L")
        out = tmp_path / "out.jpg"
        recompress_jpeg(src, 100, out)
        luma_a = to_luma(load_image(src)).luma
        luma_b = to_luma(load_image(out)).luma
        assert np.abs(luma_a - luma_b).mean() < 2.0

    def test_metadata_names_encoder(self):
        meta = encoder_metadata("4:2:0")
        assert "Pillow" in meta["encoder"]
        assert meta["subsampling"] == "4:2:0"
