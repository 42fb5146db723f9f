import numpy as np
import pytest

from facelayers import (ParameterError, TextureMap, UvMask, read_mask,
                        read_texture, srgb_decode, srgb_encode, write_mask,
                        write_texture)
from facelayers.fileio import (read_container, read_landmarks_csv,
                               read_weight_map, write_container,
                               write_landmarks_csv, write_weight_map)


class TestPfm:
    def test_roundtrip_exact(self, rng, tmp_path):
        # PFM stores float32; float32-representable values round-trip bit-exact
        values = rng.uniform(-2.0, 3.0, (9, 7, 3)).astype(np.float32).astype(np.float64)
        tex = TextureMap(values)
        path = tmp_path / "t.pfm"
        write_texture(tex, path)
        back = read_texture(path)
        np.testing.assert_array_equal(back.data, values)

    def test_single_channel_roundtrip(self, rng, tmp_path):
        values = rng.uniform(0, 1, (5, 5, 1)).astype(np.float32).astype(np.float64)
        path = tmp_path / "g.pfm"
        write_texture(TextureMap(values), path)
        np.testing.assert_array_equal(read_texture(path).data, values)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(ParameterError):
            read_texture(path)


class TestPng:
    def test_endpoints_exact(self, tmp_path):
        tex = TextureMap(np.array([[0.0, 1.0]]).reshape(1, 2, 1))
        path = tmp_path / "e.png"
        write_texture(tex, path)
        back = read_texture(path)
        assert back.data[0, 0, 0] == 0.0
        assert back.data[0, 1, 0] == 1.0

    def test_all_code_values_roundtrip(self, tmp_path):
        # every 8-bit code, decoded to linear, must survive write + read
        codes = np.arange(256) / 255.0
        linear = srgb_decode(codes).reshape(16, 16, 1)
        path = tmp_path / "c.png"
        write_texture(TextureMap(linear), path)
        back = read_texture(path)
        assert np.abs(back.data - linear).max() <= 1.0 / 255.0
        np.testing.assert_allclose(back.data, linear, atol=1e-12)

    def test_roundtrip_equals_quantized_reference(self, rng, tmp_path):
        arr = rng.uniform(0, 1, (8, 8, 3))
        path = tmp_path / "q.png"
        write_texture(TextureMap(arr), path)
        back = read_texture(path)
        reference = srgb_decode(np.rint(srgb_encode(arr) * 255.0) / 255.0)
        np.testing.assert_allclose(back.data, reference, atol=1e-12)

    def test_rejects_rgba(self, tmp_path):
        from PIL import Image

        path = tmp_path / "a.png"
        Image.new("RGBA", (4, 4)).save(path)
        with pytest.raises(ParameterError, match="channel"):
            read_texture(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            read_texture(tmp_path / "absent.png")

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(ParameterError):
            write_texture(TextureMap(np.zeros((2, 2, 3))), tmp_path / "t.exr")


class TestSrgb:
    def test_inverse_pair(self, rng):
        x = rng.uniform(0, 1, 1000)
        np.testing.assert_allclose(srgb_decode(srgb_encode(x)), x, atol=1e-12)

    def test_linear_segment(self):
        assert srgb_encode(np.array([0.002]))[0] == pytest.approx(0.02584, abs=1e-5)


class TestMasks:
    def test_binary_roundtrip_exact(self, tmp_path):
        weights = np.zeros((6, 6))
        weights[2:4, 1:5] = 1.0
        path = tmp_path / "m.png"
        write_mask(UvMask(weights), path)
        np.testing.assert_array_equal(read_mask(path).weights, weights)

    def test_weight_map_quantizes_to_one_step(self, rng, tmp_path):
        tex = TextureMap(rng.uniform(0, 1, (6, 6, 1)))
        path = tmp_path / "w.png"
        write_weight_map(tex, path)
        back = read_weight_map(path)
        assert np.abs(back.data - tex.data).max() <= 0.5 / 255.0 + 1e-12


class TestContainer:
    def test_roundtrip(self, rng, tmp_path):
        arrays = {
            "floats": rng.standard_normal((4, 5)),
            "ints": np.arange(12, dtype=np.int64).reshape(3, 4),
            "vector": rng.standard_normal(7),
        }
        path = tmp_path / "c.bin"
        write_container(path, "TST1", arrays)
        back = read_container(path, "TST1")
        assert set(back) == set(arrays)
        for name in arrays:
            np.testing.assert_array_equal(back[name], arrays[name])
        assert (tmp_path / "c.bin.json").exists()

    def test_magic_checked(self, rng, tmp_path):
        path = tmp_path / "c.bin"
        write_container(path, "TST1", {"x": np.zeros(3)})
        with pytest.raises(ParameterError, match="magic"):
            read_container(path, "OTHR")


class TestLandmarks:
    def test_csv_roundtrip(self, rng, tmp_path):
        points = rng.standard_normal((8, 2))
        path = tmp_path / "lm.csv"
        write_landmarks_csv(points, path)
        np.testing.assert_array_equal(read_landmarks_csv(path), points)

    def test_header_required(self, tmp_path):
        path = tmp_path / "lm.csv"
        path.write_text("0,1.0,2.0\n")
        with pytest.raises(ParameterError):
            read_landmarks_csv(path)
