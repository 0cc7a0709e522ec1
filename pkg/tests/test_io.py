import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apirnet.errors import ValidationError
from apirnet.grappa import calibrate, load_kernel, save_kernel
from apirnet.io import (
    grid_nbytes,
    read_grid,
    read_mask,
    read_masks,
    read_pgm,
    read_real,
    window_to_uint16,
    write_grid,
    write_mask,
    write_masks,
    write_pgm,
    write_real,
)
from apirnet.kspace import ComplexGrid, make_masks


class TestGrid:
    @given(st.integers(0, 1000), st.sampled_from([(1, 4, 5), (3, 6, 6), (2, 3, 4, 5)]))
    @settings(max_examples=15, deadline=None)
    def test_round_trip_float32_exact(self, seed, shape):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        data = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(np.complex64)
        with tempfile.TemporaryDirectory() as d:
            write_grid(Path(d) / "g", ComplexGrid(data, "image"))
            back = read_grid(Path(d) / "g")
        assert back.domain == "image"
        assert np.array_equal(back.data, data.astype(np.complex128))

    def test_blob_size_from_header(self, tmp_path):
        g = ComplexGrid(np.ones((8, 16, 12), complex))
        json_path, blob = write_grid(tmp_path / "k", g)
        header = json.loads(json_path.read_text())
        assert header == {"shape": [16, 12], "channels": 8, "domain": "kspace"}
        assert blob.stat().st_size == grid_nbytes(header) == 8 * 16 * 12 * 8

    def test_little_endian_layout(self, tmp_path):
        g = ComplexGrid(np.array([[[1.5 - 2j, 0.25 + 0j]]]))
        _, blob = write_grid(tmp_path / "k", g)
        assert blob.read_bytes() == np.array([1.5, -2.0, 0.25, 0.0], dtype="<f4").tobytes()

    def test_truncated_blob(self, tmp_path):
        _, blob = write_grid(tmp_path / "k", ComplexGrid(np.ones((2, 4, 4), complex)))
        blob.write_bytes(blob.read_bytes()[:-8])
        with pytest.raises(ValidationError):
            read_grid(tmp_path / "k")

    def test_accepts_extension_paths(self, tmp_path):
        write_grid(tmp_path / "k", ComplexGrid(np.ones((1, 2, 2), complex)))
        assert read_grid(tmp_path / "k.json").shape == (1, 2, 2)
        assert read_grid(tmp_path / "k.c64").shape == (1, 2, 2)

    def test_real_images(self, tmp_path):
        img = np.arange(12.0).reshape(3, 4)
        write_real(tmp_path / "r", img)
        assert np.array_equal(read_real(tmp_path / "r"), img)


class TestMasks:
    def test_round_trip(self, tmp_path):
        m = make_masks((20, 18), (3, 2), (6, 4))
        write_masks(tmp_path / "m", m)
        back = read_masks(tmp_path / "m")
        for name in ("m_sampled", "m_pattern", "m_acs"):
            assert np.array_equal(getattr(back, name), getattr(m, name))
        assert (back.accel, back.acs_size, back.offsets) == (m.accel, m.acs_size, m.offsets)

    def test_union_checked(self, tmp_path):
        m = make_masks((8, 8), (2, 2), (2, 2))
        write_masks(tmp_path / "m", m)
        write_mask(tmp_path / "m" / "m_sampled", m.m_pattern, accel=[2, 2], acs_size=[2, 2], offsets=list(m.offsets))
        with pytest.raises(ValidationError):
            read_masks(tmp_path / "m")

    def test_non_binary_rejected(self, tmp_path):
        write_mask(tmp_path / "x", np.ones((2, 2)))
        (tmp_path / "x.u8").write_bytes(bytes([0, 1, 2, 1]))
        with pytest.raises(ValidationError):
            read_mask(tmp_path / "x")


class TestPGM:
    def test_affine_oracle(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(-1, 3, (7, 9))
        lo, hi = -0.5, 2.0
        write_pgm(tmp_path / "a.pgm", img, (lo, hi))
        raster = read_pgm(tmp_path / "a.pgm")
        for v, r in zip(img.ravel(), raster.ravel()):
            expected = 0 if v <= lo else 65535 if v >= hi else int(round((v - lo) / (hi - lo) * 65535))
            assert abs(int(r) - expected) <= 1

    def test_constant_image(self):
        assert np.array_equal(window_to_uint16(np.full((3, 3), 4.2)), np.zeros((3, 3), np.uint16))

    def test_data_range_uses_full_scale(self):
        raster = window_to_uint16(np.linspace(2, 5, 12).reshape(3, 4))
        assert raster.min() == 0 and raster.max() == 65535

    def test_header_and_size(self, tmp_path):
        path = write_pgm(tmp_path / "b.pgm", np.zeros((5, 6)))
        data = path.read_bytes()
        assert data.startswith(b"P5\n6 5\n65535\n")
        assert len(data) == len(b"P5\n6 5\n65535\n") + 5 * 6 * 2

    def test_binary_byte_resembling_whitespace(self, tmp_path):
        # first pixel encodes to 0x0a0a, which a naive split-based parser would eat
        img = np.array([[0x0A0A, 65535.0, 0.0]])
        write_pgm(tmp_path / "c.pgm", img, (0, 65535))
        assert read_pgm(tmp_path / "c.pgm").tolist() == [[0x0A0A, 65535, 0]]

    def test_inverted_window(self):
        with pytest.raises(ValidationError):
            window_to_uint16(np.zeros((2, 2)), (1.0, 0.0))


def test_kernel_file_sizes(tmp_path):
    rng = np.random.default_rng(1)
    k = ComplexGrid(rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16)))
    kernel = calibrate(k, make_masks((16, 16), (2, 2), (10, 10)), (1, 3, 3), 0.1)
    _, blob = save_kernel(tmp_path / "kern", kernel)
    assert blob.stat().st_size == 3 * (2 * 9 * 2) * 2 * 4
    assert load_kernel(tmp_path / "kern").weights.keys() == kernel.weights.keys()
