import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apirnet.kspace import ComplexGrid, dft_forward, make_masks, reconstruct_image
from apirnet.phantom import (
    COIL_GRADIENT_BOUND,
    Disk,
    PhantomSpec,
    add_noise,
    benchmark_spec,
    make_coils,
    make_phantom,
    simulate_kspace,
)
from apirnet.errors import SpecError


class TestPhantom:
    def test_zero_radius(self):
        img, support = make_phantom(PhantomSpec((16, 16), radius=0.0))
        assert not img.any() and not support.any()

    def test_full_grid_disk(self):
        img, _ = make_phantom(PhantomSpec((16, 16), radius=100.0, intensity=1.0))
        assert np.array_equal(img, np.ones((16, 16)))

    @pytest.mark.parametrize("r", [3.0, 10.5, 20.0, 31.9])
    def test_disk_pixel_count(self, r):
        img, support = make_phantom(PhantomSpec((64, 64), radius=r))
        count = sum(
            1 for i in range(64) for j in range(64) if (i - 32) ** 2 + (j - 32) ** 2 <= r * r
        )
        assert support.sum() == count
        assert (img > 0).sum() == count

    def test_benchmark_is_nonnegative_with_inserts(self):
        img, support = make_phantom(benchmark_spec())
        assert img.min() >= 0
        assert set(np.unique(np.round(img[support], 6))) == {0.3, 1.0, 1.8}

    def test_resolution_bars(self):
        img, _ = make_phantom(PhantomSpec((64, 64), kind="resolution-bars", radius=28, bar_width=2, bar_count=4))
        row = img[32, 24:40]
        assert set(np.round(row, 6)) == {1.0, 0.3}

    def test_spec_validation(self):
        with pytest.raises(SpecError):
            PhantomSpec((16, 16), radius=-1)
        with pytest.raises(SpecError):
            PhantomSpec((16, 16), inserts=(Disk((0, 0), 2, -0.5),))
        with pytest.raises(SpecError):
            PhantomSpec((16, 16), kind="cube")

    def test_dict_round_trip(self):
        spec = benchmark_spec()
        assert PhantomSpec.from_dict(spec.to_dict()) == spec


class TestCoils:
    def test_uniform_single(self):
        assert np.array_equal(make_coils((8, 8), 1, uniform=True).maps, np.ones((1, 8, 8)))

    def test_deterministic(self):
        a = make_coils((32, 32), 8, seed=3).maps
        b = make_coils((32, 32), 8, seed=3).maps
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, make_coils((32, 32), 8, seed=4).maps)

    def test_positive_coverage_on_support(self):
        coils = make_coils((64, 64), 8, seed=0)
        _, support = make_phantom(benchmark_spec())
        sos = coils.sum_of_squares()
        worst = min(sos[i, j] for i, j in zip(*np.nonzero(support)))
        assert worst > 0

    @pytest.mark.parametrize("n", [16, 32, 64, 96])
    def test_smooth(self, n):
        maps = make_coils((n, n), 8, seed=1).maps
        g0, g1 = np.gradient(maps, axis=(1, 2))
        assert np.abs(g0).max() * n <= COIL_GRADIENT_BOUND
        assert np.abs(g1).max() * n <= COIL_GRADIENT_BOUND

    def test_distinct_sensitivities(self):
        maps = make_coils((32, 32), 8, seed=0).maps
        flat = maps.reshape(8, -1)
        assert np.linalg.matrix_rank(flat) == 8


class TestSimulate:
    def test_uniform_single_coil(self):
        img, _ = make_phantom(benchmark_spec((16, 16)))
        k = simulate_kspace(img, make_coils((16, 16), 1, uniform=True))
        expected = dft_forward(ComplexGrid(img[None].astype(complex), "image"))
        assert np.array_equal(k.data, expected.data)

    def test_zero_phantom(self):
        k = simulate_kspace(np.zeros((8, 8)), make_coils((8, 8), 2, seed=0))
        assert not k.data.any()

    @given(st.integers(0, 1000), st.floats(2.0, 14.0))
    @settings(max_examples=15, deadline=None)
    def test_forward_model_round_trip(self, seed, radius):
        img, support = make_phantom(PhantomSpec((32, 32), radius=radius, edge_width=0.5))
        coils = make_coils((32, 32), 8, seed=seed)
        recon = reconstruct_image(simulate_kspace(img, coils))
        expected = np.sqrt(coils.sum_of_squares() / 8) * img
        np.testing.assert_allclose(recon[support], expected[support], rtol=1e-8)


class TestNoise:
    def setup_method(self):
        img, _ = make_phantom(benchmark_spec())
        self.k = simulate_kspace(img, make_coils((64, 64), 8, seed=0))

    def test_sigma_zero(self):
        assert np.array_equal(add_noise(self.k, np.ones((64, 64)), 0.0, 1).data, self.k.data)

    def test_zero_mask(self):
        assert np.array_equal(add_noise(self.k, np.zeros((64, 64)), 0.3, 1).data, self.k.data)

    def test_statistics(self):
        noisy = add_noise(self.k, np.ones((64, 64)), 0.1, seed=7)
        d = (noisy.data - self.k.data).ravel()
        assert d.size >= 32768
        assert 0.095 <= d.real.std() <= 0.105
        assert 0.095 <= d.imag.std() <= 0.105

    def test_locality_and_determinism(self):
        m = make_masks((64, 64), (2, 2), (24, 24)).m_sampled
        a = add_noise(self.k, m, 0.05, seed=11)
        b = add_noise(self.k, m, 0.05, seed=11)
        assert a.data.tobytes() == b.data.tobytes()
        assert np.array_equal(a.data[:, ~m], self.k.data[:, ~m])
        assert np.all(a.data[:, m] != self.k.data[:, m])

    def test_same_draws_regardless_of_mask(self):
        m = make_masks((64, 64), (2, 2), (24, 24)).m_sampled
        full = add_noise(self.k, np.ones((64, 64)), 0.05, seed=3)
        part = add_noise(self.k, m, 0.05, seed=3)
        assert np.array_equal(full.data[:, m], part.data[:, m])
