import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from qmcnet.metrics import BandMetrics, band_metrics, dataset_band_metrics, edge_density


def test_constant_band():
    m = band_metrics(np.full((8, 8), 3.0))
    assert (m.entropy, m.variance, m.edge_density) == (0.0, 0.0, 0.0)
    assert m.degenerate and m.flatness == 0.0


def test_uniform_histogram_is_eight_bits():
    band = np.arange(256, dtype=float).reshape(16, 16)
    assert band_metrics(band).entropy == pytest.approx(8.0, abs=1e-9)


def test_uniform_noise_variance(rng):
    band = rng.uniform(0, 1, (64, 64))
    assert band_metrics(band).variance == pytest.approx(255**2 / 12, rel=0.05)


def test_two_level_band_closed_form():
    band = np.zeros((4, 4))
    band[:, 2:] = 1.0
    m = band_metrics(band)
    assert m.entropy == pytest.approx(1.0, abs=1e-9)
    assert m.variance == pytest.approx(255**2 / 4)
    # half the pixels are 0: geometric mean = sqrt(1e-12 * (255 + 1e-12))
    assert m.flatness == pytest.approx(np.sqrt(1e-12 * 255) / 127.5, rel=1e-6)


def test_flatness_near_one_for_narrow_spread():
    band = np.linspace(0.0, 1.0, 64).reshape(8, 8) + 1000.0
    m = band_metrics(band)
    assert 0.0 <= m.flatness <= 1.0


def test_edge_density_uses_reflect_sobel(rng):
    band = rng.random((16, 16))
    b01 = (band - band.min()) / (band.max() - band.min())
    mag = np.hypot(ndimage.sobel(b01, 0, mode="reflect"), ndimage.sobel(b01, 1, mode="reflect"))
    assert edge_density(b01) == np.mean(mag > 0.1)


def test_step_edge_density():
    band = np.zeros((10, 10))
    band[:, 5:] = 1.0
    # Sobel responds in the two columns either side of the step
    assert band_metrics(band).edge_density == pytest.approx(0.2)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), h=st.integers(2, 12), w=st.integers(2, 12))
def test_ranges_and_permutation_invariance(seed, h, w):
    r = np.random.default_rng(seed)
    band = r.normal(size=(h, w))
    m = band_metrics(band)
    assert 0 <= m.entropy <= 8 and 0 <= m.flatness <= 1 and 0 <= m.edge_density <= 1
    shuffled = r.permutation(band.ravel()).reshape(h, w)
    p = band_metrics(shuffled)
    assert p.entropy == pytest.approx(m.entropy, abs=1e-12)
    assert p.variance == pytest.approx(m.variance, rel=1e-12)
    assert p.flatness == pytest.approx(m.flatness, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.sampled_from([0.5, 2.0, 4.0, 1024.0]), b=st.floats(-50, 50))
def test_affine_invariance(seed, a, b):
    # power-of-two-like slopes keep the rescaling exact enough for histogram bins
    band = np.random.default_rng(seed).random((9, 9))
    m, n = band_metrics(band), band_metrics(a * band + b)
    assert n.entropy == pytest.approx(m.entropy, abs=1e-9)
    assert n.variance == pytest.approx(m.variance, rel=1e-9)
    assert n.flatness == pytest.approx(m.flatness, rel=1e-6)
    assert n.edge_density == pytest.approx(m.edge_density, abs=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        band_metrics(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        band_metrics(np.array([[0.0, np.nan], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        dataset_band_metrics([], 0)


def test_dataset_mean(rng):
    img = rng.random((2, 8, 8))
    one = band_metrics(img[1])
    agg = dataset_band_metrics([img, img, img], 1)
    np.testing.assert_allclose(
        [agg.entropy, agg.variance, agg.flatness, agg.edge_density],
        [one.entropy, one.variance, one.flatness, one.edge_density],
        rtol=1e-14,
    )
    # H = 2 (four equal levels) and H = 6 (64 equal levels) average to 4
    a = np.repeat(np.arange(4.0), 16).reshape(8, 8)
    b = np.arange(64.0).reshape(8, 8) * 4
    assert dataset_band_metrics([a[None], b[None]], 0).entropy == pytest.approx(4.0, abs=1e-9)


def test_dict_round_trip():
    m = BandMetrics(7.0133, 2911.99, 0.8526, 0.3098)
    assert BandMetrics.from_dict(m.to_dict()) == m
