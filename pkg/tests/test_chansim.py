import numpy as np
import pytest

from ris_skg.chansim import (Dataset, GeometryGrid, LinkGeometry, SystemParams,
                             combined_channel, generate_dataset, load_dataset,
                             sample_direct_channel, sample_probe_round,
                             sample_ris_phase, save_dataset, steering_vector)


@pytest.fixture
def small_params():
    return SystemParams(mx=2, my=2, wavelength=0.1)


def test_params_validation():
    with pytest.raises(ValueError):
        SystemParams(c0=0.0)
    with pytest.raises(ValueError):
        SystemParams(alpha=5.0)
    with pytest.raises(ValueError):
        SystemParams(amp_ae=0.5)
    with pytest.raises(ValueError):
        SystemParams(num_paths=0)
    assert SystemParams().elem_spacing == pytest.approx(0.025)


def test_geometry_validation():
    with pytest.raises(ValueError):
        LinkGeometry(dist=0.5, elev=[0.0], azim=[0.0])
    with pytest.raises(ValueError):
        LinkGeometry(dist=2.0, elev=[2.0], azim=[0.0])
    with pytest.raises(ValueError):
        GeometryGrid(dist_min=0.0)


def test_steering_unit_modulus(small_params):
    rng = np.random.default_rng(0)
    for _ in range(25):
        elev, azim = rng.uniform(-np.pi / 2, np.pi / 2, 2)
        v = steering_vector(elev, azim, small_params)
        np.testing.assert_allclose(np.abs(v), 1.0, rtol=0, atol=1e-14)


def test_steering_aligned_when_grid_coordinates_vanish(small_params):
    # the grid offsets have no component along the first axis, so an
    # arrival direction pointing down that axis sees equal phases
    v = steering_vector(np.pi / 2, 0.0, small_params)
    np.testing.assert_allclose(v, np.ones(4), rtol=0, atol=1e-14)


def test_steering_matches_scalar_expansion(small_params):
    # independent per-element evaluation of the exponent formula
    elev, azim = 0.7, -0.4
    v = steering_vector(elev, azim, small_params)
    k = 2 * np.pi / small_params.wavelength
    d = small_params.elem_spacing
    for m in range(4):
        ygrid = m % small_params.mx
        zgrid = m // small_params.my
        phase = k * d * (np.sin(elev) * np.sin(azim) * ygrid + np.cos(elev) * zgrid)
        assert v[m] == pytest.approx(np.exp(1j * phase), abs=1e-14)


def test_steering_rejects_out_of_range(small_params):
    with pytest.raises(ValueError):
        steering_vector(2.0, 0.0, small_params)


def test_single_path_factorizes(small_params):
    rng = np.random.default_rng(1)
    geom = LinkGeometry(dist=5.0, elev=[0.3], azim=[-0.2])
    g = sample_direct_channel(small_params, geom, rng)
    v = steering_vector(0.3, -0.2, small_params)
    ratios = g / v
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_channel_variance_matches_power_law():
    params = SystemParams(mx=2, my=2, c0=1e-3, alpha=3.0, num_paths=4)
    rng = np.random.default_rng(2)
    k = 40_000
    geom = LinkGeometry(dist=10.0, elev=[0.1, -0.5, 0.9, 0.2], azim=[0.0, 0.4, -0.8, 1.0])
    draws = np.array([sample_direct_channel(params, geom, rng) for _ in range(k)])
    per_elem = np.mean(np.abs(draws) ** 2, axis=0)
    # c0 * d^-alpha = 1e-3 * 1e-3 = 1e-6, three Monte Carlo sigmas
    expected = 1e-6
    mc_sigma = expected * np.sqrt(2.0 / k)
    assert np.all(np.abs(per_elem - expected) < 3 * mc_sigma * np.sqrt(params.m))


def test_variance_scales_with_distance():
    params = SystemParams(mx=2, my=2, alpha=3.0, num_paths=2)
    rng = np.random.default_rng(3)
    geom5 = LinkGeometry(dist=5.0, elev=[0.1, 0.2], azim=[0.3, 0.4])
    geom10 = LinkGeometry(dist=10.0, elev=[0.1, 0.2], azim=[0.3, 0.4])
    k = 30_000
    v5 = np.mean([np.mean(np.abs(sample_direct_channel(params, geom5, rng)) ** 2)
                  for _ in range(k)])
    v10 = np.mean([np.mean(np.abs(sample_direct_channel(params, geom10, rng)) ** 2)
                   for _ in range(k)])
    assert v10 / v5 == pytest.approx(2.0 ** -3, rel=0.05)


def test_ris_phase_modulus_and_uniformity():
    params = SystemParams(mx=4, my=4, amp_ae=1e4)
    rng = np.random.default_rng(4)
    w = sample_ris_phase(params, rng)
    np.testing.assert_allclose(np.abs(w), 100.0, rtol=1e-12)

    unit = SystemParams(mx=4, my=4, amp_ae=1.0)
    draws = np.concatenate([np.angle(sample_ris_phase(unit, rng))
                            for _ in range(6250)])  # 1e5 phases
    hist, _ = np.histogram(draws, bins=32, range=(-np.pi, np.pi))
    expected = draws.size / 32
    chi2 = ((hist - expected) ** 2 / expected).sum()
    # chi-square critical value, 31 dof, p = 0.001
    assert chi2 < 61.1


def test_combined_channel_reciprocity_bit_exact():
    rng = np.random.default_rng(5)
    for _ in range(50):
        g_ar = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        g_br = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        w = np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
        assert combined_channel(g_ar, g_br, w) == combined_channel(g_br, g_ar, w)


def test_combined_channel_all_ones_gives_m():
    ones = np.ones(6, dtype=complex)
    assert combined_channel(ones, ones, ones) == pytest.approx(6.0)


def test_combined_channel_matches_elementwise_sum():
    rng = np.random.default_rng(6)
    g_ar = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    g_br = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    w = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    oracle = sum(w[m] * g_ar[m] * g_br[m] for m in range(8))
    assert combined_channel(g_ar, g_br, w) == pytest.approx(oracle, rel=1e-12)


def test_combined_channel_length_mismatch():
    with pytest.raises(ValueError):
        combined_channel(np.ones(3), np.ones(4), np.ones(4))


def test_probe_round_noiseless_reciprocity(small_params):
    params = SystemParams(mx=2, my=2, sigma2=0.0)
    rng = np.random.default_rng(7)
    g_ar = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    g_br = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w = sample_ris_phase(params, rng)
    r = sample_probe_round(g_ar, g_br, w, params, rng)
    assert r.y_a / r.x_b == pytest.approx(r.y_b / r.x_a, rel=1e-12)
    assert r.y_a / r.x_b == pytest.approx(r.g_ab, rel=1e-12)
    # cross-multiplication identity without noise
    assert r.y_a * r.x_a == pytest.approx(r.y_b * r.x_b, rel=1e-12)


def test_probe_round_signal_magnitude():
    params = SystemParams(mx=2, my=2, pt=0.1)
    rng = np.random.default_rng(8)
    g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    r = sample_probe_round(g, g, np.ones(4, dtype=complex), params, rng)
    assert abs(r.x_a) == pytest.approx(0.31622776601683794, rel=1e-12)
    assert abs(r.x_b) == pytest.approx(0.31622776601683794, rel=1e-12)


def test_probe_noise_variance():
    params = SystemParams(mx=2, my=2, sigma2=4e-3)
    grid = GeometryGrid(dist_min=2.0, dist_max=3.0)
    rng = np.random.default_rng(9)
    ds = generate_dataset(params, grid, 100_000, rng)
    resid = ds.y_a - ds.g_ab * ds.x_b
    var = np.mean(np.abs(resid) ** 2)
    assert var == pytest.approx(4e-3, rel=0.03)


def test_dataset_determinism_and_split():
    params = SystemParams(mx=2, my=2)
    grid = GeometryGrid()
    ds1 = generate_dataset(params, grid, 10, np.random.default_rng(11))
    ds2 = generate_dataset(params, grid, 10, np.random.default_rng(11))
    assert (ds1.x_a == ds2.x_a).all()
    assert (ds1.y_r_b == ds2.y_r_b).all()
    assert (ds1.g_ab == ds2.g_ab).all()
    assert ds1.split("train").n == 7
    assert ds1.split("val").n == 2
    assert ds1.split("test").n == 1


def test_dataset_geometry_bounds():
    params = SystemParams(mx=2, my=2)
    grid = GeometryGrid(dist_min=1.0, dist_max=200.0)
    ds = generate_dataset(params, grid, 500, np.random.default_rng(12))
    assert ds.dist_a.min() >= 1.0 and ds.dist_a.max() <= 200.0
    assert ds.dist_b.min() >= 1.0 and ds.dist_b.max() <= 200.0


def test_dataset_round_view():
    params = SystemParams(mx=2, my=2)
    ds = generate_dataset(params, GeometryGrid(), 5, np.random.default_rng(13))
    r = ds.round(2)
    assert r.x_a == ds.x_a[2]
    np.testing.assert_array_equal(r.w, ds.w[2])


def test_dataset_persistence_round_trip(tmp_path):
    params = SystemParams(mx=2, my=2, amp_ae=100.0, sigma2=1e-9)
    ds = generate_dataset(params, GeometryGrid(), 64, np.random.default_rng(14))
    path = tmp_path / "rounds.bin"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.n == 64 and back.m == 4
    for field in ("x_a", "x_b", "y_a", "y_b", "y_r_a", "y_r_b", "w", "g_ab"):
        np.testing.assert_array_equal(getattr(back, field), getattr(ds, field))
    assert back.params.amp_ae == params.amp_ae
    assert back.split_fractions == ds.split_fractions


def test_dataset_rejects_bad_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_dataset(path)
